#include "chartx/dataset.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

namespace chartx::gen {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(KindMode m) {
  switch (m) {
    case KindMode::Bar: return "bar";
    case KindMode::Pie: return "pie";
    case KindMode::Mixed: return "mixed";
  }
  throw InputError("bad kind mode");
}

KindMode kind_mode_from_string(const std::string& s) {
  if (s == "bar") return KindMode::Bar;
  if (s == "pie") return KindMode::Pie;
  if (s == "mixed") return KindMode::Mixed;
  throw InputError("unknown kind mode: " + s);
}

namespace {

std::string chart_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "chart_%06d.png", index);
  return buf;
}

struct ChartOutput {
  std::string ann_line;
  std::string image_rel;
};

// Layout failures resample with a derived sub-seed; bounded so config errors
// still surface.
RenderResult generate_one(ChartKind kind, uint64_t chart_seed, const GenConfig& config) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    uint64_t s = attempt == 0 ? chart_seed : Rng::derive(chart_seed, static_cast<uint64_t>(attempt));
    ChartSpec spec = sample_chart_spec(kind, s, config);
    try {
      return render_chart(spec);
    } catch (const LayoutError&) {
      continue;
    }
  }
  throw LayoutError("build_dataset: could not lay out chart after 64 attempts");
}

}  // namespace

DatasetManifest build_dataset(const GenConfig& config, KindMode mode, int count,
                              uint64_t seed, const std::string& out_dir) {
  config.validate();
  if (count < 1) throw InputError("build_dataset: count must be >= 1");
  fs::path root(out_dir);
  std::vector<fs::path> created;
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError("build_dataset: cannot create " + (root / "images").string());

  std::vector<ChartOutput> outputs(static_cast<size_t>(count));
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::string fail_msg;
  std::mutex fail_mu;

  unsigned thread_count = static_cast<unsigned>(
      std::min<uint64_t>(env_thread_cap(std::thread::hardware_concurrency()),
                         static_cast<uint64_t>(count)));
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        uint64_t chart_seed = Rng::derive(seed, static_cast<uint64_t>(i));
        ChartKind kind = mode == KindMode::Bar   ? ChartKind::Bar
                         : mode == KindMode::Pie ? ChartKind::Pie
                         : (Rng(chart_seed).bernoulli(0.5) ? ChartKind::Bar : ChartKind::Pie);
        RenderResult r = generate_one(kind, chart_seed, config);
        std::string rel = "images/" + chart_name(i);
        r.annotations.image = rel;
        write_png(r.image, (root / rel).string());
        outputs[static_cast<size_t>(i)] =
            ChartOutput{r.annotations.to_json().dump(), rel};
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(fail_mu);
        failed.store(true);
        if (fail_msg.empty()) fail_msg = e.what();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < std::max(1u, thread_count); ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  if (failed.load()) {
    // remove partial outputs
    for (int i = 0; i < count; ++i) fs::remove(root / "images" / chart_name(i), ec);
    throw IoError("build_dataset: generation failed (" + fail_msg + "); partial outputs removed");
  }

  // single-writer assembly, index order
  DatasetManifest man;
  man.root = out_dir;
  man.seed = seed;
  man.mode = mode;
  man.config_echo = config.to_json();
  {
    std::ofstream ann(root / "annotations.jsonl", std::ios::trunc);
    if (!ann) throw IoError("build_dataset: cannot write annotations.jsonl");
    for (int i = 0; i < count; ++i) {
      ann << outputs[static_cast<size_t>(i)].ann_line << "\n";
      man.entries.push_back(ManifestEntry{outputs[static_cast<size_t>(i)].image_rel, i});
    }
  }
  ordered_json mj;
  mj["root"] = man.root;
  mj["seed"] = man.seed;
  mj["mode"] = to_string(man.mode);
  mj["count"] = count;
  mj["config"] = man.config_echo;
  ordered_json entries = ordered_json::array();
  for (const ManifestEntry& e : man.entries)
    entries.push_back(ordered_json{{"image", e.image}, {"index", e.index}});
  mj["entries"] = std::move(entries);
  std::ofstream mf(root / "manifest.json", std::ios::trunc);
  if (!mf) throw IoError("build_dataset: cannot write manifest.json");
  mf << mj.dump(2) << "\n";
  (void)created;
  return man;
}

DatasetManifest load_manifest(const std::string& dataset_dir) {
  fs::path root(dataset_dir);
  std::ifstream mf(root / "manifest.json");
  if (!mf) throw IoError("load_manifest: cannot open " + (root / "manifest.json").string());
  json j = json::parse(mf, nullptr, false);
  if (j.is_discarded()) throw IoError("load_manifest: bad JSON");
  DatasetManifest man;
  man.root = dataset_dir;
  man.seed = j.at("seed").get<uint64_t>();
  man.mode = kind_mode_from_string(j.at("mode").get<std::string>());
  man.config_echo = j.at("config");
  for (const json& e : j.at("entries"))
    man.entries.push_back(
        ManifestEntry{e.at("image").get<std::string>(), e.at("index").get<int>()});
  return man;
}

std::vector<AnnotationSet> load_annotations(const std::string& dataset_dir) {
  fs::path root(dataset_dir);
  std::ifstream in(root / "annotations.jsonl");
  if (!in) throw IoError("load_annotations: cannot open annotations.jsonl in " + dataset_dir);
  std::vector<AnnotationSet> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("load_annotations: bad JSONL line");
    out.push_back(AnnotationSet::from_json(j));
  }
  return out;
}

}  // namespace chartx::gen
