#include <CLI11.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "chartx/dataset.hpp"
#include "chartx/evalreport.hpp"
#include "chartx/infer.hpp"
#include "chartx/selftest.hpp"
#include "chartx/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Top-level run configuration; unknown keys are rejected.
struct RunConfig {
  chartx::gen::GenConfig gen;
  json model_overrides = json::object();
  chartx::train::LossWeights weights;
  chartx::train::TrainSchedule schedule;
  double confidence = 0.8;
  double nms_iou = 0.5;
  double tau = 0.5;
  double k = 10.0;

  static RunConfig load(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    std::ifstream in(path);
    if (!in) throw chartx::IoError("cannot open config " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw chartx::ConfigError("config is not valid JSON: " + path);
    for (auto& [key, val] : j.items()) {
      (void)val;
      if (key != "gen" && key != "model" && key != "weights" && key != "schedule" &&
          key != "thresholds")
        throw chartx::ConfigError("config: unknown key '" + key + "'");
    }
    if (j.contains("gen")) rc.gen = chartx::gen::GenConfig::from_json(j.at("gen"));
    if (j.contains("model")) rc.model_overrides = j.at("model");
    if (j.contains("weights"))
      rc.weights = chartx::train::LossWeights::from_json(j.at("weights"));
    if (j.contains("schedule"))
      rc.schedule = chartx::train::TrainSchedule::from_json(j.at("schedule"));
    if (j.contains("thresholds")) {
      for (auto& [key, val] : j.at("thresholds").items()) {
        (void)val;
        if (key != "confidence" && key != "nms_iou" && key != "tau" && key != "k")
          throw chartx::ConfigError("config: unknown thresholds key '" + key + "'");
      }
      const json& t = j.at("thresholds");
      rc.confidence = t.value("confidence", rc.confidence);
      rc.nms_iou = t.value("nms_iou", rc.nms_iou);
      rc.tau = t.value("tau", rc.tau);
      rc.k = t.value("k", rc.k);
    }
    return rc;
  }

  chartx::net::ModelConfig model_config(chartx::gen::ChartKind kind) const {
    json j = model_overrides;
    j["kind"] = chartx::gen::to_string(kind);
    chartx::net::ModelConfig cfg = chartx::net::ModelConfig::from_json(j);
    cfg.confidence_thresh = confidence;
    cfg.nms_iou = nms_iou;
    cfg.smooth_tau = tau;
    cfg.smooth_k = k;
    return cfg;
  }
};

int cmd_gen(const std::string& kind, int count, uint64_t seed, const std::string& config,
            const std::string& out) {
  RunConfig rc = RunConfig::load(config);
  auto mode = chartx::gen::kind_mode_from_string(kind);
  auto man = chartx::gen::build_dataset(rc.gen, mode, count, seed, out);
  std::cout << "wrote " << man.entries.size() << " charts to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& kind, const std::string& data, const std::string& config,
              const std::string& out, const std::string& resume) {
  RunConfig rc = RunConfig::load(config);
  if (kind == "type") {
    auto res = chartx::train::train_type_classifier(data, rc.schedule, out);
    std::cout << "type classifier written to " << res.checkpoint_path << "\n";
    return 0;
  }
  auto ckind = chartx::gen::chart_kind_from_string(kind);
  chartx::net::ModelConfig mcfg = rc.model_config(ckind);
  auto res = chartx::train::train_extractor(data, mcfg, rc.schedule, rc.weights, out, resume);
  // provenance echo
  ordered_json prov;
  prov["schedule"] = rc.schedule.to_json();
  prov["weights"] = rc.weights.to_json();
  prov["model"] = mcfg.to_json();
  std::ofstream pf(out + ".run.json", std::ios::trunc);
  pf << prov.dump(2) << "\n";
  std::cout << "model written to " << res.checkpoint_path << " ("
            << res.history.size() << " steps)\n";
  return 0;
}

std::vector<fs::path> images_in(const std::string& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  return files;
}

int cmd_infer(const std::string& model_dir, const std::string& image, const std::string& out,
              const std::string& gt_oracle) {
  std::vector<fs::path> files = images_in(image);
  if (files.empty()) throw chartx::InputError("no .png files at " + image);
  bool dir_mode = files.size() > 1 || fs::is_directory(image);
  if (dir_mode) fs::create_directories(out);

  std::map<std::string, chartx::gen::AnnotationSet> oracle;
  if (!gt_oracle.empty()) {
    for (auto& ann : chartx::gen::load_annotations(gt_oracle))
      oracle[chartx::eval::chart_id_from_image(ann.image)] = std::move(ann);
  }
  chartx::infer::Models models;
  if (gt_oracle.empty()) {
    if (model_dir.empty())
      throw chartx::InputError("infer: --model-dir required unless --gt-oracle is given");
    models = chartx::infer::Models::load(model_dir);
  }

  std::atomic<size_t> next{0};
  std::atomic<int> failures{0};
  std::mutex err_mu;
  auto work = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= files.size()) return;
      const fs::path& f = files[i];
      std::string id = chartx::eval::chart_id_from_image(f.string());
      try {
        chartx::infer::ExtractionResult r;
        if (!gt_oracle.empty()) {
          auto it = oracle.find(id);
          if (it == oracle.end())
            throw chartx::InputError("no annotation record for " + id);
          r = chartx::infer::extract_oracle(it->second);
        } else {
          auto img = chartx::gen::read_png(f.string());
          r = chartx::infer::extract(img, models);
        }
        std::string out_path = dir_mode ? (fs::path(out) / (id + ".json")).string() : out;
        std::ofstream of(out_path, std::ios::trunc);
        if (!of) throw chartx::IoError("cannot write " + out_path);
        of << r.to_json().dump(2) << "\n";
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(err_mu);
        std::cerr << "error: " << f.string() << ": " << e.what() << "\n";
        failures.fetch_add(1);
      }
    }
  };
  size_t threads = std::min<size_t>(
      chartx::env_thread_cap(std::thread::hardware_concurrency()), files.size());
  std::vector<std::thread> pool;
  for (size_t t = 0; t < std::max<size_t>(1, threads); ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failures.load() > 0 && failures.load() == static_cast<int>(files.size()))
    throw chartx::ExtractionError("all extractions failed");
  std::cout << "processed " << files.size() - static_cast<size_t>(failures.load()) << "/"
            << files.size() << " images\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& report_path) {
  auto anns = chartx::gen::load_annotations(gt_dir);
  std::map<chartx::gen::ChartKind, std::vector<chartx::eval::GtEntry>> gt_by_kind;
  for (auto& ann : anns) {
    std::string id = chartx::eval::chart_id_from_image(ann.image);
    gt_by_kind[ann.kind].push_back(chartx::eval::GtEntry{id, std::move(ann)});
  }
  std::map<chartx::gen::ChartKind, std::vector<chartx::eval::PredEntry>> pred_by_kind;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.path().extension() != ".json") continue;
    std::string id = e.path().stem().string();
    std::ifstream in(e.path());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw chartx::IoError("bad result JSON: " + e.path().string());
    auto r = chartx::infer::ExtractionResult::from_json(j);
    pred_by_kind[r.kind].push_back(chartx::eval::PredEntry{id, true, std::move(r)});
  }
  ordered_json out;
  for (auto& [kind, gts] : gt_by_kind) {
    auto preds = pred_by_kind.count(kind) ? pred_by_kind[kind]
                                          : std::vector<chartx::eval::PredEntry>{};
    auto rep = chartx::eval::build_report(kind, preds, gts);
    out[chartx::gen::to_string(kind)] = rep.to_json();
    std::cout << rep.to_text() << "\n";
  }
  if (!report_path.empty()) {
    std::ofstream rf(report_path, std::ios::trunc);
    if (!rf) throw chartx::IoError("cannot write " + report_path);
    rf << out.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chartx: synthetic chart corpus generation, training, extraction and scoring"};
  app.require_subcommand(1);

  auto* gen_cmd = app.add_subcommand("gen", "generate a chart dataset");
  std::string gen_kind = "mixed", gen_config, gen_out = "dataset";
  int gen_count = 10;
  uint64_t gen_seed = 1;
  gen_cmd->add_option("--kind", gen_kind, "bar|pie|mixed")->capture_default_str();
  gen_cmd->add_option("--count", gen_count, "number of charts")->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed, "dataset seed")->capture_default_str();
  gen_cmd->add_option("--config", gen_config, "run config JSON");
  gen_cmd->add_option("--out", gen_out, "output directory")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string train_kind, train_data, train_config, train_out = "model.ckpt", train_resume;
  train_cmd->add_option("--kind", train_kind, "bar|pie|type")->required();
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--config", train_config, "run config JSON");
  train_cmd->add_option("--out", train_out, "checkpoint path")->capture_default_str();
  train_cmd->add_option("--resume", train_resume, "resume checkpoint");

  auto* infer_cmd = app.add_subcommand("infer", "extract data from chart images");
  std::string infer_model, infer_image, infer_out = "result.json", infer_oracle;
  infer_cmd->add_option("--model-dir", infer_model, "directory with type/bar/pie checkpoints");
  infer_cmd->add_option("--image", infer_image, "PNG file or directory")->required();
  infer_cmd->add_option("--out", infer_out, "result JSON path (or directory)")
      ->capture_default_str();
  infer_cmd->add_option("--gt-oracle", infer_oracle,
                        "dataset directory: decode from ground-truth annotations");

  auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
  std::string eval_pred, eval_gt, eval_report = "report.json";
  eval_cmd->add_option("--pred", eval_pred, "directory of result JSONs")->required();
  eval_cmd->add_option("--gt", eval_gt, "ground-truth dataset directory")->required();
  eval_cmd->add_option("--report", eval_report, "report JSON output")->capture_default_str();

  auto* selftest_cmd = app.add_subcommand("selftest", "run oracle/property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen_kind, gen_count, gen_seed, gen_config, gen_out);
    if (train_cmd->parsed())
      return cmd_train(train_kind, train_data, train_config, train_out, train_resume);
    if (infer_cmd->parsed()) return cmd_infer(infer_model, infer_image, infer_out, infer_oracle);
    if (eval_cmd->parsed()) return cmd_eval(eval_pred, eval_gt, eval_report);
    if (selftest_cmd->parsed()) return chartx::selftest::run_and_print();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
