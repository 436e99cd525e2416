#pragma once

#include <string>
#include <vector>

#include "chartx/render.hpp"

namespace chartx::gen {

enum class KindMode { Bar, Pie, Mixed };

std::string to_string(KindMode m);
KindMode kind_mode_from_string(const std::string& s);

struct ManifestEntry {
  std::string image;  // path relative to the dataset root
  int index = 0;      // record index in annotations.jsonl
};

struct DatasetManifest {
  std::string root;
  uint64_t seed = 0;
  KindMode mode = KindMode::Bar;
  nlohmann::ordered_json config_echo;
  std::vector<ManifestEntry> entries;
};

// Writes count PNGs under out_dir/images, one JSONL annotation record per
// chart, and manifest.json. Generation is parallel over charts (capped by
// CHARTX_THREADS) but output bytes are independent of thread timing.
DatasetManifest build_dataset(const GenConfig& config, KindMode mode, int count,
                              uint64_t seed, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& dataset_dir);

// All annotation records of a dataset, in manifest order.
std::vector<AnnotationSet> load_annotations(const std::string& dataset_dir);

}  // namespace chartx::gen
