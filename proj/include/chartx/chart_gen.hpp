#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "chartx/annotations.hpp"
#include "chartx/common.hpp"

namespace chartx::gen {

struct RGB {
  uint8_t r = 0, g = 0, b = 0;
  int linf(const RGB& o) const {
    return std::max({std::abs(r - o.r), std::abs(g - o.g), std::abs(b - o.b)});
  }
};

struct IntRange {
  int lo = 0, hi = 0;
};
struct RealRange {
  double lo = 0, hi = 0;
};

struct GenConfig {
  IntRange canvas{256, 640};           // per-side pixel range
  std::vector<int> font_ids{0, 1, 2, 3};
  IntRange title_px{10, 16};
  IntRange axis_label_px{9, 14};
  IntRange tick_label_px{8, 12};
  IntRange legend_px{8, 12};
  IntRange series{1, 5};
  IntRange groups{2, 6};
  IntRange slices{2, 9};
  double min_fraction = 0.01;
  RealRange value_scale{1.0, 1000.0};  // per-chart magnitude of bar values
  IntRange y_ticks{4, 6};
  int color_min_dist = 24;             // L-inf between series/slice colors
  double xtick_diag_prob = 0.25;       // probability of +-45 deg x-tick labels
  double frame_prob = 0.3;             // full box frame instead of L axes
  std::string word_list_path;          // empty = bundled list
  std::vector<std::string> words;      // resolved at load time

  void validate() const;  // ConfigError naming the offending field

  nlohmann::ordered_json to_json() const;
  // Rejects unknown keys. Missing keys keep defaults.
  static GenConfig from_json(const nlohmann::json& j);
};

// Default bundled word list (lowercase, alphabet-only).
const std::vector<std::string>& builtin_words();

struct StyleSpec {
  int font_id = 0;
  int title_px = 12;
  int axis_label_px = 10;
  int tick_label_px = 9;
  int legend_px = 9;
  std::vector<RGB> series_colors;  // per series (bar) or slice (pie)
  RGB text_color{16, 16, 16};
  RGB background{255, 255, 255};
  double y_axis_label_orientation_deg = 90;
  double x_tick_label_orientation_deg = 0;  // 0 or +-45
  bool full_frame = false;
};

struct BarSeries {
  std::string legend_label;
  std::vector<double> values;  // one per group, all > 0
};

struct BarPayload {
  std::vector<std::string> group_labels;
  std::vector<BarSeries> series;
  std::vector<double> y_tick_values;  // strictly ascending, starts at 0
  bool has_legend = false;
};

struct PieSlice {
  std::string legend_label;
  double fraction = 0;  // in (0,1)
};

struct PiePayload {
  std::vector<PieSlice> slices;  // fractions sum to 1 exactly
  double start_angle_deg = 0;    // in [0,360)
};

struct ChartSpec {
  ChartKind kind = ChartKind::Bar;
  uint64_t seed = 0;
  int width = 0, height = 0;
  StyleSpec style;
  std::string title;
  std::string x_axis_label, y_axis_label;  // bar only
  BarPayload bar;
  PiePayload pie;
};

// Deterministic: identical (kind, seed, config) yield identical specs.
ChartSpec sample_chart_spec(ChartKind kind, uint64_t seed, const GenConfig& config);

}  // namespace chartx::gen
