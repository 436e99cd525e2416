#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "chartx/branches.hpp"
#include "chartx/net.hpp"

namespace chartx::infer {

struct Models {
  ad::ParameterStore type_store;
  bool has_type = false;
  ad::ParameterStore bar_store;
  net::ModelConfig bar_cfg;
  bool has_bar = false;
  ad::ParameterStore pie_store;
  net::ModelConfig pie_cfg;
  bool has_pie = false;

  // Loads type.ckpt / bar.ckpt / pie.ckpt from a directory (each optional).
  static Models load(const std::string& model_dir);
};

struct Detection {
  gen::ObjectClass cls = gen::ObjectClass::Title;
  geom::Box box;
  double confidence = 0;
  double orientation_deg = 0;
  std::optional<std::string> text;
};

struct BarTuple {
  std::string x_tick_label;
  double value = 0;
  std::string lower_tick_label, upper_tick_label;
};

struct PieTuple {
  std::string legend;
  double percentage = 0;
};

struct ExtractionResult {
  gen::ChartKind kind = gen::ChartKind::Bar;
  std::string title;
  std::string x_axis_label, y_axis_label;  // bar only
  std::vector<BarTuple> bars;
  std::vector<PieTuple> slices;
  std::vector<Detection> detections;

  nlohmann::ordered_json to_json() const;
  static ExtractionResult from_json(const nlohmann::json& j);
};

// ---- deterministic building blocks ----------------------------------------------

// Linear value readout from tick anchors (pixel_row, numeric_value). Default:
// line through the two nearest anchors; global_fit uses least squares over all.
double interpolate_value(double y_pixel, const std::vector<std::pair<double, double>>& anchors,
                         bool global_fit = false);

// Accepts integers, decimals, thousands separators and a trailing %.
std::optional<double> parse_tick_number(const std::string& s);

// Lower/upper tick labels around `value` (ties resolve to the tick itself).
std::pair<std::string, std::string> lower_upper_ticks(
    double value, const std::vector<std::pair<double, std::string>>& ticks);

// ---- perception abstraction ---------------------------------------------------------
// The assembly logic is shared between the neural path and the GT-oracle path;
// only the perception provider differs.

enum class PairRole { BarLegendMark, BarXTickLabel, YTickLabelLine, LegendMarkLabel };

struct PerceivedObject {
  int id = 0;
  gen::ObjectClass cls = gen::ObjectClass::Title;
  geom::Box box;
  double confidence = 1.0;
  double orientation_deg = 0;
  std::string text;
};

struct Perception {
  gen::ChartKind kind = gen::ChartKind::Bar;
  double img_w = 0, img_h = 0;
  std::vector<PerceivedObject> objects;
  std::vector<double> pie_angles;  // decoded boundary angles, sorted CCW
  std::function<double(const PerceivedObject&, const PerceivedObject&, PairRole)> pair_score;
  std::function<double(int, const PerceivedObject&)> slice_score;  // slice idx x legend mark
};

ExtractionResult assemble_bar(const Perception& p, bool global_fit = false);
ExtractionResult assemble_pie(const Perception& p);

// ---- GT-oracle mode --------------------------------------------------------------------
// Ground truth injected at every neural interface; exercises only the
// deterministic decoding logic.
ExtractionResult extract_oracle(const gen::AnnotationSet& ann);

// ---- neural mode ------------------------------------------------------------------------

gen::ChartKind classify_chart_type(const Models& models, const gen::ImageRGB& image,
                                   double* confidence = nullptr);

ExtractionResult extract_bar(const gen::ImageRGB& image, const Models& models);
ExtractionResult extract_pie(const gen::ImageRGB& image, const Models& models);
// Dispatches on the type classifier.
ExtractionResult extract(const gen::ImageRGB& image, const Models& models);

}  // namespace chartx::infer
