#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chartx/infer.hpp"

namespace chartx::eval {

struct ScoredBox {
  geom::Box box;
  double score = 0;
  int chart = 0;  // chart index, matching is per chart
};

// All-point interpolated AP at IoU >= iou_match, greedy score-ordered
// matching. nullopt when there are neither ground truths nor predictions.
std::optional<double> average_precision(std::vector<ScoredBox> preds,
                                        const std::vector<std::pair<int, geom::Box>>& gts,
                                        double iou_match = 0.5);

// |pred - gt| / |gt|; for gt == 0: 0 when pred == 0, infinity otherwise.
double value_error(double pred, double gt);

// Ground-truth tuples derived directly from an annotation record.
struct GtChart {
  gen::ChartKind kind = gen::ChartKind::Bar;
  std::string title, x_axis_label, y_axis_label;
  std::vector<infer::BarTuple> bars;
  std::vector<infer::PieTuple> slices;
};

GtChart gt_chart(const gen::AnnotationSet& ann);

// Band match: value inside the band AND all textual fields exact
// (case-sensitive, leading/trailing whitespace ignored).
bool tuple_match(const infer::BarTuple& pred, const infer::BarTuple& gt, double band);
bool tuple_match(const infer::PieTuple& pred, const infer::PieTuple& gt, double band);

// Correct title (+ axis labels for bars) and every tuple within the 1% band,
// with matching tuple cardinality.
bool chart_correct(const infer::ExtractionResult& pred, const GtChart& gt);

struct EvaluationReport {
  gen::ChartKind kind = gen::ChartKind::Bar;
  std::vector<std::pair<std::string, std::optional<double>>> ap_rows;
  std::optional<double> mean_ap;
  std::vector<std::pair<std::string, double>> accuracy_rows;
  int charts = 0;
  int tuples = 0;
  int predictions = 0;

  double accuracy(const std::string& row) const;  // throws if missing
  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

struct PredEntry {
  std::string id;  // chart id (image stem)
  bool ok = false; // extraction succeeded
  infer::ExtractionResult result;
};

struct GtEntry {
  std::string id;
  gen::AnnotationSet ann;
};

// Predictions are aligned to ground truth by id; a prediction whose id has no
// ground-truth partner is an input error (listing the unmatched ids). Charts
// without predictions count as misses.
EvaluationReport build_report(gen::ChartKind kind, const std::vector<PredEntry>& preds,
                              const std::vector<GtEntry>& gts);

std::string chart_id_from_image(const std::string& image_path);

}  // namespace chartx::eval
