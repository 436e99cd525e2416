#pragma once

#include <array>
#include <vector>

#include "chartx/autodiff.hpp"
#include "chartx/tensor.hpp"

namespace chartx::geom {

// Axis-aligned box, top-left origin, y growing downward.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double x2() const { return x + w; }
  double y2() const { return y + h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }
  bool valid() const { return w > 0 && h > 0; }
};

struct AnchorConfig {
  std::vector<double> aspect_ratios = {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0};
  std::vector<double> scales = {2, 4, 8, 16, 32};
  double stride = 8;

  int anchors_per_cell() const {
    return static_cast<int>(aspect_ratios.size() * scales.size());
  }
  void validate() const;
};

double iou(const Box& a, const Box& b);

// One anchor per (cell, ratio, scale), centered on the cell's image-space
// center. Index layout: ((y*fm_w + x)*R + ri)*S + si.
std::vector<Box> generate_anchors(int fm_h, int fm_w, const AnchorConfig& cfg);

// Assignment labels per anchor.
struct AssignmentSet {
  static constexpr int kNegative = -1;
  static constexpr int kIgnore = -2;
  std::vector<int> labels;               // gt index if >= 0
  std::vector<std::array<double, 4>> offsets;  // valid where labels >= 0
  int positive_count = 0;
};

// IoU > pos_thresh => positive; <= neg_thresh => negative; otherwise ignore.
// Every ground truth additionally claims its argmax anchor (lowest index on
// ties) as positive.
AssignmentSet assign_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gts,
                             double pos_thresh, double neg_thresh);

// (dx/wa, dy/ha, log(w/wa), log(h/ha)) parameterization.
std::array<double, 4> encode_offsets(const Box& anchor, const Box& gt);
Box decode_offsets(const Box& anchor, const std::array<double, 4>& off);

struct Scored {
  Box box;
  double score = 0;
  int index = 0;  // original position, used for deterministic tie-breaks
};

// Greedy highest-score-first suppression. Output sorted by descending
// score (ties by ascending input index); no kept pair has IoU > iou_thresh.
std::vector<Scored> nms(std::vector<Scored> scored, double iou_thresh);

enum class MapDir { ImageToFeature, FeatureToImage };

// Image->feature uses floor/ceil so the mapped box always covers the source.
Box map_box(const Box& box, double stride, MapDir dir);

// Clip to [0,w]x[0,h], preserving a minimum 1px extent inside the canvas.
Box clip_box(const Box& box, double img_w, double img_h);

// Visual counter-clockwise rotation of an [H,W,C] map about its center with
// bilinear resampling; out-of-range samples are zero. Pure (non-tape) version.
ad::Tensor rotate_feature_map(const ad::Tensor& fm, double angle_deg);

// Rotation grid used by both the pure and the differentiable paths: grid[i]
// is the source sample position for output cell i (row-major over H,W).
std::vector<ad::GridPoint> rotation_grid(int h, int w, double angle_deg);

// Tape variant; gradients flow into feature values only.
ad::Var rotate_feature_map(ad::Var fm, double angle_deg);

}  // namespace chartx::geom
