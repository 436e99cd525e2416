#include "chartx/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace chartx::geom {

void AnchorConfig::validate() const {
  if (aspect_ratios.empty() || scales.empty())
    throw ConfigError("AnchorConfig: aspect_ratios and scales must be non-empty");
  for (double r : aspect_ratios)
    if (r <= 0) throw ConfigError("AnchorConfig: aspect_ratios must be positive");
  for (double s : scales)
    if (s <= 0) throw ConfigError("AnchorConfig: scales must be positive");
  if (stride < 1) throw ConfigError("AnchorConfig: stride must be >= 1");
}

double iou(const Box& a, const Box& b) {
  double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x, b.x));
  double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y, b.y));
  double inter = ix * iy;
  // areas measured from the same corner differences as the intersection, so
  // iou(a, a) is exactly 1 despite floating-point extents
  double area_a = (a.x2() - a.x) * (a.y2() - a.y);
  double area_b = (b.x2() - b.x) * (b.y2() - b.y);
  double uni = area_a + area_b - inter;
  return uni <= 0 ? 0.0 : inter / uni;
}

std::vector<Box> generate_anchors(int fm_h, int fm_w, const AnchorConfig& cfg) {
  cfg.validate();
  if (fm_h < 1 || fm_w < 1) throw InputError("generate_anchors: empty feature map");
  std::vector<Box> anchors;
  anchors.reserve(static_cast<size_t>(fm_h) * fm_w * cfg.anchors_per_cell());
  for (int y = 0; y < fm_h; ++y) {
    for (int x = 0; x < fm_w; ++x) {
      double cx = (x + 0.5) * cfg.stride;
      double cy = (y + 0.5) * cfg.stride;
      for (double r : cfg.aspect_ratios) {
        for (double s : cfg.scales) {
          double side = s * cfg.stride;  // area = side^2, h/w = r
          double w = side / std::sqrt(r);
          double h = side * std::sqrt(r);
          anchors.push_back(Box{cx - 0.5 * w, cy - 0.5 * h, w, h});
        }
      }
    }
  }
  return anchors;
}

std::array<double, 4> encode_offsets(const Box& anchor, const Box& gt) {
  return {(gt.cx() - anchor.cx()) / anchor.w, (gt.cy() - anchor.cy()) / anchor.h,
          std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

Box decode_offsets(const Box& anchor, const std::array<double, 4>& off) {
  double cx = anchor.cx() + off[0] * anchor.w;
  double cy = anchor.cy() + off[1] * anchor.h;
  double w = anchor.w * std::exp(off[2]);
  double h = anchor.h * std::exp(off[3]);
  return Box{cx - 0.5 * w, cy - 0.5 * h, w, h};
}

AssignmentSet assign_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gts,
                             double pos_thresh, double neg_thresh) {
  if (pos_thresh < neg_thresh)
    throw ConfigError("assign_anchors: pos_thresh must be >= neg_thresh");
  AssignmentSet out;
  out.labels.assign(anchors.size(), AssignmentSet::kNegative);
  out.offsets.assign(anchors.size(), {0, 0, 0, 0});
  if (gts.empty()) return out;

  std::vector<double> best_iou(anchors.size(), 0.0);
  std::vector<int> best_gt(anchors.size(), -1);
  std::vector<double> gt_best_iou(gts.size(), -1.0);
  std::vector<int> gt_best_anchor(gts.size(), -1);

  for (size_t a = 0; a < anchors.size(); ++a) {
    for (size_t g = 0; g < gts.size(); ++g) {
      double v = iou(anchors[a], gts[g]);
      if (v > best_iou[a] || best_gt[a] < 0) {
        best_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      if (v > gt_best_iou[g]) {
        gt_best_iou[g] = v;
        gt_best_anchor[g] = static_cast<int>(a);
      }
    }
  }
  for (size_t a = 0; a < anchors.size(); ++a) {
    if (best_iou[a] > pos_thresh)
      out.labels[a] = best_gt[a];
    else if (best_iou[a] <= neg_thresh)
      out.labels[a] = AssignmentSet::kNegative;
    else
      out.labels[a] = AssignmentSet::kIgnore;
  }
  // argmax fallback: every gt keeps at least one positive anchor
  for (size_t g = 0; g < gts.size(); ++g)
    if (gt_best_anchor[g] >= 0) out.labels[static_cast<size_t>(gt_best_anchor[g])] = static_cast<int>(g);

  for (size_t a = 0; a < anchors.size(); ++a) {
    if (out.labels[a] >= 0) {
      out.offsets[a] = encode_offsets(anchors[a], gts[static_cast<size_t>(out.labels[a])]);
      ++out.positive_count;
    }
  }
  return out;
}

std::vector<Scored> nms(std::vector<Scored> scored, double iou_thresh) {
  for (const Scored& s : scored)
    if (!std::isfinite(s.score)) throw InputError("nms: non-finite score");
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  });
  std::vector<Scored> kept;
  for (const Scored& s : scored) {
    bool suppressed = false;
    for (const Scored& k : kept) {
      if (iou(s.box, k.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(s);
  }
  return kept;
}

Box map_box(const Box& box, double stride, MapDir dir) {
  if (stride < 1) throw InputError("map_box: stride must be >= 1");
  if (dir == MapDir::FeatureToImage)
    return Box{box.x * stride, box.y * stride, box.w * stride, box.h * stride};
  double x0 = std::floor(box.x / stride);
  double y0 = std::floor(box.y / stride);
  double x1 = std::ceil(box.x2() / stride);
  double y1 = std::ceil(box.y2() / stride);
  return Box{x0, y0, std::max(1.0, x1 - x0), std::max(1.0, y1 - y0)};
}

Box clip_box(const Box& box, double img_w, double img_h) {
  double x0 = std::clamp(box.x, 0.0, img_w - 1.0);
  double y0 = std::clamp(box.y, 0.0, img_h - 1.0);
  double x1 = std::clamp(box.x2(), x0 + 1.0, img_w);
  double y1 = std::clamp(box.y2(), y0 + 1.0, img_h);
  return Box{x0, y0, x1 - x0, y1 - y0};
}

std::vector<ad::GridPoint> rotation_grid(int h, int w, double angle_deg) {
  // Visual CCW rotation in y-down coordinates: output q samples input at
  // center + R(-theta) * (q - center), R(-theta) = [[cos, -sin], [sin, cos]].
  double th = angle_deg * M_PI / 180.0;
  double c = std::cos(th), s = std::sin(th);
  double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
  std::vector<ad::GridPoint> grid;
  grid.reserve(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double dx = x - cx, dy = y - cy;
      grid.push_back(ad::GridPoint{cy + s * dx + c * dy, cx + c * dx - s * dy});
    }
  }
  return grid;
}

ad::Tensor rotate_feature_map(const ad::Tensor& fm, double angle_deg) {
  if (fm.rank() != 3) throw ShapeError("rotate_feature_map: expected [H,W,C]");
  int h = fm.dim(0), w = fm.dim(1), c = fm.dim(2);
  auto grid = rotation_grid(h, w, angle_deg);
  ad::Tensor out({h, w, c});
  for (size_t i = 0; i < grid.size(); ++i) {
    double r = grid[i].r, cc = grid[i].c;
    int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(cc));
    double fr = r - r0, fc = cc - c0;
    const double ws[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
    const int ys[4] = {r0, r0, r0 + 1, r0 + 1};
    const int xs[4] = {c0, c0 + 1, c0, c0 + 1};
    double* dst = out.data() + static_cast<Eigen::Index>(i) * c;
    for (int k = 0; k < 4; ++k) {
      if (ws[k] == 0.0 || ys[k] < 0 || ys[k] >= h || xs[k] < 0 || xs[k] >= w) continue;
      const double* src = fm.data() + (static_cast<Eigen::Index>(ys[k]) * w + xs[k]) * c;
      for (int ch = 0; ch < c; ++ch) dst[ch] += ws[k] * src[ch];
    }
  }
  return out;
}

ad::Var rotate_feature_map(ad::Var fm, double angle_deg) {
  const ad::Tensor& f = fm.value();
  if (f.rank() != 3) throw ShapeError("rotate_feature_map: expected [H,W,C]");
  int h = f.dim(0), w = f.dim(1), c = f.dim(2);
  auto grid = rotation_grid(h, w, angle_deg);
  ad::Var sampled = ad::bilinear_gather(fm, grid);
  return ad::reshape(sampled, {h, w, c});
}

}  // namespace chartx::geom
