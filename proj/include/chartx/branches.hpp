#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chartx/net.hpp"

namespace chartx::net {

// ---- smooth indicator (confidence gate) -------------------------------------

struct SmoothIndicatorParams {
  double tau = 0.5;  // in (0,1)
  double k = 10.0;   // steepness
  void validate() const;
};

// H(x) = 1 / (1 + exp(-k (x - tau) / (1 - tau))); strictly increasing, H(tau)=0.5.
double smooth_indicator(double x, const SmoothIndicatorParams& p);
double smooth_indicator_deriv(double x, const SmoothIndicatorParams& p);

// ---- oriented text recognition ------------------------------------------------

// Angle regression from a pooled proposal feature. roi: [roi,roi,C] flattened
// or not; returns a scalar angle in degrees.
ad::Var orientation_head(ad::Tape& tape, const ad::Binding& P, ad::Var roi);

// Sampling grid along the reading direction of an oriented box: `rows` rows
// tall, T columns wide; T derives from the deskewed text length in stride
// units, clamped to [8, max_frames].
std::vector<ad::GridPoint> text_sample_grid(const geom::Box& box, double angle_deg,
                                            double stride, int rows, int* out_frames,
                                            int max_frames);

// Frames [T, rows*C1] sampled from the stride-2 map, rotated by the predicted
// angle so the recognizer always reads left to right.
ad::Var text_frames(ad::Tape& tape, ad::Var stage1_fm, const geom::Box& box, double angle_deg,
                    double stride, const ModelConfig& cfg);

// Per-frame logits [T, A+1] from the bidirectional recognizer.
ad::Var text_logits(ad::Tape& tape, const ad::Binding& P, ad::Var frames);

struct TextPrediction {
  double angle_deg = 0;
  ad::Tensor char_logits;  // [T, A+1]
  std::string decoded;
};

TextPrediction recognize_text(ad::Tape& tape, const ad::Binding& P, const ModelConfig& cfg,
                              ad::Var stage1_fm, const geom::Box& box, double angle_deg);

std::string symbols_to_string(const std::vector<int>& symbols);
std::vector<int> string_to_symbols(const std::string& s);

// L_text = lambda_o * L_orientation + lambda_C * L_CTC
ad::Var text_branch_loss(ad::Tape& tape, ad::Var angle_pred, double angle_gt,
                         ad::Var char_logits, const std::vector<int>& target, double lambda_o,
                         double lambda_c);

// ---- object matching -------------------------------------------------------------

enum class OmKind { Feature, Positional };

// Normalized (cx/W, cy/H, w/W, h/H) code of a box.
ad::Tensor positional_code(const geom::Box& box, double img_w, double img_h);

// Pre-sigmoid matching logit for a pair of same-kind representations.
ad::Var om_logit(ad::Tape& tape, const ad::Binding& P, OmKind kind, ad::Var a, ad::Var b);
// Sigmoid-squashed score in [0,1].
ad::Var om_score(ad::Tape& tape, const ad::Binding& P, OmKind kind, ad::Var a, ad::Var b);

struct OmPair {
  ad::Var logit;        // from om_logit
  bool matched = false; // ground truth
  double conf_a = 1.0, conf_b = 1.0;
};

// Sum over pairs of H(conf_a) H(conf_b) KL(onehot || (OM, 1-OM)); the KL
// reduces to -log OM for matches and -log(1-OM) otherwise.
ad::Var om_loss(ad::Tape& tape, const std::vector<OmPair>& pairs,
                const SmoothIndicatorParams& h);

// Per-pair divergence evaluated on plain numbers (test/readback path).
double om_pair_divergence(double om, bool matched);

// ---- pie angle decoding --------------------------------------------------------------

struct AngleSequence {
  std::vector<double> angles_deg;  // counter-clockwise from 0
  int stop_step = 0;               // 1-based step where the stop signal fired
  bool truncated = false;          // no stop within max_steps
};

struct AngleDecode {
  AngleSequence seq;
  std::vector<ad::Var> sincos_rows;  // [2] per emitted step (pre-normalization)
  std::vector<ad::Var> stop_logits;  // [1] per step incl. the stopping one
};

// Two-layer LSTM over the pie feature, fed the same input every step.
AngleDecode decode_angles(ad::Tape& tape, const ad::Binding& P, const ModelConfig& cfg,
                          ad::Var pie_feature, int max_steps, int forced_steps = -1);

// L2 on (sin, cos) per boundary plus BCE on the stop logits.
ad::Var angle_loss(ad::Tape& tape, const AngleDecode& dec,
                   const std::vector<double>& gt_angles_deg);

// Rotate the pooled pie map so the slice's leading boundary lands at 0 deg.
ad::Var slice_feature(ad::Var pie_fm_region, double boundary_angle_deg);

// Percentages from consecutive boundary differences; sums to 100 exactly.
std::vector<double> angles_to_percentages(const std::vector<double>& angles_deg);

}  // namespace chartx::net
