#include "chartx/branches.hpp"

#include <algorithm>
#include <cmath>

#include "chartx/fonts.hpp"

namespace chartx::net {

using ad::Tape;
using ad::Tensor;
using ad::Var;

// ---- smooth indicator ---------------------------------------------------------

void SmoothIndicatorParams::validate() const {
  if (tau <= 0 || tau >= 1) throw ConfigError("SmoothIndicatorParams: tau must be in (0,1)");
  if (k <= 0) throw ConfigError("SmoothIndicatorParams: k must be positive");
}

double smooth_indicator(double x, const SmoothIndicatorParams& p) {
  p.validate();
  return 1.0 / (1.0 + std::exp(-p.k * (x - p.tau) / (1.0 - p.tau)));
}

double smooth_indicator_deriv(double x, const SmoothIndicatorParams& p) {
  double h = smooth_indicator(x, p);
  return p.k / (1.0 - p.tau) * h * (1.0 - h);
}

// ---- oriented text recognition ---------------------------------------------------

Var orientation_head(Tape& tape, const ad::Binding& P, Var roi) {
  (void)tape;
  Var flat = ad::flatten(roi);
  Var hid = ad::relu(ad::affine(flat, P["text.orient.fc.w"], P["text.orient.fc.b"]));
  return ad::affine(hid, P["text.orient.out.w"], P["text.orient.out.b"]);
}

std::vector<ad::GridPoint> text_sample_grid(const geom::Box& box, double angle_deg,
                                            double stride, int rows, int* out_frames,
                                            int max_frames) {
  double th = angle_deg * M_PI / 180.0;
  double c = std::cos(th), s = std::sin(th);
  // reading direction and its visual-down normal, image coords (y down)
  double ux = c, uy = -s;
  double vx = s, vy = c;
  // deskewed extents from the axis-aligned bbox
  double len = std::abs(box.w * c) + std::abs(box.h * s);
  double ht = std::abs(box.w * s) + std::abs(box.h * c);
  int frames = std::clamp(static_cast<int>(std::lround(len / stride)), 8, max_frames);
  *out_frames = frames;
  double cx = box.cx(), cy = box.cy();
  std::vector<ad::GridPoint> pts;
  pts.reserve(static_cast<size_t>(frames) * rows);
  for (int t = 0; t < frames; ++t) {
    double a = ((t + 0.5) / frames - 0.5) * len;
    for (int r = 0; r < rows; ++r) {
      double b = ((r + 0.5) / rows - 0.5) * ht;
      double px = cx + a * ux + b * vx;
      double py = cy + a * uy + b * vy;
      pts.push_back(ad::GridPoint{py / stride - 0.5, px / stride - 0.5});
    }
  }
  return pts;
}

Var text_frames(Tape& tape, Var stage1_fm, const geom::Box& box, double angle_deg,
                double stride, const ModelConfig& cfg) {
  (void)tape;
  int frames = 0;
  auto pts = text_sample_grid(box, angle_deg, stride, cfg.text_rows, &frames,
                              cfg.max_text_frames);
  int c1 = stage1_fm.value().dim(2);
  Var g = ad::bilinear_gather(stage1_fm, pts);  // [frames*rows, C1]
  return ad::reshape(g, {frames, cfg.text_rows * c1});
}

Var text_logits(Tape& tape, const ad::Binding& P, Var frames) {
  (void)tape;
  Var seq = ad::bilstm(frames, ad::LstmParams{P["text.rec.fwd.wx"], P["text.rec.fwd.wh"],
                                              P["text.rec.fwd.b"]},
                       ad::LstmParams{P["text.rec.bwd.wx"], P["text.rec.bwd.wh"],
                                      P["text.rec.bwd.b"]});
  return ad::affine(seq, P["text.rec.out.w"], P["text.rec.out.b"]);
}

std::string symbols_to_string(const std::vector<int>& symbols) {
  std::string out;
  for (int s : symbols) {
    if (s < 0 || s >= static_cast<int>(gen::kAlphabet.size()))
      throw InputError("symbols_to_string: symbol out of range");
    out += gen::kAlphabet[static_cast<size_t>(s)];
  }
  return out;
}

std::vector<int> string_to_symbols(const std::string& s) {
  std::vector<int> out;
  out.reserve(s.size());
  for (char c : s) out.push_back(gen::symbol_id(c));
  return out;
}

TextPrediction recognize_text(Tape& tape, const ad::Binding& P, const ModelConfig& cfg,
                              Var stage1_fm, const geom::Box& box, double angle_deg) {
  Var frames = text_frames(tape, stage1_fm, box, angle_deg, 2.0, cfg);
  Var logits = text_logits(tape, P, frames);
  TextPrediction pred;
  pred.angle_deg = angle_deg;
  pred.char_logits = logits.value();
  pred.decoded = symbols_to_string(ad::ctc_best_path(pred.char_logits));
  return pred;
}

Var text_branch_loss(Tape& tape, Var angle_pred, double angle_gt, Var char_logits,
                     const std::vector<int>& target, double lambda_o, double lambda_c) {
  Var l_orient = ad::mse(angle_pred, Tensor::scalar(angle_gt));
  Var l_ctc = ad::ctc_loss(char_logits, target);
  (void)tape;
  return ad::add(ad::scale(l_orient, lambda_o), ad::scale(l_ctc, lambda_c));
}

// ---- object matching ----------------------------------------------------------------

Tensor positional_code(const geom::Box& box, double img_w, double img_h) {
  if (img_w <= 0 || img_h <= 0) throw InputError("positional_code: bad image dims");
  Tensor t({4});
  t[0] = box.cx() / img_w;
  t[1] = box.cy() / img_h;
  t[2] = box.w / img_w;
  t[3] = box.h / img_h;
  return t;
}

Var om_logit(Tape& tape, const ad::Binding& P, OmKind kind, Var a, Var b) {
  (void)tape;
  if (a.value().numel() != b.value().numel())
    throw InputError("om_logit: mixed representation kinds");
  const char* prefix = kind == OmKind::Feature ? "om.feat" : "om.pos";
  Var g = ad::concat({ad::flatten(a), ad::flatten(b)});  // ordered concatenation
  Var hid = ad::relu(ad::affine(g, P[std::string(prefix) + ".fc1.w"],
                                P[std::string(prefix) + ".fc1.b"]));
  return ad::affine(hid, P[std::string(prefix) + ".fc2.w"],
                    P[std::string(prefix) + ".fc2.b"]);
}

Var om_score(Tape& tape, const ad::Binding& P, OmKind kind, Var a, Var b) {
  return ad::sigmoid(om_logit(tape, P, kind, a, b));
}

double om_pair_divergence(double om, bool matched) {
  double q = matched ? om : 1.0 - om;
  if (q <= 0) return std::numeric_limits<double>::infinity();
  return -std::log(q);
}

Var om_loss(Tape& tape, const std::vector<OmPair>& pairs, const SmoothIndicatorParams& h) {
  h.validate();
  if (pairs.empty()) return tape.constant(Tensor::scalar(0.0));
  std::vector<Var> terms;
  terms.reserve(pairs.size());
  for (const OmPair& p : pairs) {
    double w = smooth_indicator(p.conf_a, h) * smooth_indicator(p.conf_b, h);
    // KL(onehot || (OM, 1-OM)) = -log OM (match) or -log(1-OM) (no match),
    // evaluated stably from the logit.
    Var nll = p.matched ? ad::softplus(ad::neg(p.logit)) : ad::softplus(p.logit);
    terms.push_back(ad::scale(nll, w));
  }
  Var acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return ad::sum(acc);
}

// ---- pie angle decoding ----------------------------------------------------------------

AngleDecode decode_angles(Tape& tape, const ad::Binding& P, const ModelConfig& cfg,
                          Var pie_feature, int max_steps, int forced_steps) {
  int hidden = cfg.angle_lstm_hidden;
  ad::LstmParams l1{P["ang.l1.wx"], P["ang.l1.wh"], P["ang.l1.b"]};
  ad::LstmParams l2{P["ang.l2.wx"], P["ang.l2.wh"], P["ang.l2.b"]};
  Var x = ad::flatten(pie_feature);
  Var h1 = tape.constant(Tensor({hidden})), c1 = tape.constant(Tensor({hidden}));
  Var h2 = tape.constant(Tensor({hidden})), c2 = tape.constant(Tensor({hidden}));

  AngleDecode out;
  int steps = forced_steps > 0 ? forced_steps : max_steps;
  for (int step = 1; step <= steps; ++step) {
    auto [nh1, nc1] = ad::lstm_cell(x, h1, c1, l1);
    auto [nh2, nc2] = ad::lstm_cell(nh1, h2, c2, l2);
    h1 = nh1;
    c1 = nc1;
    h2 = nh2;
    c2 = nc2;
    Var o = ad::affine(h2, P["ang.out.w"], P["ang.out.b"]);  // (sin, cos, stop)
    Var sincos = ad::slice(o, 0, 2);
    Var stop = ad::slice(o, 2, 1);
    out.stop_logits.push_back(stop);
    double stop_p = 1.0 / (1.0 + std::exp(-stop.value()[0]));
    bool stopping = forced_steps > 0 ? false : stop_p > 0.5;
    if (stopping) {
      out.seq.stop_step = step;
      return out;
    }
    out.sincos_rows.push_back(sincos);
    // normalize before atan2 so the decoded angle is scale-invariant
    double sv = sincos.value()[0], cv = sincos.value()[1];
    double n = std::hypot(sv, cv);
    if (n < 1e-12) n = 1;
    double ang = std::atan2(sv / n, cv / n) * 180.0 / M_PI;
    if (ang < 0) ang += 360.0;
    out.seq.angles_deg.push_back(ang);
  }
  if (forced_steps > 0) {
    out.seq.stop_step = steps;
  } else {
    out.seq.stop_step = max_steps;
    out.seq.truncated = true;  // no stop signal within budget
  }
  return out;
}

Var angle_loss(Tape& tape, const AngleDecode& dec, const std::vector<double>& gt_angles_deg) {
  size_t n = gt_angles_deg.size();
  if (dec.sincos_rows.size() < n || dec.stop_logits.size() < n + 1)
    throw InputError("angle_loss: decoder emitted fewer steps than targets");
  Tensor gt({static_cast<int>(n), 2});
  for (size_t i = 0; i < n; ++i) {
    double th = gt_angles_deg[i] * M_PI / 180.0;
    gt(static_cast<int>(i), 0) = std::sin(th);
    gt(static_cast<int>(i), 1) = std::cos(th);
  }
  std::vector<Var> rows(dec.sincos_rows.begin(), dec.sincos_rows.begin() + static_cast<long>(n));
  Var pred = ad::stack_rows(rows);
  Var l2 = ad::mse(pred, gt);

  std::vector<Var> stops(dec.stop_logits.begin(),
                         dec.stop_logits.begin() + static_cast<long>(n + 1));
  Var stop_logits = ad::concat(stops);
  Tensor stop_t({static_cast<int>(n) + 1});
  stop_t[static_cast<Eigen::Index>(n)] = 1.0;  // stop fires right after the last boundary
  Var bce = ad::bce_with_logits(stop_logits, stop_t);
  (void)tape;
  return ad::add(l2, bce);
}

Var slice_feature(Var pie_fm_region, double boundary_angle_deg) {
  return geom::rotate_feature_map(pie_fm_region, -boundary_angle_deg);
}

std::vector<double> angles_to_percentages(const std::vector<double>& angles_deg) {
  size_t n = angles_deg.size();
  if (n < 2) throw InputError("angles_to_percentages: need at least 2 boundaries");
  std::vector<double> pct(n);
  double acc = 0;
  for (size_t i = 0; i + 1 < n; ++i) {
    double d = std::fmod(angles_deg[i + 1] - angles_deg[i] + 360.0, 360.0);
    pct[i] = d / 360.0 * 100.0;
    acc += pct[i];
  }
  pct[n - 1] = 100.0 - acc;  // telescoping closure: sums to 100 exactly
  return pct;
}

}  // namespace chartx::net
