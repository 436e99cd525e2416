#include "chartx/net.hpp"

#include <algorithm>
#include <cmath>

#include "chartx/fonts.hpp"

namespace chartx::net {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using nlohmann::json;
using nlohmann::ordered_json;

ordered_json ModelConfig::to_json() const {
  ordered_json j;
  j["kind"] = gen::to_string(kind);
  j["backbone_channels"] = backbone.channels;
  j["anchor_ratios"] = anchors.aspect_ratios;
  j["anchor_scales"] = anchors.scales;
  j["roi_size"] = roi_size;
  j["head_hidden"] = head_hidden;
  j["om_hidden"] = om_hidden;
  j["text_lstm_hidden"] = text_lstm_hidden;
  j["text_rows"] = text_rows;
  j["max_text_frames"] = max_text_frames;
  j["angle_lstm_hidden"] = angle_lstm_hidden;
  j["angle_max_steps"] = angle_max_steps;
  j["smooth_tau"] = smooth_tau;
  j["smooth_k"] = smooth_k;
  j["rpn_pos_thresh"] = rpn_pos_thresh;
  j["rpn_neg_thresh"] = rpn_neg_thresh;
  j["confidence_thresh"] = confidence_thresh;
  j["nms_iou"] = nms_iou;
  j["rpn_top_n"] = rpn_top_n;
  j["stride"] = backbone.stride();
  j["classes"] = [&] {
    std::vector<std::string> cs;
    for (auto c : classes()) cs.push_back(gen::to_string(c));
    return cs;
  }();
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.kind = gen::chart_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("backbone_channels"))
    c.backbone.channels = j.at("backbone_channels").get<std::vector<int>>();
  if (j.contains("anchor_ratios"))
    c.anchors.aspect_ratios = j.at("anchor_ratios").get<std::vector<double>>();
  if (j.contains("anchor_scales"))
    c.anchors.scales = j.at("anchor_scales").get<std::vector<double>>();
  c.anchors.stride = c.backbone.stride();
  auto opt = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  opt("roi_size", c.roi_size);
  opt("head_hidden", c.head_hidden);
  opt("om_hidden", c.om_hidden);
  opt("text_lstm_hidden", c.text_lstm_hidden);
  opt("text_rows", c.text_rows);
  opt("max_text_frames", c.max_text_frames);
  opt("angle_lstm_hidden", c.angle_lstm_hidden);
  opt("angle_max_steps", c.angle_max_steps);
  opt("smooth_tau", c.smooth_tau);
  opt("smooth_k", c.smooth_k);
  opt("rpn_pos_thresh", c.rpn_pos_thresh);
  opt("rpn_neg_thresh", c.rpn_neg_thresh);
  opt("confidence_thresh", c.confidence_thresh);
  opt("nms_iou", c.nms_iou);
  opt("rpn_top_n", c.rpn_top_n);
  return c;
}

Tensor image_to_tensor(const gen::ImageRGB& img, int down) {
  if (down < 1) throw InputError("image_to_tensor: down must be >= 1");
  int h = (img.height + down - 1) / down;
  int w = (img.width + down - 1) / down;
  Tensor t({h, w, 3});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0, 0, 0};
      int cnt = 0;
      for (int dy = 0; dy < down; ++dy) {
        int sy = y * down + dy;
        if (sy >= img.height) break;
        for (int dx = 0; dx < down; ++dx) {
          int sx = x * down + dx;
          if (sx >= img.width) break;
          const uint8_t* p = img.at(sx, sy);
          acc[0] += p[0];
          acc[1] += p[1];
          acc[2] += p[2];
          ++cnt;
        }
      }
      for (int c = 0; c < 3; ++c) t(y, x, c) = acc[c] / (255.0 * cnt);
    }
  }
  return t;
}

// ---- init -----------------------------------------------------------------------

namespace {

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  double sd = std::sqrt(2.0 / fan_in);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = sd * rng.normal();
  return t;
}

void init_conv(ad::ParameterStore& s, const std::string& name, int kh, int kw, int cin,
               int cout, Rng& rng) {
  s.add(name + ".w", he_init({kh * kw * cin, cout}, kh * kw * cin, rng));
  s.add(name + ".b", Tensor({cout}));
}

void init_dense(ad::ParameterStore& s, const std::string& name, int in, int out, Rng& rng) {
  s.add(name + ".w", he_init({in, out}, in, rng));
  s.add(name + ".b", Tensor({out}));
}

void init_lstm(ad::ParameterStore& s, const std::string& name, int in, int hidden, Rng& rng) {
  s.add(name + ".wx", he_init({in, 4 * hidden}, in, rng));
  s.add(name + ".wh", he_init({hidden, 4 * hidden}, hidden, rng));
  Tensor b({4 * hidden});
  for (int i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;  // forget gate bias
  s.add(name + ".b", std::move(b));
}

ad::LstmParams lstm_params(const ad::Binding& P, const std::string& name) {
  return ad::LstmParams{P[name + ".wx"], P[name + ".wh"], P[name + ".b"]};
}

}  // namespace

const std::vector<std::string>& branch_prefixes() {
  static const std::vector<std::string> p = {"text.", "om.", "ang."};
  return p;
}

void init_extractor_params(ad::ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const auto& ch = cfg.backbone.channels;
  int cin = 3;
  for (size_t i = 0; i < ch.size(); ++i) {
    init_conv(store, "bb.conv" + std::to_string(i), 3, 3, cin, ch[i], rng);
    cin = ch[i];
  }
  int c = cfg.backbone.out_channels();
  int a = cfg.anchors.anchors_per_cell();
  init_conv(store, "rpn.conv", 3, 3, c, c, rng);
  init_conv(store, "rpn.obj", 1, 1, c, a, rng);
  init_conv(store, "rpn.reg", 1, 1, c, 4 * a, rng);

  int roi_dim = cfg.roi_size * cfg.roi_size * c;
  init_dense(store, "head.fc", roi_dim, cfg.head_hidden, rng);
  init_dense(store, "head.cls", cfg.head_hidden, cfg.num_classes() + 1, rng);
  init_dense(store, "head.reg", cfg.head_hidden, 4, rng);

  // text branch: orientation regressor + recognizer
  init_dense(store, "text.orient.fc", roi_dim, 128, rng);
  init_dense(store, "text.orient.out", 128, 1, rng);
  int frame_dim = cfg.text_rows * cfg.backbone.channels[0];
  init_lstm(store, "text.rec.fwd", frame_dim, cfg.text_lstm_hidden, rng);
  init_lstm(store, "text.rec.bwd", frame_dim, cfg.text_lstm_hidden, rng);
  int alphabet = static_cast<int>(gen::kAlphabet.size());
  init_dense(store, "text.rec.out", 2 * cfg.text_lstm_hidden, alphabet + 1, rng);

  // object matching: feature pairs and positional pairs
  init_dense(store, "om.feat.fc1", 2 * roi_dim, cfg.om_hidden, rng);
  init_dense(store, "om.feat.fc2", cfg.om_hidden, 1, rng);
  init_dense(store, "om.pos.fc1", 8, cfg.om_hidden, rng);
  init_dense(store, "om.pos.fc2", cfg.om_hidden, 1, rng);

  if (cfg.kind == gen::ChartKind::Pie) {
    init_lstm(store, "ang.l1", roi_dim, cfg.angle_lstm_hidden, rng);
    init_lstm(store, "ang.l2", cfg.angle_lstm_hidden, cfg.angle_lstm_hidden, rng);
    init_dense(store, "ang.out", cfg.angle_lstm_hidden, 3, rng);
  }
}

void init_type_params(ad::ParameterStore& store, Rng& rng) {
  init_conv(store, "type.conv0", 3, 3, 3, 8, rng);
  init_conv(store, "type.conv1", 3, 3, 8, 16, rng);
  init_conv(store, "type.conv2", 3, 3, 16, 32, rng);
  init_dense(store, "type.fc", 32, 32, rng);
  init_dense(store, "type.out", 32, 2, rng);
}

// ---- forward ---------------------------------------------------------------------

BackboneOut backbone_forward(Tape& tape, const ad::Binding& P, const ModelConfig& cfg,
                             const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw InputError("backbone_forward: expected RGB [H,W,3]");
  if (image.dim(0) < cfg.backbone.stride() || image.dim(1) < cfg.backbone.stride())
    throw InputError("backbone_forward: image smaller than backbone stride");
  Var x = tape.constant(image);
  BackboneOut out{};
  int cin = 3;
  for (size_t i = 0; i < cfg.backbone.channels.size(); ++i) {
    int cout = cfg.backbone.channels[i];
    std::string name = "bb.conv" + std::to_string(i);
    x = ad::relu(ad::conv2d(x, P[name + ".w"], P[name + ".b"],
                            ad::ConvSpec{3, 3, cin, cout, 1, 1}));
    x = ad::maxpool2(x);
    if (i == 0) out.stage1 = x;
    cin = cout;
  }
  out.final = x;
  return out;
}

RpnOut rpn_forward(Tape& tape, const ad::Binding& P, const ModelConfig& cfg, Var fm) {
  (void)tape;
  int c = cfg.backbone.out_channels();
  int a = cfg.anchors.anchors_per_cell();
  int h = fm.value().dim(0), w = fm.value().dim(1);
  Var mid = ad::relu(
      ad::conv2d(fm, P["rpn.conv.w"], P["rpn.conv.b"], ad::ConvSpec{3, 3, c, c, 1, 1}));
  Var obj =
      ad::conv2d(mid, P["rpn.obj.w"], P["rpn.obj.b"], ad::ConvSpec{1, 1, c, a, 1, 0});
  Var reg = ad::conv2d(mid, P["rpn.reg.w"], P["rpn.reg.b"],
                       ad::ConvSpec{1, 1, c, 4 * a, 1, 0});
  RpnOut out;
  out.obj_logits = ad::reshape(obj, {h * w * a});
  out.offsets = ad::reshape(reg, {h * w * a, 4});  // channel layout (anchor, 4)
  out.fm_h = h;
  out.fm_w = w;
  return out;
}

Var roi_extract(Tape& tape, Var fm, geom::Box box, double stride, int roi_size,
                bool* expanded) {
  (void)tape;
  if (!box.valid()) throw InputError("roi_extract: invalid box");
  bool exp = false;
  if (box.w < stride) {
    double c = box.cx();
    box.x = c - stride / 2;
    box.w = stride;
    exp = true;
  }
  if (box.h < stride) {
    double c = box.cy();
    box.y = c - stride / 2;
    box.h = stride;
    exp = true;
  }
  if (expanded) *expanded = exp;
  std::vector<ad::GridPoint> pts;
  pts.reserve(static_cast<size_t>(roi_size) * roi_size);
  for (int i = 0; i < roi_size; ++i) {
    double py = box.y + (i + 0.5) * box.h / roi_size;
    for (int j = 0; j < roi_size; ++j) {
      double px = box.x + (j + 0.5) * box.w / roi_size;
      // image point -> feature coords: cell centers sit at (k+0.5)*stride
      pts.push_back(ad::GridPoint{py / stride - 0.5, px / stride - 0.5});
    }
  }
  int c = fm.value().dim(2);
  return ad::reshape(ad::bilinear_gather(fm, pts), {roi_size, roi_size, c});
}

HeadOut detect_head(Tape& tape, const ad::Binding& P, const ModelConfig& cfg, Var rois) {
  (void)tape;
  Var hid = ad::relu(ad::affine(rois, P["head.fc.w"], P["head.fc.b"]));
  HeadOut out;
  out.class_logits = ad::affine(hid, P["head.cls.w"], P["head.cls.b"]);
  out.offsets = ad::affine(hid, P["head.reg.w"], P["head.reg.b"]);
  (void)cfg;
  return out;
}

Var type_forward(Tape& tape, const ad::Binding& P, const Tensor& image_ds) {
  Var x = tape.constant(image_ds);
  x = ad::maxpool2(ad::relu(
      ad::conv2d(x, P["type.conv0.w"], P["type.conv0.b"], ad::ConvSpec{3, 3, 3, 8, 1, 1})));
  x = ad::maxpool2(ad::relu(
      ad::conv2d(x, P["type.conv1.w"], P["type.conv1.b"], ad::ConvSpec{3, 3, 8, 16, 1, 1})));
  x = ad::maxpool2(ad::relu(
      ad::conv2d(x, P["type.conv2.w"], P["type.conv2.b"], ad::ConvSpec{3, 3, 16, 32, 1, 1})));
  int hw = x.value().dim(0) * x.value().dim(1);
  Var flat = ad::reshape(x, {hw, 32});
  Var ones = tape.constant(Tensor::full({hw}, 1.0 / hw));
  Var pooled = ad::matmul(ones, flat);  // global average per channel
  Var hid = ad::relu(ad::affine(pooled, P["type.fc.w"], P["type.fc.b"]));
  return ad::affine(hid, P["type.out.w"], P["type.out.b"]);
}

// ---- proposals ---------------------------------------------------------------------

std::vector<ScoredProposal> select_top_proposals(const std::vector<geom::Box>& anchors,
                                                 const Tensor& obj_logits,
                                                 const Tensor& offsets, double img_w,
                                                 double img_h, double score_thresh,
                                                 int top_n) {
  if (static_cast<size_t>(obj_logits.numel()) != anchors.size())
    throw ShapeError("select_top_proposals: anchor/logit count mismatch");
  std::vector<ScoredProposal> all;
  all.reserve(anchors.size());
  for (size_t i = 0; i < anchors.size(); ++i) {
    double score = 1.0 / (1.0 + std::exp(-obj_logits[static_cast<Eigen::Index>(i)]));
    if (score <= score_thresh) continue;
    std::array<double, 4> off = {offsets(static_cast<int>(i), 0), offsets(static_cast<int>(i), 1),
                                 offsets(static_cast<int>(i), 2), offsets(static_cast<int>(i), 3)};
    geom::Box b = geom::decode_offsets(anchors[i], off);
    b = geom::clip_box(b, img_w, img_h);
    all.push_back(ScoredProposal{b, score, static_cast<int>(i)});
  }
  std::stable_sort(all.begin(), all.end(), [](const ScoredProposal& a, const ScoredProposal& b) {
    if (a.objectness != b.objectness) return a.objectness > b.objectness;
    return a.anchor_index < b.anchor_index;  // deterministic tie-break
  });
  if (static_cast<int>(all.size()) > top_n) all.resize(static_cast<size_t>(top_n));
  return all;
}

// ---- minibatch sampling ---------------------------------------------------------------

namespace {

std::vector<int> sample_without_replacement(std::vector<int> pool, size_t n, Rng& rng) {
  if (pool.size() <= n) return pool;
  // partial Fisher-Yates
  for (size_t i = 0; i < n; ++i) {
    size_t j = i + static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size() - i) - 1));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

}  // namespace

RpnBatch sample_rpn_batch(const geom::AssignmentSet& assign, Rng& rng, int max_batch) {
  std::vector<int> pos, neg;
  for (size_t i = 0; i < assign.labels.size(); ++i) {
    if (assign.labels[i] >= 0)
      pos.push_back(static_cast<int>(i));
    else if (assign.labels[i] == geom::AssignmentSet::kNegative)
      neg.push_back(static_cast<int>(i));
  }
  size_t half = static_cast<size_t>(max_batch) / 2;
  pos = sample_without_replacement(std::move(pos), half, rng);
  neg = sample_without_replacement(std::move(neg), std::max(pos.size(), size_t{1}), rng);

  RpnBatch b;
  b.pos_idx = pos;
  for (int i : pos) {
    b.sample_idx.push_back(i);
    b.cls_targets.push_back(1.0);
  }
  for (int i : neg) {
    b.sample_idx.push_back(i);
    b.cls_targets.push_back(0.0);
  }
  b.reg_targets = Tensor({static_cast<int>(pos.size()), 4});
  for (size_t r = 0; r < pos.size(); ++r)
    for (int d = 0; d < 4; ++d)
      b.reg_targets(static_cast<int>(r), d) = assign.offsets[static_cast<size_t>(pos[r])][d];
  return b;
}

ProposalBatch sample_proposal_batch(const std::vector<ScoredProposal>& proposals,
                                    const std::vector<geom::Box>& gt_boxes,
                                    const std::vector<int>& gt_labels, int background_index,
                                    Rng& rng, int max_batch) {
  struct Cand {
    geom::Box box;
    int label;
    int gt = -1;
  };
  std::vector<Cand> fg, bg;
  for (size_t g = 0; g < gt_boxes.size(); ++g)
    fg.push_back(Cand{gt_boxes[g], gt_labels[g], static_cast<int>(g)});
  for (const ScoredProposal& p : proposals) {
    double best = 0;
    int best_g = -1;
    for (size_t g = 0; g < gt_boxes.size(); ++g) {
      double v = geom::iou(p.box, gt_boxes[g]);
      if (v > best) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best >= 0.5)
      fg.push_back(Cand{p.box, gt_labels[static_cast<size_t>(best_g)], best_g});
    else
      bg.push_back(Cand{p.box, background_index, -1});
  }
  size_t half = static_cast<size_t>(max_batch) / 2;
  std::vector<int> fg_idx(fg.size()), bg_idx(bg.size());
  for (size_t i = 0; i < fg.size(); ++i) fg_idx[i] = static_cast<int>(i);
  for (size_t i = 0; i < bg.size(); ++i) bg_idx[i] = static_cast<int>(i);
  fg_idx = sample_without_replacement(std::move(fg_idx), half, rng);
  bg_idx = sample_without_replacement(std::move(bg_idx), std::max<size_t>(fg_idx.size(), 1), rng);

  ProposalBatch b;
  std::vector<std::array<double, 4>> regs;
  for (int i : fg_idx) {
    const Cand& c = fg[static_cast<size_t>(i)];
    b.pos_rows.push_back(static_cast<int>(b.boxes.size()));
    b.boxes.push_back(c.box);
    b.labels.push_back(c.label);
    regs.push_back(geom::encode_offsets(c.box, gt_boxes[static_cast<size_t>(c.gt)]));
  }
  for (int i : bg_idx) {
    const Cand& c = bg[static_cast<size_t>(i)];
    b.boxes.push_back(c.box);
    b.labels.push_back(c.label);
  }
  b.reg_targets = Tensor({static_cast<int>(regs.size()), 4});
  for (size_t r = 0; r < regs.size(); ++r)
    for (int d = 0; d < 4; ++d) b.reg_targets(static_cast<int>(r), d) = regs[r][d];
  return b;
}

DetectionLossParts detection_loss(Tape& tape, const RpnOut& rpn, const RpnBatch& rpn_batch,
                                  const HeadOut& head, const ProposalBatch& prop_batch) {
  DetectionLossParts parts{};
  Var zero = tape.constant(Tensor::scalar(0.0));

  if (!rpn_batch.sample_idx.empty()) {
    Var logits = ad::gather(rpn.obj_logits, rpn_batch.sample_idx);
    Tensor targets({static_cast<int>(rpn_batch.cls_targets.size())});
    for (size_t i = 0; i < rpn_batch.cls_targets.size(); ++i)
      targets[static_cast<Eigen::Index>(i)] = rpn_batch.cls_targets[i];
    parts.rpn_cls = ad::bce_with_logits(logits, targets);
  } else {
    parts.rpn_cls = zero;
  }
  if (!rpn_batch.pos_idx.empty()) {
    Var off = ad::gather_rows(rpn.offsets, rpn_batch.pos_idx);
    parts.rpn_reg = ad::smooth_l1(off, rpn_batch.reg_targets);
  } else {
    parts.rpn_reg = zero;  // no positive anchors: regression term is 0
  }
  if (!prop_batch.labels.empty()) {
    parts.head_cls = ad::ce_with_logits(head.class_logits, prop_batch.labels);
  } else {
    parts.head_cls = zero;
  }
  if (!prop_batch.pos_rows.empty()) {
    Var off = ad::gather_rows(head.offsets, prop_batch.pos_rows);
    parts.head_reg = ad::smooth_l1(off, prop_batch.reg_targets);
  } else {
    parts.head_reg = zero;
  }
  parts.total = ad::add(ad::add(parts.rpn_cls, parts.rpn_reg),
                        ad::add(parts.head_cls, parts.head_reg));
  return parts;
}

}  // namespace chartx::net
