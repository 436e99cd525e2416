#include "chartx/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "chartx/fonts.hpp"

namespace chartx::train {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using gen::AnnotationSet;
using gen::ChartKind;
using gen::ObjectClass;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- configs -------------------------------------------------------------------

void LossWeights::validate() const {
  if (text < 0 || om < 0 || ang < 0) throw ConfigError("LossWeights: weights must be >= 0");
}

ordered_json LossWeights::to_json() const {
  return ordered_json{{"text", text}, {"om", om}, {"ang", ang}};
}

LossWeights LossWeights::from_json(const json& j) {
  LossWeights w;
  for (auto& [key, val] : j.items()) {
    (void)val;
    if (key != "text" && key != "om" && key != "ang")
      throw ConfigError("LossWeights: unknown key '" + key + "'");
  }
  if (j.contains("text")) w.text = j.at("text").get<double>();
  if (j.contains("om")) w.om = j.at("om").get<double>();
  if (j.contains("ang")) w.ang = j.at("ang").get<double>();
  w.validate();
  return w;
}

void TrainSchedule::validate() const {
  if (stage1_steps < 0 || stage2_steps < 0)
    throw ConfigError("TrainSchedule: step counts must be >= 0");
  if (lr <= 0) throw ConfigError("TrainSchedule: lr must be positive");
  if (plateau_window < 10) throw ConfigError("TrainSchedule: plateau_window too small");
  if (max_texts_per_step < 0 || max_pairs_per_kind < 0)
    throw ConfigError("TrainSchedule: per-step sampling caps must be >= 0");
}

ordered_json TrainSchedule::to_json() const {
  ordered_json j;
  j["stage1_steps"] = stage1_steps;
  j["stage2_steps"] = stage2_steps;
  j["lr"] = lr;
  j["grad_clip"] = grad_clip;
  j["seed"] = seed;
  j["checkpoint_every"] = checkpoint_every;
  j["plateau_enabled"] = plateau_enabled;
  j["plateau_rel"] = plateau_rel;
  j["plateau_window"] = plateau_window;
  j["lambda_o"] = lambda_o;
  j["lambda_c"] = lambda_c;
  j["max_texts_per_step"] = max_texts_per_step;
  j["max_pairs_per_kind"] = max_pairs_per_kind;
  return j;
}

TrainSchedule TrainSchedule::from_json(const json& j) {
  static const std::vector<std::string> known = {
      "stage1_steps", "stage2_steps",   "lr",           "grad_clip",
      "seed",         "checkpoint_every", "plateau_enabled", "plateau_rel",
      "plateau_window", "lambda_o",     "lambda_c",     "max_texts_per_step",
      "max_pairs_per_kind"};
  for (auto& [key, val] : j.items()) {
    (void)val;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("TrainSchedule: unknown key '" + key + "'");
  }
  TrainSchedule s;
  auto opt = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  opt("stage1_steps", s.stage1_steps);
  opt("stage2_steps", s.stage2_steps);
  opt("lr", s.lr);
  opt("grad_clip", s.grad_clip);
  opt("seed", s.seed);
  opt("checkpoint_every", s.checkpoint_every);
  opt("plateau_enabled", s.plateau_enabled);
  opt("plateau_rel", s.plateau_rel);
  opt("plateau_window", s.plateau_window);
  opt("lambda_o", s.lambda_o);
  opt("lambda_c", s.lambda_c);
  opt("max_texts_per_step", s.max_texts_per_step);
  opt("max_pairs_per_kind", s.max_pairs_per_kind);
  s.validate();
  return s;
}

double assemble_loss(ChartKind kind, double l_det, double l_text, double l_om,
                     std::optional<double> l_ang, const LossWeights& weights) {
  weights.validate();
  if ((kind == ChartKind::Pie) != l_ang.has_value())
    throw InputError("assemble_loss: L_ang present iff kind is pie");
  double total = l_det + weights.text * l_text + weights.om * l_om;
  if (kind == ChartKind::Pie) total += weights.ang * *l_ang;
  return total;
}

void write_history_csv(const std::vector<StepLosses>& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_history_csv: cannot open " + path);
  out << "step,stage,L_det,L_text,L_OM,L_ang,total\n";
  char buf[256];
  for (const StepLosses& h : history) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", h.step, h.stage,
                  h.det, h.text, h.om, h.ang, h.total);
    out << buf;
  }
}

// ---- in-memory dataset -------------------------------------------------------------

namespace {

struct LoadedChart {
  gen::ImageRGB image;
  AnnotationSet ann;
};

std::vector<LoadedChart> load_charts(const std::string& dataset_dir) {
  auto manifest = gen::load_manifest(dataset_dir);
  auto anns = gen::load_annotations(dataset_dir);
  if (manifest.entries.size() != anns.size())
    throw IoError("dataset: manifest/annotation count mismatch");
  std::vector<LoadedChart> charts;
  charts.reserve(anns.size());
  for (size_t i = 0; i < anns.size(); ++i) {
    LoadedChart c;
    c.image = gen::read_png(dataset_dir + "/" + manifest.entries[i].image);
    c.ann = std::move(anns[i]);
    charts.push_back(std::move(c));
  }
  return charts;
}

int class_index(const net::ModelConfig& cfg, ObjectClass c) {
  const auto& cs = cfg.classes();
  auto it = std::find(cs.begin(), cs.end(), c);
  if (it == cs.end()) throw InputError("class_index: class not in model set");
  return static_cast<int>(it - cs.begin());
}

struct GtView {
  std::vector<geom::Box> boxes;
  std::vector<int> labels;
};

GtView gt_view(const net::ModelConfig& cfg, const AnnotationSet& ann) {
  GtView v;
  for (const auto& o : ann.objects) {
    v.boxes.push_back(o.bbox);
    v.labels.push_back(class_index(cfg, o.cls));
  }
  return v;
}

// Snapshot of everything a bit-exact resume needs.
struct TrainerState {
  ad::ParameterStore store;
  int64_t adam_t = 0;
  uint64_t rng_state = 0;
  int step = 0;
};

void save_resume(const TrainerState& st, const net::ModelConfig* mcfg,
                 const std::string& path) {
  ordered_json meta;
  meta["step"] = st.step;
  meta["adam_t"] = st.adam_t;
  meta["rng_state"] = st.rng_state;
  if (mcfg) meta["model"] = mcfg->to_json();
  ad::save_checkpoint(st.store, path, "f64", &meta, /*with_optimizer=*/true);
}

// OM training pairs for one chart, ground-truth geometry, confidence 1.
struct OmPairSpec {
  net::OmKind kind;
  int id_a = -1, id_b = -1;  // object ids; for slices id_a is the slice index
  bool matched = false;
  bool slice_pair = false;
};

std::vector<OmPairSpec> build_om_pairs(const AnnotationSet& ann, Rng& rng, int max_per_kind) {
  std::vector<OmPairSpec> out;
  auto ids_of = [&](ObjectClass c) {
    std::vector<int> ids;
    for (const auto& o : ann.objects)
      if (o.cls == c) ids.push_back(o.id);
    return ids;
  };
  auto add_relation_pairs = [&](gen::RelationKind rk, net::OmKind omk, ObjectClass cls_a,
                                ObjectClass cls_b, bool slice_pair) {
    std::vector<std::pair<int, int>> pos;
    for (const auto& r : ann.relations)
      if (r.kind == rk) pos.push_back({r.a, r.b});
    if (pos.empty()) return;
    std::vector<int> as, bs;
    if (slice_pair) {
      for (size_t i = 0; i < ann.slice_boundary_angles_deg.size(); ++i)
        as.push_back(static_cast<int>(i));
    } else {
      as = ids_of(cls_a);
    }
    bs = ids_of(cls_b);
    int quota = std::min<int>(max_per_kind, static_cast<int>(pos.size()));
    for (int i = 0; i < quota; ++i) {
      auto& p = pos[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pos.size()) - 1))];
      out.push_back(OmPairSpec{omk, p.first, p.second, true, slice_pair});
      // negative: same a, different b
      if (bs.size() > 1) {
        int nb = p.second;
        int guard = 0;
        while (nb == p.second && guard++ < 32)
          nb = bs[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(bs.size()) - 1))];
        if (nb != p.second)
          out.push_back(OmPairSpec{omk, p.first, nb, false, slice_pair});
      }
    }
  };
  add_relation_pairs(gen::RelationKind::YTickLabelLine, net::OmKind::Positional,
                     ObjectClass::YTickLabel, ObjectClass::YTickLine, false);
  add_relation_pairs(gen::RelationKind::LegendMarkLabel, net::OmKind::Positional,
                     ObjectClass::LegendMark, ObjectClass::LegendLabel, false);
  add_relation_pairs(gen::RelationKind::BarXTickLabel, net::OmKind::Positional,
                     ObjectClass::Bar, ObjectClass::XTickLabel, false);
  add_relation_pairs(gen::RelationKind::BarLegendMark, net::OmKind::Feature, ObjectClass::Bar,
                     ObjectClass::LegendMark, false);
  add_relation_pairs(gen::RelationKind::SliceLegendMark, net::OmKind::Feature,
                     ObjectClass::Pie, ObjectClass::LegendMark, true);
  return out;
}

}  // namespace

// ---- extractor training ----------------------------------------------------------------

TrainResult train_extractor(const std::string& dataset_dir, const net::ModelConfig& mcfg,
                            const TrainSchedule& sched, const LossWeights& weights,
                            const std::string& out_path, const std::string& resume_path) {
  sched.validate();
  weights.validate();
  auto charts = load_charts(dataset_dir);
  if (charts.empty()) throw InputError("train_extractor: empty dataset");
  for (const auto& c : charts)
    if (c.ann.kind != mcfg.kind)
      throw InputError("train_extractor: dataset kind does not match model kind");

  TrainerState st;
  st.rng_state = sched.seed;
  {
    Rng init_rng(Rng::derive(sched.seed, 0xC0FFEE));
    net::init_extractor_params(st.store, mcfg, init_rng);
  }
  ad::Adam adam(ad::AdamConfig{sched.lr, 0.9, 0.999, 1e-8, sched.grad_clip});
  if (!resume_path.empty()) {
    ordered_json meta = ad::load_checkpoint(st.store, resume_path);
    st.step = meta.at("step").get<int>();
    st.adam_t = meta.at("adam_t").get<int64_t>();
    st.rng_state = meta.at("rng_state").get<uint64_t>();
    adam.set_t(st.adam_t);
  }
  Rng rng(0);
  rng.restore_state(st.rng_state);

  const int total_steps = sched.stage1_steps + sched.stage2_steps;
  int stage2_start = sched.stage1_steps;
  TrainResult result;
  result.stage2_start_step = stage2_start;

  TrainerState snapshot = st;
  rng.save_state(snapshot.rng_state);
  double stride = mcfg.backbone.stride();
  auto anchors_cache = std::map<std::pair<int, int>, std::vector<geom::Box>>{};

  std::vector<double> totals;  // for the plateau detector
  int stage1_end = sched.stage1_steps;

  int step = st.step;
  while (step < total_steps) {
    int stage = step < stage1_end ? 1 : 2;
    if (stage == 1 && sched.plateau_enabled && step >= 2 * sched.plateau_window &&
        step < stage1_end) {
      double recent = 0, before = 0;
      for (int i = 0; i < sched.plateau_window; ++i) {
        recent += totals[totals.size() - 1 - static_cast<size_t>(i)];
        before += totals[totals.size() - 1 - static_cast<size_t>(i + sched.plateau_window)];
      }
      if (before > 0 && (before - recent) / before < sched.plateau_rel) {
        stage1_end = step;  // plateau: release branches now
        stage2_start = step;
        result.stage2_start_step = step;
        stage = 2;
      }
    }
    // stage-1 freeze keeps branch parameters bit-identical to their init
    for (const auto& prefix : net::branch_prefixes())
      st.store.set_trainable_prefix(prefix, stage == 2);

    const LoadedChart& chart =
        charts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(charts.size()) - 1))];
    const AnnotationSet& ann = chart.ann;

    StepLosses losses;
    losses.step = step + 1;
    losses.stage = stage;
    try {
      Tape tape;
      ad::Binding P(tape, st.store);
      Tensor img = net::image_to_tensor(chart.image);
      net::BackboneOut bb = net::backbone_forward(tape, P, mcfg, img);
      net::RpnOut rpn = net::rpn_forward(tape, P, mcfg, bb.final);

      auto key = std::make_pair(rpn.fm_h, rpn.fm_w);
      auto ait = anchors_cache.find(key);
      if (ait == anchors_cache.end())
        ait = anchors_cache.emplace(key, geom::generate_anchors(rpn.fm_h, rpn.fm_w, mcfg.anchors))
                  .first;
      const auto& anchors = ait->second;

      GtView gt = gt_view(mcfg, ann);
      geom::AssignmentSet assign =
          geom::assign_anchors(anchors, gt.boxes, mcfg.rpn_pos_thresh, mcfg.rpn_neg_thresh);
      net::RpnBatch rpn_batch = net::sample_rpn_batch(assign, rng);

      auto proposals = net::select_top_proposals(anchors, rpn.obj_logits.value(),
                                                 rpn.offsets.value(), img.dim(1), img.dim(0),
                                                 0.3, mcfg.rpn_top_n);
      net::ProposalBatch prop_batch = net::sample_proposal_batch(
          proposals, gt.boxes, gt.labels, mcfg.background_index(), rng);

      std::vector<Var> roi_rows;
      for (const geom::Box& b : prop_batch.boxes)
        roi_rows.push_back(
            ad::flatten(net::roi_extract(tape, bb.final, b, stride, mcfg.roi_size)));
      net::HeadOut head = net::detect_head(tape, P, mcfg, ad::stack_rows(roi_rows));

      net::DetectionLossParts det =
          net::detection_loss(tape, rpn, rpn_batch, head, prop_batch);
      Var total = det.total;
      losses.det = det.total.value()[0];

      if (stage == 2) {
        // ---- text branch on ground-truth geometry ----
        std::vector<const gen::AnnObject*> texts;
        for (const auto& o : ann.objects)
          if (gen::is_text_class(o.cls) && o.text) texts.push_back(&o);
        // deterministic subsample
        for (int i = static_cast<int>(texts.size()) - 1; i > 0; --i)
          std::swap(texts[static_cast<size_t>(i)],
                    texts[static_cast<size_t>(rng.uniform_int(0, i))]);
        if (static_cast<int>(texts.size()) > sched.max_texts_per_step)
          texts.resize(static_cast<size_t>(sched.max_texts_per_step));
        Var l_text = tape.constant(Tensor::scalar(0.0));
        int text_count = 0;
        for (const auto* o : texts) {
          Var roi = net::roi_extract(tape, bb.final, o->bbox, stride, mcfg.roi_size);
          Var angle_pred = net::orientation_head(tape, P, roi);
          Var frames = net::text_frames(tape, bb.stage1, o->bbox, o->orientation_deg, 2.0, mcfg);
          Var logits = net::text_logits(tape, P, frames);
          std::vector<int> target = net::string_to_symbols(*o->text);
          int min_frames = static_cast<int>(target.size());
          for (size_t i = 1; i < target.size(); ++i)
            if (target[i] == target[i - 1]) ++min_frames;
          if (min_frames > logits.value().dim(0)) continue;  // box too small for target
          Var lt = net::text_branch_loss(tape, angle_pred, o->orientation_deg, logits, target,
                                         sched.lambda_o, sched.lambda_c);
          l_text = ad::add(l_text, lt);
          ++text_count;
        }
        if (text_count > 0) l_text = ad::scale(l_text, 1.0 / text_count);
        losses.text = l_text.value()[0];

        // ---- object matching ----
        net::SmoothIndicatorParams hp{mcfg.smooth_tau, mcfg.smooth_k};
        auto pair_specs = build_om_pairs(ann, rng, sched.max_pairs_per_kind);
        std::vector<net::OmPair> pairs;
        Var pie_roi;
        bool have_pie_roi = false;
        std::map<int, Var> roi_cache;
        auto roi_of = [&](int id) {
          auto it = roi_cache.find(id);
          if (it != roi_cache.end()) return it->second;
          const gen::AnnObject* o = ann.find(id);
          Var r = ad::flatten(net::roi_extract(tape, bb.final, o->bbox, stride, mcfg.roi_size));
          roi_cache.emplace(id, r);
          return r;
        };
        for (const OmPairSpec& ps : pair_specs) {
          Var a, b;
          if (ps.kind == net::OmKind::Positional) {
            a = tape.constant(net::positional_code(ann.find(ps.id_a)->bbox, img.dim(1), img.dim(0)));
            b = tape.constant(net::positional_code(ann.find(ps.id_b)->bbox, img.dim(1), img.dim(0)));
          } else if (ps.slice_pair) {
            if (!have_pie_roi) {
              auto pies = ann.of_class(ObjectClass::Pie);
              if (pies.empty()) continue;
              pie_roi = net::roi_extract(tape, bb.final, pies[0]->bbox, stride, mcfg.roi_size);
              have_pie_roi = true;
            }
            double angle = ann.slice_boundary_angles_deg[static_cast<size_t>(ps.id_a)];
            a = ad::flatten(net::slice_feature(pie_roi, angle));
            b = roi_of(ps.id_b);
          } else {
            a = roi_of(ps.id_a);
            b = roi_of(ps.id_b);
          }
          net::OmPair pair;
          pair.logit = net::om_logit(tape, P, ps.kind, a, b);
          pair.matched = ps.matched;
          pairs.push_back(pair);
        }
        Var l_om = net::om_loss(tape, pairs, hp);
        losses.om = l_om.value()[0];

        Var weighted = ad::add(ad::scale(l_text, weights.text), ad::scale(l_om, weights.om));

        // ---- pie angle decoder ----
        if (mcfg.kind == ChartKind::Pie && !ann.slice_boundary_angles_deg.empty()) {
          auto pies = ann.of_class(ObjectClass::Pie);
          if (!pies.empty()) {
            Var pie_feat =
                net::roi_extract(tape, bb.final, pies[0]->bbox, stride, mcfg.roi_size);
            int n = static_cast<int>(ann.slice_boundary_angles_deg.size());
            net::AngleDecode dec =
                net::decode_angles(tape, P, mcfg, pie_feat, mcfg.angle_max_steps, n + 1);
            Var l_ang = net::angle_loss(tape, dec, ann.slice_boundary_angles_deg);
            losses.ang = l_ang.value()[0];
            weighted = ad::add(weighted, ad::scale(l_ang, weights.ang));
          }
        }
        total = ad::add(total, weighted);
      }

      losses.total = total.value()[0];
      tape.backward(total);
      adam.step(st.store, P);
    } catch (const NumericError& e) {
      // divergence: persist the last good state and abort
      st = snapshot;
      save_resume(st, &mcfg, out_path + ".lastgood.ckpt");
      throw NumericError(std::string("train_extractor: diverged (") + e.what() +
                         "); last good checkpoint written to " + out_path + ".lastgood.ckpt");
    }

    ++step;
    st.step = step;
    result.history.push_back(losses);
    totals.push_back(losses.total);

    if (sched.checkpoint_every > 0 && step % sched.checkpoint_every == 0) {
      snapshot = st;
      rng.save_state(snapshot.rng_state);
      st.adam_t = adam.t();
      snapshot.adam_t = adam.t();
      save_resume(snapshot, &mcfg, out_path + ".resume.ckpt");
    }
  }

  // final export: f32 checkpoint with embedded model config
  ordered_json meta;
  meta["model"] = mcfg.to_json();
  meta["steps"] = step;
  meta["stage2_start"] = result.stage2_start_step;
  ad::save_checkpoint(st.store, out_path, "f32", &meta, false);
  {
    std::ofstream mf(out_path + ".meta.json", std::ios::trunc);
    mf << mcfg.to_json().dump(2) << "\n";
  }
  write_history_csv(result.history, out_path + ".history.csv");
  result.checkpoint_path = out_path;
  return result;
}

// ---- chart type classifier ------------------------------------------------------------

TrainResult train_type_classifier(const std::string& dataset_dir, const TrainSchedule& sched,
                                  const std::string& out_path) {
  sched.validate();
  auto charts = load_charts(dataset_dir);
  if (charts.empty()) throw InputError("train_type_classifier: empty dataset");

  ad::ParameterStore store;
  {
    Rng init_rng(Rng::derive(sched.seed, 0xBEEF));
    net::init_type_params(store, init_rng);
  }
  ad::Adam adam(ad::AdamConfig{sched.lr, 0.9, 0.999, 1e-8, sched.grad_clip});
  Rng rng(sched.seed);

  TrainResult result;
  int total_steps = sched.stage1_steps + sched.stage2_steps;
  for (int step = 0; step < total_steps; ++step) {
    const LoadedChart& chart =
        charts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(charts.size()) - 1))];
    Tape tape;
    ad::Binding P(tape, store);
    Tensor img = net::image_to_tensor(chart.image, 4);
    Var logits = net::type_forward(tape, P, img);
    int label = chart.ann.kind == ChartKind::Bar ? 0 : 1;
    Var loss = ad::ce_with_logits(ad::reshape(logits, {1, 2}), {label});
    tape.backward(loss);
    adam.step(store, P);
    StepLosses h;
    h.step = step + 1;
    h.stage = 1;
    h.det = loss.value()[0];
    h.total = h.det;
    result.history.push_back(h);
  }
  ordered_json meta;
  meta["model"] = "type_classifier";
  ad::save_checkpoint(store, out_path, "f32", &meta, false);
  write_history_csv(result.history, out_path + ".history.csv");
  result.checkpoint_path = out_path;
  return result;
}

}  // namespace chartx::train
