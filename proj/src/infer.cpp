#include "chartx/infer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

namespace chartx::infer {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using gen::AnnotationSet;
using gen::ChartKind;
using gen::ObjectClass;
using nlohmann::json;
using nlohmann::ordered_json;

namespace fs = std::filesystem;

// ---- models ------------------------------------------------------------------

Models Models::load(const std::string& model_dir) {
  Models m;
  fs::path dir(model_dir);
  if (fs::exists(dir / "type.ckpt")) {
    ad::load_checkpoint(m.type_store, (dir / "type.ckpt").string());
    m.has_type = true;
  }
  if (fs::exists(dir / "bar.ckpt")) {
    ordered_json meta = ad::load_checkpoint(m.bar_store, (dir / "bar.ckpt").string());
    m.bar_cfg = net::ModelConfig::from_json(meta.at("model"));
    m.has_bar = true;
  }
  if (fs::exists(dir / "pie.ckpt")) {
    ordered_json meta = ad::load_checkpoint(m.pie_store, (dir / "pie.ckpt").string());
    m.pie_cfg = net::ModelConfig::from_json(meta.at("model"));
    m.has_pie = true;
  }
  if (!m.has_type && !m.has_bar && !m.has_pie)
    throw IoError("Models::load: no checkpoints found in " + model_dir);
  return m;
}

// ---- result JSON ----------------------------------------------------------------

ordered_json ExtractionResult::to_json() const {
  ordered_json j;
  j["chart_type"] = gen::to_string(kind);
  j["title"] = title;
  j["x_axis_label"] = x_axis_label;
  j["y_axis_label"] = y_axis_label;
  ordered_json bars_j = ordered_json::array();
  for (const BarTuple& b : bars)
    bars_j.push_back(ordered_json{{"x_tick_label", b.x_tick_label},
                                  {"value", b.value},
                                  {"lower_tick_label", b.lower_tick_label},
                                  {"upper_tick_label", b.upper_tick_label}});
  j["bars"] = std::move(bars_j);
  ordered_json slices_j = ordered_json::array();
  for (const PieTuple& s : slices)
    slices_j.push_back(ordered_json{{"legend", s.legend}, {"percentage", s.percentage}});
  j["slices"] = std::move(slices_j);
  ordered_json dets = ordered_json::array();
  for (const Detection& d : detections) {
    ordered_json dj;
    dj["class"] = gen::to_string(d.cls);
    dj["bbox"] = {d.box.x, d.box.y, d.box.w, d.box.h};
    dj["confidence"] = d.confidence;
    dj["orientation_deg"] = d.orientation_deg;
    if (d.text)
      dj["text"] = *d.text;
    else
      dj["text"] = nullptr;
    dets.push_back(std::move(dj));
  }
  j["detections"] = std::move(dets);
  return j;
}

ExtractionResult ExtractionResult::from_json(const json& j) {
  ExtractionResult r;
  r.kind = gen::chart_kind_from_string(j.at("chart_type").get<std::string>());
  r.title = j.value("title", "");
  r.x_axis_label = j.value("x_axis_label", "");
  r.y_axis_label = j.value("y_axis_label", "");
  if (j.contains("bars"))
    for (const json& b : j.at("bars"))
      r.bars.push_back(BarTuple{b.at("x_tick_label").get<std::string>(),
                                b.at("value").get<double>(),
                                b.at("lower_tick_label").get<std::string>(),
                                b.at("upper_tick_label").get<std::string>()});
  if (j.contains("slices"))
    for (const json& s : j.at("slices"))
      r.slices.push_back(
          PieTuple{s.at("legend").get<std::string>(), s.at("percentage").get<double>()});
  if (j.contains("detections"))
    for (const json& d : j.at("detections")) {
      Detection det;
      det.cls = gen::object_class_from_string(d.at("class").get<std::string>());
      auto bb = d.at("bbox");
      det.box = geom::Box{bb.at(0).get<double>(), bb.at(1).get<double>(),
                          bb.at(2).get<double>(), bb.at(3).get<double>()};
      det.confidence = d.value("confidence", 0.0);
      det.orientation_deg = d.value("orientation_deg", 0.0);
      if (d.contains("text") && !d.at("text").is_null())
        det.text = d.at("text").get<std::string>();
      r.detections.push_back(std::move(det));
    }
  return r;
}

// ---- deterministic building blocks -----------------------------------------------

double interpolate_value(double y_pixel, const std::vector<std::pair<double, double>>& anchors,
                         bool global_fit) {
  // distinct pixel rows only
  std::vector<std::pair<double, double>> rows;
  for (const auto& a : anchors) {
    bool dup = false;
    for (const auto& r : rows)
      if (r.first == a.first) dup = true;
    if (!dup) rows.push_back(a);
  }
  if (rows.size() < 2) throw ExtractionError("insufficient axis calibration");

  if (global_fit) {
    // least squares v = a*row + b
    double n = static_cast<double>(rows.size());
    double sr = 0, sv = 0, srr = 0, srv = 0;
    for (const auto& [r, v] : rows) {
      sr += r;
      sv += v;
      srr += r * r;
      srv += r * v;
    }
    double denom = n * srr - sr * sr;
    if (denom == 0) throw ExtractionError("insufficient axis calibration");
    double a = (n * srv - sr * sv) / denom;
    double b = (sv - a * sr) / n;
    return a * y_pixel + b;
  }

  std::sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
    double da = std::abs(a.first - y_pixel), db = std::abs(b.first - y_pixel);
    if (da != db) return da < db;
    return a.first < b.first;
  });
  const auto& [r1, v1] = rows[0];
  const auto& [r2, v2] = rows[1];
  return v1 + (y_pixel - r1) * (v2 - v1) / (r2 - r1);
}

std::optional<double> parse_tick_number(const std::string& s) {
  std::string t;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) t += c;
  if (!t.empty() && t.back() == '%') t.pop_back();
  // strip thousands separators
  std::string u;
  for (char c : t)
    if (c != ',') u += c;
  if (u.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(u.c_str(), &end);
  if (end != u.c_str() + u.size()) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

std::pair<std::string, std::string> lower_upper_ticks(
    double value, const std::vector<std::pair<double, std::string>>& ticks) {
  if (ticks.empty()) return {"", ""};
  std::vector<std::pair<double, std::string>> sorted = ticks;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double eps = 1e-9 * std::max(1.0, std::abs(value));
  const std::pair<double, std::string>* lower = &sorted.front();
  const std::pair<double, std::string>* upper = &sorted.back();
  for (const auto& t : sorted)
    if (t.first <= value + eps) lower = &t;
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it)
    if (it->first >= value - eps) upper = &*it;
  return {lower->second, upper->second};
}

// ---- assembly -----------------------------------------------------------------------

namespace {

std::vector<const PerceivedObject*> of_class(const Perception& p, ObjectClass c) {
  std::vector<const PerceivedObject*> out;
  for (const auto& o : p.objects)
    if (o.cls == c) out.push_back(&o);
  return out;
}

const PerceivedObject* best_of_class(const Perception& p, ObjectClass c) {
  const PerceivedObject* best = nullptr;
  for (const auto& o : p.objects)
    if (o.cls == c && (!best || o.confidence > best->confidence)) best = &o;
  return best;
}

// Greedy one-to-one matching: higher score first, ties by smaller ids.
std::map<int, int> greedy_one_to_one(const std::vector<const PerceivedObject*>& as,
                                     const std::vector<const PerceivedObject*>& bs,
                                     const std::function<double(const PerceivedObject&,
                                                                const PerceivedObject&)>& score) {
  struct Cand {
    double s;
    int ai, bi;
  };
  std::vector<Cand> cands;
  for (size_t i = 0; i < as.size(); ++i)
    for (size_t j = 0; j < bs.size(); ++j)
      cands.push_back(Cand{score(*as[i], *bs[j]), static_cast<int>(i), static_cast<int>(j)});
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (a.s != b.s) return a.s > b.s;
    if (as[static_cast<size_t>(a.ai)]->id != as[static_cast<size_t>(b.ai)]->id)
      return as[static_cast<size_t>(a.ai)]->id < as[static_cast<size_t>(b.ai)]->id;
    return bs[static_cast<size_t>(a.bi)]->id < bs[static_cast<size_t>(b.bi)]->id;
  });
  std::vector<bool> used_a(as.size(), false), used_b(bs.size(), false);
  std::map<int, int> out;  // index into as -> index into bs
  for (const Cand& c : cands) {
    if (used_a[static_cast<size_t>(c.ai)] || used_b[static_cast<size_t>(c.bi)]) continue;
    used_a[static_cast<size_t>(c.ai)] = true;
    used_b[static_cast<size_t>(c.bi)] = true;
    out[c.ai] = c.bi;
  }
  return out;
}

std::string trimmed(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ExtractionResult assemble_bar(const Perception& p, bool global_fit) {
  ExtractionResult r;
  r.kind = ChartKind::Bar;
  if (const auto* t = best_of_class(p, ObjectClass::Title)) r.title = t->text;
  if (const auto* t = best_of_class(p, ObjectClass::XAxisLabel)) r.x_axis_label = t->text;
  if (const auto* t = best_of_class(p, ObjectClass::YAxisLabel)) r.y_axis_label = t->text;

  // axis calibration from y-tick label/line pairs
  auto ylabels = of_class(p, ObjectClass::YTickLabel);
  auto ylines = of_class(p, ObjectClass::YTickLine);
  auto ymatch = greedy_one_to_one(ylabels, ylines, [&](const auto& a, const auto& b) {
    return p.pair_score(a, b, PairRole::YTickLabelLine);
  });
  std::vector<std::pair<double, double>> anchors;  // (row, value)
  std::vector<std::pair<double, std::string>> ticks;
  for (const auto& [ai, bi] : ymatch) {
    const PerceivedObject* lab = ylabels[static_cast<size_t>(ai)];
    const PerceivedObject* line = ylines[static_cast<size_t>(bi)];
    auto v = parse_tick_number(lab->text);
    if (!v) continue;  // unparseable ticks skipped
    anchors.push_back({line->box.cy(), *v});
    ticks.push_back({*v, lab->text});
  }

  auto bars = of_class(p, ObjectClass::Bar);
  if (bars.empty()) throw ExtractionError("no bars detected");
  std::sort(bars.begin(), bars.end(), [](const auto* a, const auto* b) {
    if (a->box.x != b->box.x) return a->box.x < b->box.x;
    return a->id < b->id;
  });

  // legend mark -> legend label text
  auto marks = of_class(p, ObjectClass::LegendMark);
  auto leg_labels = of_class(p, ObjectClass::LegendLabel);
  auto mark_match = greedy_one_to_one(marks, leg_labels, [&](const auto& a, const auto& b) {
    return p.pair_score(a, b, PairRole::LegendMarkLabel);
  });
  std::map<int, std::string> mark_text;  // mark object id -> label text
  for (const auto& [mi, li] : mark_match)
    mark_text[marks[static_cast<size_t>(mi)]->id] = leg_labels[static_cast<size_t>(li)]->text;

  // bar -> label assignment: legend marks win over x-tick labels when a
  // legend exists (grouped charts)
  std::map<int, std::string> bar_label;  // bar id -> x_tick_label field
  if (!marks.empty()) {
    for (const auto* bar : bars) {
      const PerceivedObject* best = nullptr;
      double best_s = -1;
      for (const auto* mark : marks) {
        double s = p.pair_score(*bar, *mark, PairRole::BarLegendMark);
        if (s > best_s || (s == best_s && best && mark->id < best->id)) {
          best_s = s;
          best = mark;
        }
      }
      bar_label[bar->id] = best && mark_text.count(best->id) ? mark_text[best->id] : "";
    }
  } else {
    auto xlabels = of_class(p, ObjectClass::XTickLabel);
    auto bmatch = greedy_one_to_one(bars, xlabels, [&](const auto& a, const auto& b) {
      return p.pair_score(a, b, PairRole::BarXTickLabel);
    });
    for (const auto& [bi, xi] : bmatch)
      bar_label[bars[static_cast<size_t>(bi)]->id] = xlabels[static_cast<size_t>(xi)]->text;
  }

  for (const auto* bar : bars) {
    BarTuple t;
    t.x_tick_label = bar_label.count(bar->id) ? bar_label[bar->id] : "";
    // predicted value from the top boundary row of the bar
    t.value = interpolate_value(bar->box.y, anchors, global_fit);
    auto [lo, hi] = lower_upper_ticks(t.value, ticks);
    t.lower_tick_label = lo;
    t.upper_tick_label = hi;
    r.bars.push_back(std::move(t));
  }
  return r;
}

ExtractionResult assemble_pie(const Perception& p) {
  ExtractionResult r;
  r.kind = ChartKind::Pie;
  if (const auto* t = best_of_class(p, ObjectClass::Title)) r.title = t->text;
  if (p.pie_angles.size() < 2) throw ExtractionError("no pie proposal decoded");

  std::vector<double> angles = p.pie_angles;  // canonical counter-clockwise order
  std::sort(angles.begin(), angles.end());
  std::vector<double> pct = net::angles_to_percentages(angles);

  auto marks = of_class(p, ObjectClass::LegendMark);
  auto leg_labels = of_class(p, ObjectClass::LegendLabel);
  auto mark_match = greedy_one_to_one(marks, leg_labels, [&](const auto& a, const auto& b) {
    return p.pair_score(a, b, PairRole::LegendMarkLabel);
  });
  std::map<int, std::string> mark_text;
  for (const auto& [mi, li] : mark_match)
    mark_text[marks[static_cast<size_t>(mi)]->id] = leg_labels[static_cast<size_t>(li)]->text;

  // slice -> legend mark, one-to-one greedy on the rotated-feature scores
  struct Cand {
    double s;
    int slice, mi;
  };
  std::vector<Cand> cands;
  for (size_t k = 0; k < angles.size(); ++k)
    for (size_t mi = 0; mi < marks.size(); ++mi)
      cands.push_back(Cand{p.slice_score(static_cast<int>(k), *marks[mi]),
                           static_cast<int>(k), static_cast<int>(mi)});
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (a.s != b.s) return a.s > b.s;
    if (a.slice != b.slice) return a.slice < b.slice;
    return marks[static_cast<size_t>(a.mi)]->id < marks[static_cast<size_t>(b.mi)]->id;
  });
  std::vector<int> slice_mark(angles.size(), -1);
  std::vector<bool> used_mark(marks.size(), false);
  for (const Cand& c : cands) {
    if (slice_mark[static_cast<size_t>(c.slice)] >= 0 || used_mark[static_cast<size_t>(c.mi)])
      continue;
    slice_mark[static_cast<size_t>(c.slice)] = c.mi;
    used_mark[static_cast<size_t>(c.mi)] = true;
  }

  for (size_t k = 0; k < angles.size(); ++k) {
    PieTuple t;
    t.percentage = pct[k];
    int mi = slice_mark[k];
    if (mi >= 0) {
      int mark_id = marks[static_cast<size_t>(mi)]->id;
      if (mark_text.count(mark_id)) t.legend = mark_text[mark_id];
    }
    r.slices.push_back(std::move(t));
  }
  return r;
}

// ---- GT-oracle mode -----------------------------------------------------------------

ExtractionResult extract_oracle(const AnnotationSet& ann) {
  Perception p;
  p.kind = ann.kind;
  for (const auto& o : ann.objects) {
    PerceivedObject po;
    po.id = o.id;
    po.cls = o.cls;
    po.box = o.bbox;
    po.confidence = 1.0;
    po.orientation_deg = o.orientation_deg;
    po.text = o.text ? trimmed(*o.text) : "";
    p.objects.push_back(std::move(po));
  }
  p.pie_angles = ann.slice_boundary_angles_deg;
  p.pair_score = [&ann](const PerceivedObject& a, const PerceivedObject& b, PairRole role) {
    gen::RelationKind want;
    switch (role) {
      case PairRole::BarLegendMark: want = gen::RelationKind::BarLegendMark; break;
      case PairRole::BarXTickLabel: want = gen::RelationKind::BarXTickLabel; break;
      case PairRole::YTickLabelLine: want = gen::RelationKind::YTickLabelLine; break;
      case PairRole::LegendMarkLabel: want = gen::RelationKind::LegendMarkLabel; break;
      default: return 0.0;
    }
    for (const auto& r : ann.relations)
      if (r.kind == want && r.a == a.id && r.b == b.id) return 1.0;
    return 0.0;
  };
  p.slice_score = [&ann](int slice, const PerceivedObject& mark) {
    for (const auto& r : ann.relations)
      if (r.kind == gen::RelationKind::SliceLegendMark && r.a == slice && r.b == mark.id)
        return 1.0;
    return 0.0;
  };
  ExtractionResult r =
      ann.kind == ChartKind::Bar ? assemble_bar(p) : assemble_pie(p);
  for (const auto& o : p.objects) {
    Detection d;
    d.cls = o.cls;
    d.box = o.box;
    d.confidence = 1.0;
    d.orientation_deg = o.orientation_deg;
    if (gen::is_text_class(o.cls)) d.text = o.text;
    r.detections.push_back(std::move(d));
  }
  return r;
}

// ---- neural mode -------------------------------------------------------------------

ChartKind classify_chart_type(const Models& models, const gen::ImageRGB& image,
                              double* confidence) {
  if (!models.has_type) throw InputError("classify_chart_type: type model not loaded");
  Tape tape;
  ad::ParameterStore& store = const_cast<ad::ParameterStore&>(models.type_store);
  ad::Binding P(tape, store);
  Tensor img = net::image_to_tensor(image, 4);
  Var logits = net::type_forward(tape, P, img);
  double z0 = logits.value()[0], z1 = logits.value()[1];
  double m = std::max(z0, z1);
  double p0 = std::exp(z0 - m), p1 = std::exp(z1 - m);
  double total = p0 + p1;
  p0 /= total;
  p1 /= total;
  if (confidence) *confidence = std::max(p0, p1);
  return p0 >= p1 ? ChartKind::Bar : ChartKind::Pie;
}

namespace {

struct NeuralScene {
  std::vector<PerceivedObject> objects;
  std::vector<Detection> detections;
  std::map<int, geom::Box> boxes;  // object id -> box
};

// Shared detector pass: proposals -> head -> confidence gate -> class NMS ->
// text recognition. All tape work stays inside the caller's tape.
NeuralScene detect_scene(Tape& tape, ad::Binding& P, const net::ModelConfig& cfg,
                         const Tensor& img, const net::BackboneOut& bb) {
  NeuralScene scene;
  net::RpnOut rpn = net::rpn_forward(tape, P, cfg, bb.final);
  auto anchors = geom::generate_anchors(rpn.fm_h, rpn.fm_w, cfg.anchors);
  auto proposals =
      net::select_top_proposals(anchors, rpn.obj_logits.value(), rpn.offsets.value(),
                                img.dim(1), img.dim(0), 0.5, cfg.rpn_top_n);
  if (proposals.empty()) return scene;

  std::vector<Var> roi_rows;
  double stride = cfg.backbone.stride();
  for (const auto& pr : proposals)
    roi_rows.push_back(ad::flatten(net::roi_extract(tape, bb.final, pr.box, stride, cfg.roi_size)));
  net::HeadOut head = net::detect_head(tape, P, cfg, ad::stack_rows(roi_rows));

  int kn = cfg.num_classes();
  struct RawDet {
    geom::Box box;
    int cls;
    double conf;
    int index;
  };
  std::vector<RawDet> dets;
  auto logits = head.class_logits.value();
  auto offs = head.offsets.value();
  for (size_t i = 0; i < proposals.size(); ++i) {
    // softmax over classes + background
    double mx = -1e300;
    for (int k = 0; k <= kn; ++k) mx = std::max(mx, logits(static_cast<int>(i), k));
    double denom = 0;
    for (int k = 0; k <= kn; ++k) denom += std::exp(logits(static_cast<int>(i), k) - mx);
    double p_bg = std::exp(logits(static_cast<int>(i), kn) - mx) / denom;
    int best_k = 0;
    double best_p = -1;
    for (int k = 0; k < kn; ++k) {
      double pk = std::exp(logits(static_cast<int>(i), k) - mx) / denom;
      if (pk > best_p) {
        best_p = pk;
        best_k = k;
      }
    }
    double conf = proposals[i].objectness * (1.0 - p_bg);
    if (conf <= cfg.confidence_thresh) continue;  // paper's 0.8 gate
    std::array<double, 4> o = {offs(static_cast<int>(i), 0), offs(static_cast<int>(i), 1),
                               offs(static_cast<int>(i), 2), offs(static_cast<int>(i), 3)};
    geom::Box refined = geom::clip_box(geom::decode_offsets(proposals[i].box, o), img.dim(1),
                                       img.dim(0));
    dets.push_back(RawDet{refined, best_k, conf, static_cast<int>(i)});
  }

  // class-wise NMS
  std::vector<RawDet> kept;
  for (int k = 0; k < kn; ++k) {
    std::vector<geom::Scored> scored;
    std::vector<const RawDet*> pool;
    for (const RawDet& d : dets)
      if (d.cls == k) {
        scored.push_back(geom::Scored{d.box, d.conf, d.index});
        pool.push_back(&d);
      }
    auto keep = geom::nms(scored, cfg.nms_iou);
    for (const auto& s : keep)
      kept.push_back(RawDet{s.box, k, s.score, s.index});
  }
  std::sort(kept.begin(), kept.end(),
            [](const RawDet& a, const RawDet& b) { return a.index < b.index; });

  const auto& classes = cfg.classes();
  for (size_t i = 0; i < kept.size(); ++i) {
    PerceivedObject po;
    po.id = static_cast<int>(i);
    po.cls = classes[static_cast<size_t>(kept[i].cls)];
    po.box = kept[i].box;
    po.confidence = kept[i].conf;
    if (gen::is_text_class(po.cls)) {
      Var roi = net::roi_extract(tape, bb.final, po.box, stride, cfg.roi_size);
      Var angle = net::orientation_head(tape, P, roi);
      po.orientation_deg = angle.value()[0];
      net::TextPrediction tp =
          net::recognize_text(tape, P, cfg, bb.stage1, po.box, po.orientation_deg);
      po.text = tp.decoded;
    }
    Detection d;
    d.cls = po.cls;
    d.box = po.box;
    d.confidence = po.confidence;
    d.orientation_deg = po.orientation_deg;
    if (gen::is_text_class(po.cls)) d.text = po.text;
    scene.detections.push_back(d);
    scene.boxes[po.id] = po.box;
    scene.objects.push_back(std::move(po));
  }
  return scene;
}

}  // namespace

ExtractionResult extract_bar(const gen::ImageRGB& image, const Models& models) {
  if (!models.has_bar) throw InputError("extract_bar: bar model not loaded");
  const net::ModelConfig& cfg = models.bar_cfg;
  Tape tape;
  ad::Binding P(tape, const_cast<ad::ParameterStore&>(models.bar_store));
  Tensor img = net::image_to_tensor(image);
  net::BackboneOut bb = net::backbone_forward(tape, P, cfg, img);
  NeuralScene scene = detect_scene(tape, P, cfg, img, bb);

  double stride = cfg.backbone.stride();
  std::map<int, Var> roi_cache;
  auto roi_of = [&](const PerceivedObject& o) {
    auto it = roi_cache.find(o.id);
    if (it != roi_cache.end()) return it->second;
    Var r = ad::flatten(net::roi_extract(tape, bb.final, o.box, stride, cfg.roi_size));
    roi_cache.emplace(o.id, r);
    return r;
  };

  Perception p;
  p.kind = ChartKind::Bar;
  p.img_w = img.dim(1);
  p.img_h = img.dim(0);
  p.objects = scene.objects;
  p.pair_score = [&](const PerceivedObject& a, const PerceivedObject& b, PairRole role) {
    if (role == PairRole::BarLegendMark) {
      Var s = net::om_score(tape, P, net::OmKind::Feature, roi_of(a), roi_of(b));
      return s.value()[0];
    }
    Var ca = tape.constant(net::positional_code(a.box, p.img_w, p.img_h));
    Var cb = tape.constant(net::positional_code(b.box, p.img_w, p.img_h));
    Var s = net::om_score(tape, P, net::OmKind::Positional, ca, cb);
    return s.value()[0];
  };
  ExtractionResult r = assemble_bar(p);
  r.detections = scene.detections;
  return r;
}

ExtractionResult extract_pie(const gen::ImageRGB& image, const Models& models) {
  if (!models.has_pie) throw InputError("extract_pie: pie model not loaded");
  const net::ModelConfig& cfg = models.pie_cfg;
  Tape tape;
  ad::Binding P(tape, const_cast<ad::ParameterStore&>(models.pie_store));
  Tensor img = net::image_to_tensor(image);
  net::BackboneOut bb = net::backbone_forward(tape, P, cfg, img);
  NeuralScene scene = detect_scene(tape, P, cfg, img, bb);

  // single pie assumption: highest-confidence pie proposal
  const PerceivedObject* pie = nullptr;
  for (const auto& o : scene.objects)
    if (o.cls == ObjectClass::Pie && (!pie || o.confidence > pie->confidence)) pie = &o;
  if (!pie) throw ExtractionError("no pie proposal");

  double stride = cfg.backbone.stride();
  Var pie_roi = net::roi_extract(tape, bb.final, pie->box, stride, cfg.roi_size);
  net::AngleDecode dec = net::decode_angles(tape, P, cfg, pie_roi, cfg.angle_max_steps);

  std::map<int, Var> roi_cache;
  auto roi_of = [&](const PerceivedObject& o) {
    auto it = roi_cache.find(o.id);
    if (it != roi_cache.end()) return it->second;
    Var r = ad::flatten(net::roi_extract(tape, bb.final, o.box, stride, cfg.roi_size));
    roi_cache.emplace(o.id, r);
    return r;
  };

  Perception p;
  p.kind = ChartKind::Pie;
  p.img_w = img.dim(1);
  p.img_h = img.dim(0);
  p.objects = scene.objects;
  std::vector<double> angles = dec.seq.angles_deg;
  std::sort(angles.begin(), angles.end());
  p.pie_angles = angles;
  p.pair_score = [&](const PerceivedObject& a, const PerceivedObject& b, PairRole role) {
    (void)role;
    Var ca = tape.constant(net::positional_code(a.box, p.img_w, p.img_h));
    Var cb = tape.constant(net::positional_code(b.box, p.img_w, p.img_h));
    Var s = net::om_score(tape, P, net::OmKind::Positional, ca, cb);
    return s.value()[0];
  };
  p.slice_score = [&](int k, const PerceivedObject& mark) {
    Var rotated = net::slice_feature(pie_roi, p.pie_angles[static_cast<size_t>(k)]);
    Var s = net::om_score(tape, P, net::OmKind::Feature, ad::flatten(rotated), roi_of(mark));
    return s.value()[0];
  };
  ExtractionResult r = assemble_pie(p);
  r.detections = scene.detections;
  return r;
}

ExtractionResult extract(const gen::ImageRGB& image, const Models& models) {
  ChartKind kind = classify_chart_type(models, image);
  return kind == ChartKind::Bar ? extract_bar(image, models) : extract_pie(image, models);
}

}  // namespace chartx::infer
