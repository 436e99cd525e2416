#include "chartx/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace chartx::eval {

using gen::AnnotationSet;
using gen::ChartKind;
using gen::ObjectClass;
using infer::BarTuple;
using infer::ExtractionResult;
using infer::PieTuple;
using nlohmann::ordered_json;

namespace {

std::string trimmed(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool text_eq(const std::string& a, const std::string& b) { return trimmed(a) == trimmed(b); }

}  // namespace

std::optional<double> average_precision(std::vector<ScoredBox> preds,
                                        const std::vector<std::pair<int, geom::Box>>& gts,
                                        double iou_match) {
  if (preds.empty() && gts.empty()) return std::nullopt;
  if (gts.empty()) return 0.0;
  if (preds.empty()) return 0.0;

  std::stable_sort(preds.begin(), preds.end(),
                   [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
  std::vector<bool> gt_used(gts.size(), false);
  int tp_total = 0;
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const ScoredBox& p : preds) {
    double best = iou_match;
    int best_g = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g].first != p.chart) continue;
      double v = geom::iou(p.box, gts[g].second);
      if (v >= best) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0) {
      gt_used[static_cast<size_t>(best_g)] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  tp_total = tp;
  (void)tp_total;

  // precision envelope, all-point interpolation
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[static_cast<size_t>(i)] =
        std::max(precision[static_cast<size_t>(i)], precision[static_cast<size_t>(i) + 1]);
  double ap = 0, prev_r = 0;
  for (size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_r) * precision[i];
    prev_r = recall[i];
  }
  return ap;
}

double value_error(double pred, double gt) {
  if (gt == 0.0) return pred == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(pred - gt) / std::abs(gt);
}

GtChart gt_chart(const AnnotationSet& ann) {
  GtChart g;
  g.kind = ann.kind;
  for (const auto& o : ann.objects) {
    if (o.cls == ObjectClass::Title && o.text) g.title = *o.text;
    if (o.cls == ObjectClass::XAxisLabel && o.text) g.x_axis_label = *o.text;
    if (o.cls == ObjectClass::YAxisLabel && o.text) g.y_axis_label = *o.text;
  }
  if (ann.kind == ChartKind::Bar) {
    // parsed y ticks for lower/upper labels
    std::vector<std::pair<double, std::string>> ticks;
    for (const auto& o : ann.objects) {
      if (o.cls != ObjectClass::YTickLabel || !o.text) continue;
      auto v = infer::parse_tick_number(*o.text);
      if (v) ticks.push_back({*v, *o.text});
    }
    // legend mark id -> label text
    std::map<int, std::string> mark_text;
    for (const auto& r : ann.relations)
      if (r.kind == gen::RelationKind::LegendMarkLabel) {
        const auto* lab = ann.find(r.b);
        if (lab && lab->text) mark_text[r.a] = *lab->text;
      }
    // bars sorted left to right like the extractor output
    std::vector<const gen::AnnObject*> bars;
    for (const auto& o : ann.objects)
      if (o.cls == ObjectClass::Bar) bars.push_back(&o);
    std::sort(bars.begin(), bars.end(), [](const auto* a, const auto* b) {
      if (a->bbox.x != b->bbox.x) return a->bbox.x < b->bbox.x;
      return a->id < b->id;
    });
    for (const auto* bar : bars) {
      BarTuple t;
      auto vit = ann.bar_values.find(bar->id);
      if (vit == ann.bar_values.end()) throw InputError("gt_chart: bar without value");
      t.value = vit->second;
      for (const auto& r : ann.relations) {
        if (r.a != bar->id) continue;
        if (r.kind == gen::RelationKind::BarXTickLabel) {
          const auto* lab = ann.find(r.b);
          if (lab && lab->text) t.x_tick_label = *lab->text;
        } else if (r.kind == gen::RelationKind::BarLegendMark) {
          auto mt = mark_text.find(r.b);
          if (mt != mark_text.end()) t.x_tick_label = mt->second;
        }
      }
      auto [lo, hi] = infer::lower_upper_ticks(t.value, ticks);
      t.lower_tick_label = lo;
      t.upper_tick_label = hi;
      g.bars.push_back(std::move(t));
    }
  } else {
    std::map<int, std::string> mark_text;
    for (const auto& r : ann.relations)
      if (r.kind == gen::RelationKind::LegendMarkLabel) {
        const auto* lab = ann.find(r.b);
        if (lab && lab->text) mark_text[r.a] = *lab->text;
      }
    auto pct = net::angles_to_percentages(ann.slice_boundary_angles_deg);
    for (size_t k = 0; k < pct.size(); ++k) {
      PieTuple t;
      t.percentage = pct[k];
      for (const auto& r : ann.relations)
        if (r.kind == gen::RelationKind::SliceLegendMark && r.a == static_cast<int>(k)) {
          auto mt = mark_text.find(r.b);
          if (mt != mark_text.end()) t.legend = mt->second;
        }
      g.slices.push_back(std::move(t));
    }
  }
  return g;
}

bool tuple_match(const BarTuple& pred, const BarTuple& gt, double band) {
  return value_error(pred.value, gt.value) < band && text_eq(pred.x_tick_label, gt.x_tick_label) &&
         text_eq(pred.lower_tick_label, gt.lower_tick_label) &&
         text_eq(pred.upper_tick_label, gt.upper_tick_label);
}

bool tuple_match(const PieTuple& pred, const PieTuple& gt, double band) {
  return value_error(pred.percentage, gt.percentage) < band && text_eq(pred.legend, gt.legend);
}

bool chart_correct(const ExtractionResult& pred, const GtChart& gt) {
  if (!text_eq(pred.title, gt.title)) return false;
  if (gt.kind == ChartKind::Bar) {
    if (!text_eq(pred.x_axis_label, gt.x_axis_label) ||
        !text_eq(pred.y_axis_label, gt.y_axis_label))
      return false;
    if (pred.bars.size() != gt.bars.size()) return false;  // cardinality mismatch
    std::vector<bool> used(gt.bars.size(), false);
    for (const BarTuple& pt : pred.bars) {
      bool found = false;
      for (size_t i = 0; i < gt.bars.size(); ++i) {
        if (used[i]) continue;
        if (tuple_match(pt, gt.bars[i], 0.01)) {
          used[i] = true;
          found = true;
          break;
        }
      }
      if (!found) return false;
    }
    return true;
  }
  if (pred.slices.size() != gt.slices.size()) return false;
  std::vector<bool> used(gt.slices.size(), false);
  for (const PieTuple& pt : pred.slices) {
    bool found = false;
    for (size_t i = 0; i < gt.slices.size(); ++i) {
      if (used[i]) continue;
      if (tuple_match(pt, gt.slices[i], 0.01)) {
        used[i] = true;
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

// ---- report ---------------------------------------------------------------------------

namespace {

// Greedy tuple alignment: exact x-tick label match first, then minimal value
// error.
template <typename Tuple>
std::vector<int> align_tuples(const std::vector<Tuple>& preds, const std::vector<Tuple>& gts,
                              const std::function<bool(const Tuple&, const Tuple&)>& label_eq,
                              const std::function<double(const Tuple&, const Tuple&)>& verr) {
  struct Cand {
    bool label;
    double err;
    int pi, gi;
  };
  std::vector<Cand> cands;
  for (size_t i = 0; i < preds.size(); ++i)
    for (size_t j = 0; j < gts.size(); ++j)
      cands.push_back(Cand{label_eq(preds[i], gts[j]), verr(preds[i], gts[j]),
                           static_cast<int>(i), static_cast<int>(j)});
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.label != b.label) return a.label > b.label;
    if (a.err != b.err) return a.err < b.err;
    if (a.pi != b.pi) return a.pi < b.pi;
    return a.gi < b.gi;
  });
  std::vector<int> gt_to_pred(gts.size(), -1);
  std::vector<bool> pred_used(preds.size(), false);
  for (const Cand& c : cands) {
    if (pred_used[static_cast<size_t>(c.pi)] || gt_to_pred[static_cast<size_t>(c.gi)] >= 0)
      continue;
    pred_used[static_cast<size_t>(c.pi)] = true;
    gt_to_pred[static_cast<size_t>(c.gi)] = c.pi;
  }
  return gt_to_pred;
}

struct Counter {
  int hit = 0, total = 0;
  void add(bool ok) {
    hit += ok ? 1 : 0;
    ++total;
  }
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(hit) / total; }
};

}  // namespace

double EvaluationReport::accuracy(const std::string& row) const {
  for (const auto& [name, v] : accuracy_rows)
    if (name == row) return v;
  throw InputError("EvaluationReport: no accuracy row named " + row);
}

ordered_json EvaluationReport::to_json() const {
  ordered_json j;
  j["kind"] = gen::to_string(kind);
  ordered_json ap = ordered_json::object();
  for (const auto& [name, v] : ap_rows) {
    if (v)
      ap[name] = *v;
    else
      ap[name] = nullptr;
  }
  if (mean_ap)
    ap["Mean"] = *mean_ap;
  else
    ap["Mean"] = nullptr;
  j["average_precision"] = std::move(ap);
  ordered_json acc = ordered_json::object();
  for (const auto& [name, v] : accuracy_rows) acc[name] = v;
  j["accuracy"] = std::move(acc);
  j["counts"] = ordered_json{{"charts", charts}, {"tuples", tuples}, {"predictions", predictions}};
  j["metadata"] = ordered_json{
      {"lower_upper_interpretation",
       "exact-match accuracy of the lower/upper tick labels within matched tuples"}};
  return j;
}

std::string EvaluationReport::to_text() const {
  std::ostringstream os;
  auto line = [&](const std::string& name, const std::string& val) {
    os << name;
    for (size_t i = name.size(); i < 22; ++i) os << ' ';
    os << val << "\n";
  };
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.1f", v * 100.0);
    return std::string(buf);
  };
  os << "Average precision (" << gen::to_string(kind) << ")\n";
  for (const auto& [name, v] : ap_rows) line(name, v ? pct(*v) : "   n/a");
  line("Mean", mean_ap ? pct(*mean_ap) : "   n/a");
  os << "\nAccuracy (" << gen::to_string(kind) << ")\n";
  for (const auto& [name, v] : accuracy_rows) line(name, pct(v));
  os << "\ncharts " << charts << ", tuples " << tuples << ", predictions " << predictions
     << "\n";
  return os.str();
}

std::string chart_id_from_image(const std::string& image_path) {
  size_t slash = image_path.find_last_of('/');
  std::string base = slash == std::string::npos ? image_path : image_path.substr(slash + 1);
  size_t dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

EvaluationReport build_report(ChartKind kind, const std::vector<PredEntry>& preds,
                              const std::vector<GtEntry>& gts) {
  std::map<std::string, const PredEntry*> pred_by_id;
  for (const auto& p : preds) pred_by_id[p.id] = &p;
  {
    std::set<std::string> gt_ids;
    for (const auto& g : gts) gt_ids.insert(g.id);
    std::string unmatched;
    for (const auto& p : preds)
      if (!gt_ids.count(p.id)) unmatched += (unmatched.empty() ? "" : ", ") + p.id;
    if (!unmatched.empty())
      throw InputError("build_report: predictions without ground truth: " + unmatched);
  }

  EvaluationReport rep;
  rep.kind = kind;
  rep.charts = static_cast<int>(gts.size());

  // ---- AP over detection classes ----
  const auto& classes = gen::class_set(kind);
  std::vector<std::optional<double>> aps;
  for (ObjectClass cls : classes) {
    std::vector<ScoredBox> cls_preds;
    std::vector<std::pair<int, geom::Box>> cls_gts;
    for (size_t ci = 0; ci < gts.size(); ++ci) {
      for (const auto& o : gts[ci].ann.objects)
        if (o.cls == cls) cls_gts.push_back({static_cast<int>(ci), o.bbox});
      auto it = pred_by_id.find(gts[ci].id);
      if (it == pred_by_id.end() || !it->second->ok) continue;
      for (const auto& d : it->second->result.detections)
        if (d.cls == cls)
          cls_preds.push_back(ScoredBox{d.box, d.confidence, static_cast<int>(ci)});
    }
    auto ap = average_precision(cls_preds, cls_gts);
    rep.ap_rows.push_back({gen::to_string(cls), ap});
    aps.push_back(ap);
  }
  {
    double sum = 0;
    int n = 0;
    for (const auto& ap : aps)
      if (ap) {
        sum += *ap;
        ++n;
      }
    if (n > 0) rep.mean_ap = sum / n;
  }

  // ---- accuracy rows ----
  const double bands[4] = {0.01, 0.05, 0.10, 0.25};
  Counter all_c, title_c, xaxis_c, yaxis_c;
  Counter tuple_c[4], value_c[4], xtick_c, lower_c, upper_c;
  Counter legend_c;
  int predictions = 0;

  for (const auto& g : gts) {
    GtChart gt = gt_chart(g.ann);
    auto it = pred_by_id.find(g.id);
    const ExtractionResult* pred =
        (it != pred_by_id.end() && it->second->ok) ? &it->second->result : nullptr;
    if (pred) predictions += 1;

    title_c.add(pred && text_eq(pred->title, gt.title));
    if (kind == ChartKind::Bar) {
      xaxis_c.add(pred && text_eq(pred->x_axis_label, gt.x_axis_label));
      yaxis_c.add(pred && text_eq(pred->y_axis_label, gt.y_axis_label));
    }
    all_c.add(pred && chart_correct(*pred, gt));

    if (kind == ChartKind::Bar) {
      std::vector<BarTuple> pt = pred ? pred->bars : std::vector<BarTuple>{};
      auto gt_to_pred = align_tuples<BarTuple>(
          pt, gt.bars,
          [](const BarTuple& a, const BarTuple& b) {
            return text_eq(a.x_tick_label, b.x_tick_label);
          },
          [](const BarTuple& a, const BarTuple& b) { return value_error(a.value, b.value); });
      for (size_t gi = 0; gi < gt.bars.size(); ++gi) {
        int pi = gt_to_pred[gi];
        const BarTuple* m = pi >= 0 ? &pt[static_cast<size_t>(pi)] : nullptr;
        double verr =
            m ? value_error(m->value, gt.bars[gi].value) : std::numeric_limits<double>::infinity();
        for (int b = 0; b < 4; ++b) {
          tuple_c[b].add(m && tuple_match(*m, gt.bars[gi], bands[b]));
          value_c[b].add(m && verr < bands[b]);
        }
        xtick_c.add(m && text_eq(m->x_tick_label, gt.bars[gi].x_tick_label));
        lower_c.add(m && text_eq(m->lower_tick_label, gt.bars[gi].lower_tick_label));
        upper_c.add(m && text_eq(m->upper_tick_label, gt.bars[gi].upper_tick_label));
      }
      rep.tuples += static_cast<int>(gt.bars.size());
    } else {
      std::vector<PieTuple> pt = pred ? pred->slices : std::vector<PieTuple>{};
      auto gt_to_pred = align_tuples<PieTuple>(
          pt, gt.slices,
          [](const PieTuple& a, const PieTuple& b) { return text_eq(a.legend, b.legend); },
          [](const PieTuple& a, const PieTuple& b) {
            return value_error(a.percentage, b.percentage);
          });
      for (size_t gi = 0; gi < gt.slices.size(); ++gi) {
        int pi = gt_to_pred[gi];
        const PieTuple* m = pi >= 0 ? &pt[static_cast<size_t>(pi)] : nullptr;
        double verr = m ? value_error(m->percentage, gt.slices[gi].percentage)
                        : std::numeric_limits<double>::infinity();
        for (int b = 0; b < 4; ++b) {
          tuple_c[b].add(m && tuple_match(*m, gt.slices[gi], bands[b]));
          value_c[b].add(m && verr < bands[b]);
        }
        legend_c.add(m && text_eq(m->legend, gt.slices[gi].legend));
      }
      rep.tuples += static_cast<int>(gt.slices.size());
    }
  }

  rep.predictions = predictions;
  rep.accuracy_rows.push_back({"ALL", all_c.rate()});
  rep.accuracy_rows.push_back({"Title", title_c.rate()});
  if (kind == ChartKind::Bar) {
    rep.accuracy_rows.push_back({"X-axis label", xaxis_c.rate()});
    rep.accuracy_rows.push_back({"Y-axis label", yaxis_c.rate()});
  }
  const char* band_names[4] = {"1%", "5%", "10%", "25%"};
  for (int b = 0; b < 4; ++b)
    rep.accuracy_rows.push_back(
        {std::string("Tuple ") + band_names[b] + " err", tuple_c[b].rate()});
  if (kind == ChartKind::Bar) {
    rep.accuracy_rows.push_back({"X-tick label", xtick_c.rate()});
    rep.accuracy_rows.push_back({"Lower value", lower_c.rate()});
    rep.accuracy_rows.push_back({"Upper value", upper_c.rate()});
    for (int b = 0; b < 4; ++b)
      rep.accuracy_rows.push_back(
          {std::string("Value ") + band_names[b] + " err", value_c[b].rate()});
  } else {
    rep.accuracy_rows.push_back({"Legend", legend_c.rate()});
    for (int b = 0; b < 4; ++b)
      rep.accuracy_rows.push_back(
          {std::string("Percent ") + band_names[b] + " err", value_c[b].rate()});
  }
  return rep;
}

}  // namespace chartx::eval
