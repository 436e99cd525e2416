#include "chartx/chart_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "chartx/fonts.hpp"

namespace chartx::gen {

using nlohmann::json;
using nlohmann::ordered_json;

// ---- enums ---------------------------------------------------------------------

std::string to_string(ChartKind k) { return k == ChartKind::Bar ? "bar" : "pie"; }

ChartKind chart_kind_from_string(const std::string& s) {
  if (s == "bar") return ChartKind::Bar;
  if (s == "pie") return ChartKind::Pie;
  throw InputError("unknown chart kind: " + s);
}

namespace {
const std::pair<ObjectClass, const char*> kClassNames[] = {
    {ObjectClass::Title, "title"},
    {ObjectClass::XAxisLabel, "x_axis_label"},
    {ObjectClass::YAxisLabel, "y_axis_label"},
    {ObjectClass::XTickLabel, "x_tick_label"},
    {ObjectClass::YTickLabel, "y_tick_label"},
    {ObjectClass::XTickLine, "x_tick_line"},
    {ObjectClass::YTickLine, "y_tick_line"},
    {ObjectClass::LegendLabel, "legend_label"},
    {ObjectClass::LegendMark, "legend_mark"},
    {ObjectClass::Bar, "bar"},
    {ObjectClass::Pie, "pie"},
};
const std::pair<RelationKind, const char*> kRelationNames[] = {
    {RelationKind::BarLegendMark, "bar_legend_mark"},
    {RelationKind::BarXTickLabel, "bar_x_tick_label"},
    {RelationKind::YTickLabelLine, "y_tick_label_line"},
    {RelationKind::LegendMarkLabel, "legend_mark_label"},
    {RelationKind::SliceLegendMark, "slice_legend_mark"},
};
}  // namespace

std::string to_string(ObjectClass c) {
  for (auto& [cls, name] : kClassNames)
    if (cls == c) return name;
  throw InputError("bad object class");
}

ObjectClass object_class_from_string(const std::string& s) {
  for (auto& [cls, name] : kClassNames)
    if (s == name) return cls;
  throw InputError("unknown object class: " + s);
}

bool is_text_class(ObjectClass c) {
  switch (c) {
    case ObjectClass::Title:
    case ObjectClass::XAxisLabel:
    case ObjectClass::YAxisLabel:
    case ObjectClass::XTickLabel:
    case ObjectClass::YTickLabel:
    case ObjectClass::LegendLabel:
      return true;
    default:
      return false;
  }
}

const std::vector<ObjectClass>& bar_class_set() {
  static const std::vector<ObjectClass> s = {
      ObjectClass::Title,      ObjectClass::XAxisLabel, ObjectClass::YAxisLabel,
      ObjectClass::XTickLabel, ObjectClass::YTickLabel, ObjectClass::XTickLine,
      ObjectClass::YTickLine,  ObjectClass::LegendLabel, ObjectClass::LegendMark,
      ObjectClass::Bar,
  };
  return s;
}

const std::vector<ObjectClass>& pie_class_set() {
  static const std::vector<ObjectClass> s = {
      ObjectClass::Title,
      ObjectClass::Pie,
      ObjectClass::LegendLabel,
      ObjectClass::LegendMark,
  };
  return s;
}

const std::vector<ObjectClass>& class_set(ChartKind k) {
  return k == ChartKind::Bar ? bar_class_set() : pie_class_set();
}

std::string to_string(RelationKind k) {
  for (auto& [kind, name] : kRelationNames)
    if (kind == k) return name;
  throw InputError("bad relation kind");
}

RelationKind relation_kind_from_string(const std::string& s) {
  for (auto& [kind, name] : kRelationNames)
    if (s == name) return kind;
  throw InputError("unknown relation kind: " + s);
}

// ---- AnnotationSet --------------------------------------------------------------

const AnnObject* AnnotationSet::find(int id) const {
  for (const AnnObject& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

std::vector<const AnnObject*> AnnotationSet::of_class(ObjectClass c) const {
  std::vector<const AnnObject*> out;
  for (const AnnObject& o : objects)
    if (o.cls == c) out.push_back(&o);
  return out;
}

ordered_json AnnotationSet::to_json() const {
  ordered_json j;
  j["image"] = image;
  j["kind"] = to_string(kind);
  ordered_json objs = ordered_json::array();
  for (const AnnObject& o : objects) {
    ordered_json jo;
    jo["id"] = o.id;
    jo["class"] = to_string(o.cls);
    jo["bbox"] = {static_cast<int>(o.bbox.x), static_cast<int>(o.bbox.y),
                  static_cast<int>(o.bbox.w), static_cast<int>(o.bbox.h)};
    jo["orientation_deg"] = o.orientation_deg;
    if (o.text)
      jo["text"] = *o.text;
    else
      jo["text"] = nullptr;
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);
  ordered_json rels = ordered_json::array();
  for (const AnnRelation& r : relations)
    rels.push_back(ordered_json{{"a", r.a}, {"b", r.b}, {"kind", to_string(r.kind)}});
  j["relations"] = std::move(rels);
  if (kind == ChartKind::Pie) j["slice_boundary_angles_deg"] = slice_boundary_angles_deg;
  ordered_json vals = ordered_json::object();
  for (auto& [id, v] : bar_values) vals[std::to_string(id)] = v;
  j["bar_values"] = std::move(vals);
  return j;
}

AnnotationSet AnnotationSet::from_json(const json& j) {
  AnnotationSet a;
  a.image = j.value("image", "");
  a.kind = chart_kind_from_string(j.at("kind").get<std::string>());
  for (const json& jo : j.at("objects")) {
    AnnObject o;
    o.id = jo.at("id").get<int>();
    o.cls = object_class_from_string(jo.at("class").get<std::string>());
    auto bb = jo.at("bbox");
    o.bbox = geom::Box{bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(),
                       bb.at(3).get<double>()};
    o.orientation_deg = jo.value("orientation_deg", 0.0);
    if (jo.contains("text") && !jo.at("text").is_null())
      o.text = jo.at("text").get<std::string>();
    a.objects.push_back(std::move(o));
  }
  for (const json& jr : j.at("relations"))
    a.relations.push_back(AnnRelation{jr.at("a").get<int>(), jr.at("b").get<int>(),
                                      relation_kind_from_string(jr.at("kind").get<std::string>())});
  if (j.contains("slice_boundary_angles_deg"))
    a.slice_boundary_angles_deg = j.at("slice_boundary_angles_deg").get<std::vector<double>>();
  if (j.contains("bar_values"))
    for (auto& [k, v] : j.at("bar_values").items())
      a.bar_values[std::stoi(k)] = v.get<double>();
  return a;
}

void AnnotationSet::validate(int canvas_w, int canvas_h) const {
  const auto& allowed = class_set(kind);
  std::set<int> ids;
  for (const AnnObject& o : objects) {
    if (!ids.insert(o.id).second) throw InputError("annotation: duplicate object id");
    if (std::find(allowed.begin(), allowed.end(), o.cls) == allowed.end())
      throw InputError("annotation: class " + to_string(o.cls) + " not allowed for " +
                       to_string(kind) + " charts");
    if (o.bbox.x < 0 || o.bbox.y < 0 || o.bbox.x2() > canvas_w || o.bbox.y2() > canvas_h)
      throw InputError("annotation: bbox outside canvas");
    if (!o.bbox.valid()) throw InputError("annotation: degenerate bbox");
    if (is_text_class(o.cls) != o.text.has_value())
      throw InputError("annotation: text presence mismatch for " + to_string(o.cls));
  }
  auto cls_of = [&](int id) -> ObjectClass {
    const AnnObject* o = find(id);
    if (!o) throw InputError("annotation: relation endpoint id missing: " + std::to_string(id));
    return o->cls;
  };
  int slices = static_cast<int>(slice_boundary_angles_deg.size());
  for (const AnnRelation& r : relations) {
    switch (r.kind) {
      case RelationKind::BarLegendMark:
        if (cls_of(r.a) != ObjectClass::Bar || cls_of(r.b) != ObjectClass::LegendMark)
          throw InputError("annotation: bad bar_legend_mark relation");
        break;
      case RelationKind::BarXTickLabel:
        if (cls_of(r.a) != ObjectClass::Bar || cls_of(r.b) != ObjectClass::XTickLabel)
          throw InputError("annotation: bad bar_x_tick_label relation");
        break;
      case RelationKind::YTickLabelLine:
        if (cls_of(r.a) != ObjectClass::YTickLabel || cls_of(r.b) != ObjectClass::YTickLine)
          throw InputError("annotation: bad y_tick_label_line relation");
        break;
      case RelationKind::LegendMarkLabel:
        if (cls_of(r.a) != ObjectClass::LegendMark || cls_of(r.b) != ObjectClass::LegendLabel)
          throw InputError("annotation: bad legend_mark_label relation");
        break;
      case RelationKind::SliceLegendMark:
        if (r.a < 0 || r.a >= slices || cls_of(r.b) != ObjectClass::LegendMark)
          throw InputError("annotation: bad slice_legend_mark relation");
        break;
    }
  }
  // closure: every bar has exactly one matching relation; every legend mark
  // exactly one label
  for (const AnnObject& o : objects) {
    if (o.cls == ObjectClass::Bar) {
      int n = 0;
      for (const AnnRelation& r : relations)
        if ((r.kind == RelationKind::BarLegendMark || r.kind == RelationKind::BarXTickLabel) &&
            r.a == o.id)
          ++n;
      if (n != 1) throw InputError("annotation: bar must have exactly one match relation");
    }
    if (o.cls == ObjectClass::LegendMark) {
      int n = 0;
      for (const AnnRelation& r : relations)
        if (r.kind == RelationKind::LegendMarkLabel && r.a == o.id) ++n;
      if (n != 1) throw InputError("annotation: legend mark must have exactly one label");
    }
  }
  if ((kind == ChartKind::Pie) != !slice_boundary_angles_deg.empty())
    throw InputError("annotation: slice boundary angles present iff pie");
  for (int i = 1; i < slices; ++i)
    if (slice_boundary_angles_deg[static_cast<size_t>(i)] <=
        slice_boundary_angles_deg[static_cast<size_t>(i - 1)])
      throw InputError("annotation: slice boundary angles not increasing");
}

// ---- GenConfig -------------------------------------------------------------------

namespace {

void check_range(const IntRange& r, const char* field) {
  if (r.lo > r.hi || r.lo < 0)
    throw ConfigError(std::string("GenConfig: invalid range for ") + field);
}

std::vector<std::string> load_words(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("GenConfig: cannot open word list " + path);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) {
    if (!text_in_alphabet(w)) throw ConfigError("GenConfig: word not in alphabet: " + w);
    words.push_back(w);
  }
  if (words.size() < 4) throw ConfigError("GenConfig: word list too small");
  return words;
}

}  // namespace

const std::vector<std::string>& builtin_words() {
  static const std::vector<std::string> words = {
      "sales",  "profit", "cost",    "energy", "water",  "wind",   "solar",  "coal",
      "north",  "south",  "east",    "west",   "spring", "summer", "autumn", "winter",
      "apple",  "grape",  "mango",   "peach",  "berry",  "melon",  "lemon",  "olive",
      "red",    "blue",   "green",   "gold",   "silver", "iron",   "steel",  "stone",
      "city",   "town",   "rural",   "urban",  "metro",  "area",   "zone",   "region",
      "alpha",  "beta",   "gamma",   "delta",  "sigma",  "omega",  "prime",  "core",
      "total",  "gross",  "net",     "mean",   "index",  "score",  "rate",   "ratio",
      "import", "export", "supply",  "demand", "stock",  "bond",   "fund",   "asset",
      "cars",   "bikes",  "trains",  "planes", "ships",  "trucks", "buses",  "roads",
      "corn",   "wheat",  "rice",    "barley", "oats",   "cotton", "sugar",  "cocoa",
      "milk",   "bread",  "cheese",  "butter", "honey",  "juice",  "tea",    "coffee",
      "april",  "march",  "june",    "july",   "year",   "month",  "week",   "day",
      "units",  "items",  "tons",    "miles",  "liters", "meters", "grams",  "hours",
      "staff",  "users",  "clients", "visits", "orders", "views",  "clicks", "leads",
  };
  return words;
}

void GenConfig::validate() const {
  check_range(canvas, "canvas");
  if (canvas.lo < 128) throw ConfigError("GenConfig: canvas side must be >= 128");
  if (font_ids.empty()) throw ConfigError("GenConfig: font_ids must be non-empty");
  for (int f : font_ids)
    if (f < 0 || f >= static_cast<int>(builtin_fonts().size()))
      throw ConfigError("GenConfig: font id out of range: " + std::to_string(f));
  check_range(title_px, "title_px");
  check_range(axis_label_px, "axis_label_px");
  check_range(tick_label_px, "tick_label_px");
  check_range(legend_px, "legend_px");
  if (title_px.lo < 6 || axis_label_px.lo < 6 || tick_label_px.lo < 6 || legend_px.lo < 6)
    throw ConfigError("GenConfig: font sizes must be >= 6 px");
  check_range(series, "series");
  if (series.lo < 1 || series.hi > 5) throw ConfigError("GenConfig: series must be in 1..5");
  check_range(groups, "groups");
  if (groups.lo < 1) throw ConfigError("GenConfig: groups must be >= 1");
  check_range(slices, "slices");
  if (slices.lo < 2 || slices.hi > 9) throw ConfigError("GenConfig: slices must be in 2..9");
  if (min_fraction <= 0 || min_fraction > 0.1)
    throw ConfigError("GenConfig: min_fraction must be in (0, 0.1]");
  if (value_scale.lo <= 0 || value_scale.lo > value_scale.hi)
    throw ConfigError("GenConfig: value_scale must be positive and ordered");
  check_range(y_ticks, "y_ticks");
  if (y_ticks.lo < 2) throw ConfigError("GenConfig: y_ticks must be >= 2");
  if (color_min_dist < 1 || color_min_dist > 128)
    throw ConfigError("GenConfig: color_min_dist must be in 1..128");
  if (xtick_diag_prob < 0 || xtick_diag_prob > 1)
    throw ConfigError("GenConfig: xtick_diag_prob must be in [0,1]");
  if (frame_prob < 0 || frame_prob > 1)
    throw ConfigError("GenConfig: frame_prob must be in [0,1]");
}

ordered_json GenConfig::to_json() const {
  ordered_json j;
  j["canvas"] = {canvas.lo, canvas.hi};
  j["font_ids"] = font_ids;
  j["title_px"] = {title_px.lo, title_px.hi};
  j["axis_label_px"] = {axis_label_px.lo, axis_label_px.hi};
  j["tick_label_px"] = {tick_label_px.lo, tick_label_px.hi};
  j["legend_px"] = {legend_px.lo, legend_px.hi};
  j["series"] = {series.lo, series.hi};
  j["groups"] = {groups.lo, groups.hi};
  j["slices"] = {slices.lo, slices.hi};
  j["min_fraction"] = min_fraction;
  j["value_scale"] = {value_scale.lo, value_scale.hi};
  j["y_ticks"] = {y_ticks.lo, y_ticks.hi};
  j["color_min_dist"] = color_min_dist;
  j["xtick_diag_prob"] = xtick_diag_prob;
  j["frame_prob"] = frame_prob;
  j["word_list_path"] = word_list_path;
  return j;
}

GenConfig GenConfig::from_json(const json& j) {
  static const std::set<std::string> known = {
      "canvas",       "font_ids",     "title_px",      "axis_label_px", "tick_label_px",
      "legend_px",    "series",       "groups",        "slices",        "min_fraction",
      "value_scale",  "y_ticks",      "color_min_dist", "xtick_diag_prob", "frame_prob",
      "word_list_path"};
  GenConfig c;
  for (auto& [key, val] : j.items()) {
    if (!known.count(key)) throw ConfigError("GenConfig: unknown key '" + key + "'");
    (void)val;
  }
  auto iget = [&](const char* key, IntRange& r) {
    if (j.contains(key)) {
      auto a = j.at(key);
      r = IntRange{a.at(0).get<int>(), a.at(1).get<int>()};
    }
  };
  iget("canvas", c.canvas);
  if (j.contains("font_ids")) c.font_ids = j.at("font_ids").get<std::vector<int>>();
  iget("title_px", c.title_px);
  iget("axis_label_px", c.axis_label_px);
  iget("tick_label_px", c.tick_label_px);
  iget("legend_px", c.legend_px);
  iget("series", c.series);
  iget("groups", c.groups);
  iget("slices", c.slices);
  if (j.contains("min_fraction")) c.min_fraction = j.at("min_fraction").get<double>();
  if (j.contains("value_scale")) {
    auto a = j.at("value_scale");
    c.value_scale = RealRange{a.at(0).get<double>(), a.at(1).get<double>()};
  }
  iget("y_ticks", c.y_ticks);
  if (j.contains("color_min_dist")) c.color_min_dist = j.at("color_min_dist").get<int>();
  if (j.contains("xtick_diag_prob")) c.xtick_diag_prob = j.at("xtick_diag_prob").get<double>();
  if (j.contains("frame_prob")) c.frame_prob = j.at("frame_prob").get<double>();
  if (j.contains("word_list_path")) c.word_list_path = j.at("word_list_path").get<std::string>();
  if (!c.word_list_path.empty()) c.words = load_words(c.word_list_path);
  c.validate();
  return c;
}

// ---- sampler ----------------------------------------------------------------------

namespace {

const std::vector<std::string>& word_pool(const GenConfig& cfg) {
  return cfg.words.empty() ? builtin_words() : cfg.words;
}

std::string sample_label(Rng& rng, const GenConfig& cfg, int max_words = 2) {
  const auto& pool = word_pool(cfg);
  int n = static_cast<int>(rng.uniform_int(1, max_words));
  std::string s = rng.pick(pool);
  for (int i = 1; i < n; ++i) s += " " + rng.pick(pool);
  return s;
}

std::vector<std::string> sample_distinct_words(Rng& rng, const GenConfig& cfg, int n) {
  const auto& pool = word_pool(cfg);
  std::vector<std::string> out;
  std::set<std::string> seen;
  int guard = 0;
  while (static_cast<int>(out.size()) < n) {
    const std::string& w = rng.pick(pool);
    if (seen.insert(w).second) out.push_back(w);
    if (++guard > 10000) throw ConfigError("GenConfig: word list too small for distinct labels");
  }
  return out;
}

std::vector<RGB> sample_colors(Rng& rng, int n, int min_dist) {
  std::vector<RGB> colors;
  int guard = 0;
  while (static_cast<int>(colors.size()) < n) {
    RGB c{static_cast<uint8_t>(rng.uniform_int(20, 225)),
          static_cast<uint8_t>(rng.uniform_int(20, 225)),
          static_cast<uint8_t>(rng.uniform_int(20, 225))};
    // keep away from the near-white background
    if (c.linf(RGB{255, 255, 255}) < 60) continue;
    bool ok = true;
    for (const RGB& o : colors)
      if (c.linf(o) < min_dist) ok = false;
    if (ok) colors.push_back(c);
    if (++guard > 100000) throw ConfigError("GenConfig: cannot sample distinct colors");
  }
  return colors;
}

double round_sig3(double v) {
  if (v == 0) return 0;
  double mag = std::pow(10.0, 2 - std::floor(std::log10(std::abs(v))));
  return std::round(v * mag) / mag;
}

// smallest "nice" step >= raw, from {1, 2, 2.5, 5} x 10^k
double nice_step(double raw) {
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (m * mag >= raw - 1e-12) return m * mag;
  return 10 * mag;
}

}  // namespace

ChartSpec sample_chart_spec(ChartKind kind, uint64_t seed, const GenConfig& config) {
  config.validate();
  Rng rng(seed);
  ChartSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.width = static_cast<int>(rng.uniform_int(config.canvas.lo, config.canvas.hi));
  spec.height = static_cast<int>(rng.uniform_int(config.canvas.lo, config.canvas.hi));

  StyleSpec& st = spec.style;
  st.font_id = config.font_ids[static_cast<size_t>(
      rng.uniform_int(0, static_cast<int64_t>(config.font_ids.size()) - 1))];
  st.title_px = static_cast<int>(rng.uniform_int(config.title_px.lo, config.title_px.hi));
  st.axis_label_px =
      static_cast<int>(rng.uniform_int(config.axis_label_px.lo, config.axis_label_px.hi));
  st.tick_label_px =
      static_cast<int>(rng.uniform_int(config.tick_label_px.lo, config.tick_label_px.hi));
  st.legend_px = static_cast<int>(rng.uniform_int(config.legend_px.lo, config.legend_px.hi));
  int shade = static_cast<int>(rng.uniform_int(0, 32));
  st.text_color = RGB{static_cast<uint8_t>(shade), static_cast<uint8_t>(shade),
                      static_cast<uint8_t>(shade)};
  int bg = static_cast<int>(rng.uniform_int(244, 255));
  st.background = RGB{static_cast<uint8_t>(bg), static_cast<uint8_t>(bg),
                      static_cast<uint8_t>(bg)};
  st.full_frame = rng.bernoulli(config.frame_prob);

  spec.title = sample_label(rng, config);

  if (kind == ChartKind::Bar) {
    spec.x_axis_label = sample_label(rng, config);
    spec.y_axis_label = sample_label(rng, config);
    if (rng.bernoulli(config.xtick_diag_prob))
      st.x_tick_label_orientation_deg = rng.bernoulli(0.5) ? 45.0 : -45.0;

    BarPayload& p = spec.bar;
    int s = static_cast<int>(rng.uniform_int(config.series.lo, config.series.hi));
    int g = static_cast<int>(rng.uniform_int(config.groups.lo, config.groups.hi));
    p.has_legend = s >= 2;
    p.group_labels = sample_distinct_words(rng, config, g);
    std::vector<std::string> legends = sample_distinct_words(rng, config, s);
    double scale = rng.uniform(config.value_scale.lo, config.value_scale.hi);
    double vmax = 0;
    for (int i = 0; i < s; ++i) {
      BarSeries series;
      series.legend_label = legends[static_cast<size_t>(i)];
      for (int j = 0; j < g; ++j) {
        // keep values within [0.45, 1.0] of the chart scale so pixel
        // quantization stays under the 1% recovery budget
        double v = round_sig3(rng.uniform(0.45, 1.0) * scale);
        series.values.push_back(v);
        vmax = std::max(vmax, v);
      }
      p.series.push_back(std::move(series));
    }
    int ticks = static_cast<int>(rng.uniform_int(config.y_ticks.lo, config.y_ticks.hi));
    double step = nice_step(vmax * 1.1 / ticks);
    int m = std::max(2, static_cast<int>(std::ceil(vmax / step - 1e-12)));
    for (int i = 0; i <= m; ++i) p.y_tick_values.push_back(i * step);
    st.series_colors = sample_colors(rng, s, config.color_min_dist);
  } else {
    PiePayload& p = spec.pie;
    int n = static_cast<int>(rng.uniform_int(config.slices.lo, config.slices.hi));
    std::vector<std::string> legends = sample_distinct_words(rng, config, n);
    int guard = 0;
    for (;;) {
      std::vector<double> w(static_cast<size_t>(n));
      double total = 0;
      for (double& x : w) {
        x = rng.uniform(1.0, 10.0);
        total += x;
      }
      std::vector<double> f(static_cast<size_t>(n));
      double acc = 0;
      for (int i = 0; i < n - 1; ++i) {
        f[static_cast<size_t>(i)] = std::round(w[static_cast<size_t>(i)] / total * 1e6) / 1e6;
        acc += f[static_cast<size_t>(i)];
      }
      f[static_cast<size_t>(n - 1)] = 1.0 - acc;  // final-slice remainder
      double fmin = *std::min_element(f.begin(), f.end());
      if (fmin >= config.min_fraction) {
        p.slices.clear();
        for (int i = 0; i < n; ++i)
          p.slices.push_back(PieSlice{legends[static_cast<size_t>(i)], f[static_cast<size_t>(i)]});
        break;
      }
      if (++guard > 1000)
        throw ConfigError("GenConfig: min_fraction unsatisfiable for slice count");
    }
    p.start_angle_deg = rng.uniform(0.0, 360.0);
    st.series_colors = sample_colors(rng, n, config.color_min_dist);
  }
  return spec;
}

}  // namespace chartx::gen
