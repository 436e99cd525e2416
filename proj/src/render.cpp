#include "chartx/render.hpp"

#include <algorithm>
#include <cmath>

#include "chartx/fonts.hpp"

namespace chartx::gen {

namespace {

constexpr int kPad = 6;
constexpr int kTickLen = 7;
constexpr int kTickThick = 2;

struct Painter {
  ImageRGB* img;
  AnnotationSet* ann;
  const Font* font;
  RGB text_color;

  int add_object(ObjectClass cls, geom::Box bbox, double orientation,
                 std::optional<std::string> text) {
    AnnObject o;
    o.id = static_cast<int>(ann->objects.size());
    o.cls = cls;
    o.bbox = bbox;
    o.orientation_deg = orientation;
    o.text = std::move(text);
    ann->objects.push_back(std::move(o));
    return ann->objects.back().id;
  }

  void fill_rect(int x, int y, int w, int h, RGB c) {
    for (int yy = y; yy < y + h; ++yy)
      for (int xx = x; xx < x + w; ++xx) img->set(xx, yy, c.r, c.g, c.b);
  }

  void blit_mask(const std::vector<uint8_t>& mask, int mw, int mh, int x, int y, RGB c) {
    for (int yy = 0; yy < mh; ++yy)
      for (int xx = 0; xx < mw; ++xx)
        if (mask[static_cast<size_t>(yy) * mw + xx]) img->set(x + xx, y + yy, c.r, c.g, c.b);
  }

  // Draws text with its (possibly rotated) bounding box anchored at (x, y).
  // Returns the annotation object id.
  int draw_text(const std::string& text, ObjectClass cls, int size_px, int x, int y,
                double orientation_deg) {
    int w = 0, h = 0;
    std::vector<uint8_t> mask = raster_text(text, *font, size_px, &w, &h);
    if (orientation_deg != 0.0) mask = rotate_mask(mask, w, h, orientation_deg, &w, &h);
    blit_mask(mask, w, h, x, y, text_color);
    return add_object(cls, geom::Box{static_cast<double>(x), static_cast<double>(y),
                                     static_cast<double>(w), static_cast<double>(h)},
                      orientation_deg, text);
  }
};

std::string trim_zeros(std::string s) {
  if (s.find('.') == std::string::npos) return s;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

struct TickInfo {
  std::string label;
  int width = 0;
};

void check_fits(bool ok, const char* what) {
  if (!ok) throw LayoutError(std::string("layout overflow: ") + what);
}

RenderResult render_bar(const ChartSpec& spec) {
  const Font& font = builtin_fonts()[static_cast<size_t>(spec.style.font_id)];
  const StyleSpec& st = spec.style;
  const BarPayload& p = spec.bar;
  const int W = spec.width, H = spec.height;

  RenderResult out;
  out.image = ImageRGB(W, H, st.background.r, st.background.g, st.background.b);
  out.annotations.kind = ChartKind::Bar;
  Painter pt{&out.image, &out.annotations, &font, st.text_color};

  // ---- measure ----
  TextMetrics title_m = measure_text(spec.title, font, st.title_px);
  check_fits(title_m.width <= W - 2 * kPad, "title");

  const int m = static_cast<int>(p.y_tick_values.size()) - 1;  // intervals
  double step = p.y_tick_values[1] - p.y_tick_values[0];
  std::vector<TickInfo> yticks;
  int max_ytick_w = 0;
  for (double v : p.y_tick_values) {
    TickInfo ti;
    ti.label = format_tick(v);
    ti.width = measure_text(ti.label, font, st.tick_label_px).width;
    max_ytick_w = std::max(max_ytick_w, ti.width);
    yticks.push_back(std::move(ti));
  }

  TextMetrics yaxis_m = measure_text(spec.y_axis_label, font, st.axis_label_px);
  check_fits(yaxis_m.width <= H - 2 * kPad, "y-axis label");

  // x tick labels (possibly rotated)
  const int G = static_cast<int>(p.group_labels.size());
  const int S = static_cast<int>(p.series.size());
  struct XTick {
    std::vector<uint8_t> mask;
    int w = 0, h = 0;
  };
  std::vector<XTick> xticks;
  int max_xtick_h = 0;
  for (const std::string& lbl : p.group_labels) {
    XTick xt;
    xt.mask = raster_text(lbl, font, st.tick_label_px, &xt.w, &xt.h);
    if (st.x_tick_label_orientation_deg != 0.0)
      xt.mask = rotate_mask(xt.mask, xt.w, xt.h, st.x_tick_label_orientation_deg, &xt.w, &xt.h);
    max_xtick_h = std::max(max_xtick_h, xt.h);
    xticks.push_back(std::move(xt));
  }

  int legend_w = 0;
  const int msz = st.legend_px;
  if (p.has_legend) {
    int max_lw = 0;
    for (const BarSeries& s : p.series)
      max_lw = std::max(max_lw, measure_text(s.legend_label, font, st.legend_px).width);
    legend_w = msz + 4 + max_lw;
  }

  const int axis_x = kPad + st.axis_label_px + 5 + max_ytick_w + 3 + kTickLen;
  const int plot_right = W - kPad - (p.has_legend ? legend_w + 8 : 0);
  const int plot_top_min = kPad + st.title_px + 8;
  const int plot_bottom = H - kPad - st.axis_label_px - 5 - max_xtick_h - 3 - kTickLen - 1;
  const int plot_w = plot_right - axis_x;
  check_fits(plot_w >= G * (S * 3 + 4), "plot width");
  check_fits(plot_bottom - plot_top_min >= 50, "plot height");
  const int gap_px = (plot_bottom - plot_top_min) / m;  // tick rows land on integers
  const int plot_top = plot_bottom - gap_px * m;

  // ---- title ----
  pt.draw_text(spec.title, ObjectClass::Title, st.title_px, (W - title_m.width) / 2, kPad, 0);

  // ---- y axis label (rotated 90) ----
  {
    int w = 0, h = 0;
    std::vector<uint8_t> mask = raster_text(spec.y_axis_label, font, st.axis_label_px, &w, &h);
    mask = rotate_mask(mask, w, h, st.y_axis_label_orientation_deg, &w, &h);
    int y = std::max(kPad, (plot_top + plot_bottom) / 2 - h / 2);
    check_fits(y + h <= H - kPad, "y-axis label height");
    pt.blit_mask(mask, w, h, kPad, y, st.text_color);
    pt.add_object(ObjectClass::YAxisLabel,
                  geom::Box{static_cast<double>(kPad), static_cast<double>(y),
                            static_cast<double>(w), static_cast<double>(h)},
                  st.y_axis_label_orientation_deg, spec.y_axis_label);
  }

  // ---- x axis label ----
  {
    TextMetrics xm = measure_text(spec.x_axis_label, font, st.axis_label_px);
    int x = axis_x + (plot_w - xm.width) / 2;
    check_fits(x >= kPad && x + xm.width <= W - kPad, "x-axis label");
    pt.draw_text(spec.x_axis_label, ObjectClass::XAxisLabel, st.axis_label_px, x,
                 H - kPad - st.axis_label_px, 0);
  }

  // ---- frame/axes ----
  pt.fill_rect(axis_x - 1, plot_top, 1, plot_bottom - plot_top + 1, st.text_color);
  pt.fill_rect(axis_x - 1, plot_bottom, plot_w + 1, 1, st.text_color);
  if (st.full_frame) {
    pt.fill_rect(axis_x - 1, plot_top, plot_w + 1, 1, st.text_color);
    pt.fill_rect(plot_right - 1, plot_top, 1, plot_bottom - plot_top + 1, st.text_color);
  }

  // ---- y ticks ----
  for (int k = 0; k <= m; ++k) {
    int row = plot_bottom - k * gap_px;
    pt.fill_rect(axis_x - 1 - kTickLen, row - 1, kTickLen, kTickThick, st.text_color);
    int line_id = pt.add_object(
        ObjectClass::YTickLine,
        geom::Box{static_cast<double>(axis_x - 1 - kTickLen), static_cast<double>(row - 1),
                  static_cast<double>(kTickLen), static_cast<double>(kTickThick)},
        0, std::nullopt);
    const TickInfo& ti = yticks[static_cast<size_t>(k)];
    int lx = axis_x - 1 - kTickLen - 3 - ti.width;
    int ly = row - st.tick_label_px / 2;
    check_fits(ly >= 0, "y tick label");
    int label_id =
        pt.draw_text(ti.label, ObjectClass::YTickLabel, st.tick_label_px, lx, ly, 0);
    out.annotations.relations.push_back(
        AnnRelation{label_id, line_id, RelationKind::YTickLabelLine});
  }

  // ---- x ticks, bars ----
  double slot = static_cast<double>(plot_w) / G;
  std::vector<int> xtick_label_ids;
  int prev_right = -1;
  for (int g = 0; g < G; ++g) {
    int cx = axis_x + static_cast<int>(std::lround((g + 0.5) * slot));
    pt.fill_rect(cx - 1, plot_bottom + 1, kTickThick, kTickLen, st.text_color);
    pt.add_object(ObjectClass::XTickLine,
                  geom::Box{static_cast<double>(cx - 1), static_cast<double>(plot_bottom + 1),
                            static_cast<double>(kTickThick), static_cast<double>(kTickLen)},
                  0, std::nullopt);
    const XTick& xt = xticks[static_cast<size_t>(g)];
    int lx = cx - xt.w / 2;
    int ly = plot_bottom + 1 + kTickLen + 3;
    check_fits(lx > prev_right && lx >= 0 && lx + xt.w <= W, "x tick labels overlap");
    prev_right = lx + xt.w;
    pt.blit_mask(xt.mask, xt.w, xt.h, lx, ly, st.text_color);
    xtick_label_ids.push_back(pt.add_object(
        ObjectClass::XTickLabel,
        geom::Box{static_cast<double>(lx), static_cast<double>(ly), static_cast<double>(xt.w),
                  static_cast<double>(xt.h)},
        st.x_tick_label_orientation_deg, p.group_labels[static_cast<size_t>(g)]));
  }

  // legend first so bar relations can point at the marks
  std::vector<int> legend_mark_ids;
  if (p.has_legend) {
    int lx = plot_right + 8;
    int ly = plot_top + 2;
    int row_h = std::max(msz, st.legend_px) + 6;
    for (const BarSeries& s : p.series) {
      size_t i = legend_mark_ids.size();
      check_fits(ly + row_h <= H - kPad, "legend height");
      RGB c = st.series_colors[i];
      pt.fill_rect(lx, ly, msz, msz, c);
      int mark_id = pt.add_object(ObjectClass::LegendMark,
                                  geom::Box{static_cast<double>(lx), static_cast<double>(ly),
                                            static_cast<double>(msz), static_cast<double>(msz)},
                                  0, std::nullopt);
      legend_mark_ids.push_back(mark_id);
      int label_id = pt.draw_text(s.legend_label, ObjectClass::LegendLabel, st.legend_px,
                                  lx + msz + 4, ly + (msz - st.legend_px) / 2, 0);
      out.annotations.relations.push_back(
          AnnRelation{mark_id, label_id, RelationKind::LegendMarkLabel});
      ly += row_h;
    }
  }

  double v_top = p.y_tick_values.back();
  int bw = static_cast<int>(std::floor(slot * 0.75 / S));
  check_fits(bw >= 3, "bar width");
  for (int g = 0; g < G; ++g) {
    int cx = axis_x + static_cast<int>(std::lround((g + 0.5) * slot));
    int x0 = cx - (S * bw) / 2;
    for (int s = 0; s < S; ++s) {
      double v = p.series[static_cast<size_t>(s)].values[static_cast<size_t>(g)];
      int top = static_cast<int>(std::lround(plot_bottom - v / v_top * (gap_px * m)));
      top = std::clamp(top, plot_top - gap_px, plot_bottom - 1);
      RGB c = st.series_colors[static_cast<size_t>(s)];
      pt.fill_rect(x0 + s * bw, top, bw, plot_bottom - top, c);
      int bar_id = pt.add_object(
          ObjectClass::Bar,
          geom::Box{static_cast<double>(x0 + s * bw), static_cast<double>(top),
                    static_cast<double>(bw), static_cast<double>(plot_bottom - top)},
          0, std::nullopt);
      out.annotations.bar_values[bar_id] = v;
      if (p.has_legend)
        out.annotations.relations.push_back(
            AnnRelation{bar_id, legend_mark_ids[static_cast<size_t>(s)],
                        RelationKind::BarLegendMark});
      else
        out.annotations.relations.push_back(AnnRelation{
            bar_id, xtick_label_ids[static_cast<size_t>(g)], RelationKind::BarXTickLabel});
    }
  }
  (void)step;

  out.annotations.validate(W, H);
  return out;
}

RenderResult render_pie(const ChartSpec& spec) {
  const Font& font = builtin_fonts()[static_cast<size_t>(spec.style.font_id)];
  const StyleSpec& st = spec.style;
  const PiePayload& p = spec.pie;
  const int W = spec.width, H = spec.height;
  const int n = static_cast<int>(p.slices.size());

  RenderResult out;
  out.image = ImageRGB(W, H, st.background.r, st.background.g, st.background.b);
  out.annotations.kind = ChartKind::Pie;
  Painter pt{&out.image, &out.annotations, &font, st.text_color};

  TextMetrics title_m = measure_text(spec.title, font, st.title_px);
  check_fits(title_m.width <= W - 2 * kPad, "title");
  pt.draw_text(spec.title, ObjectClass::Title, st.title_px, (W - title_m.width) / 2, kPad, 0);

  const int msz = st.legend_px;
  int max_lw = 0;
  for (const PieSlice& s : p.slices)
    max_lw = std::max(max_lw, measure_text(s.legend_label, font, st.legend_px).width);
  int legend_w = msz + 4 + max_lw;

  int plot_top = kPad + st.title_px + 8;
  int area_right = W - kPad - legend_w - 8;
  int cx = (kPad + area_right) / 2;
  int cy = (plot_top + H - kPad) / 2;
  int radius = std::min(area_right - kPad, H - kPad - plot_top) / 2 - 4;
  check_fits(radius >= 24, "pie radius");

  // boundary angles, counter-clockwise from the positive x ray
  std::vector<double> raw(static_cast<size_t>(n));
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    raw[static_cast<size_t>(i)] = std::fmod(p.start_angle_deg + 360.0 * acc, 360.0);
    acc += p.slices[static_cast<size_t>(i)].fraction;
  }
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return raw[static_cast<size_t>(a)] < raw[static_cast<size_t>(b)]; });
  std::vector<double> sorted(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k)
    sorted[static_cast<size_t>(k)] = raw[static_cast<size_t>(order[static_cast<size_t>(k)])];
  out.annotations.slice_boundary_angles_deg = sorted;

  // fill slices: pixel angle measured with y up (visual CCW positive)
  for (int y = cy - radius; y <= cy + radius; ++y) {
    for (int x = cx - radius; x <= cx + radius; ++x) {
      double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy > static_cast<double>(radius) * radius) continue;
      double ang = std::atan2(-dy, dx) * 180.0 / M_PI;
      if (ang < 0) ang += 360.0;
      int k = n - 1;  // wrap sector [sorted[n-1], sorted[0])
      for (int i = 0; i < n - 1; ++i) {
        if (ang >= sorted[static_cast<size_t>(i)] && ang < sorted[static_cast<size_t>(i + 1)]) {
          k = i;
          break;
        }
      }
      if (ang < sorted[0]) k = n - 1;
      RGB c = st.series_colors[static_cast<size_t>(order[static_cast<size_t>(k)])];
      out.image.set(x, y, c.r, c.g, c.b);
    }
  }
  pt.add_object(ObjectClass::Pie,
                geom::Box{static_cast<double>(cx - radius), static_cast<double>(cy - radius),
                          static_cast<double>(2 * radius + 1), static_cast<double>(2 * radius + 1)},
                0, std::nullopt);

  // legend
  std::vector<int> mark_ids(static_cast<size_t>(n));
  {
    int lx = area_right + 8;
    int ly = plot_top + 2;
    int row_h = std::max(msz, st.legend_px) + 6;
    for (int i = 0; i < n; ++i) {
      check_fits(ly + row_h <= H - kPad, "legend height");
      RGB c = st.series_colors[static_cast<size_t>(i)];
      pt.fill_rect(lx, ly, msz, msz, c);
      int mark_id = pt.add_object(ObjectClass::LegendMark,
                                  geom::Box{static_cast<double>(lx), static_cast<double>(ly),
                                            static_cast<double>(msz), static_cast<double>(msz)},
                                  0, std::nullopt);
      mark_ids[static_cast<size_t>(i)] = mark_id;
      int label_id = pt.draw_text(p.slices[static_cast<size_t>(i)].legend_label,
                                  ObjectClass::LegendLabel, st.legend_px, lx + msz + 4,
                                  ly + (msz - st.legend_px) / 2, 0);
      out.annotations.relations.push_back(
          AnnRelation{mark_id, label_id, RelationKind::LegendMarkLabel});
      ly += row_h;
    }
  }

  // slice k (sorted order) -> legend mark of its payload slice
  for (int k = 0; k < n; ++k)
    out.annotations.relations.push_back(
        AnnRelation{k, mark_ids[static_cast<size_t>(order[static_cast<size_t>(k)])],
                    RelationKind::SliceLegendMark});

  out.annotations.validate(W, H);
  return out;
}

}  // namespace

std::string format_tick(double v) {
  if (std::abs(v - std::round(v)) < 1e-9) return std::to_string(static_cast<long long>(std::llround(v)));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return trim_zeros(buf);
}

RenderResult render_chart(const ChartSpec& spec) {
  if (spec.width < 128 || spec.height < 128) throw InputError("render_chart: canvas too small");
  return spec.kind == ChartKind::Bar ? render_bar(spec) : render_pie(spec);
}

}  // namespace chartx::gen
