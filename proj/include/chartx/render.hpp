#pragma once

#include "chartx/chart_gen.hpp"
#include "chartx/png_io.hpp"

namespace chartx::gen {

struct RenderResult {
  ImageRGB image;
  AnnotationSet annotations;
};

// Deterministic rasterization with exhaustive ground truth. Throws
// LayoutError when the sampled labels cannot fit the canvas; callers
// resample with a derived seed.
RenderResult render_chart(const ChartSpec& spec);

// Formats a tick value the way the renderer labels it.
std::string format_tick(double v);

}  // namespace chartx::gen
