#pragma once

#include <array>
#include <vector>

#include "onsd/image.hpp"
#include "onsd/pipeline.hpp"

namespace onsd {

inline constexpr Rgb kAxisColor{0, 0, 255};
inline constexpr Rgb kWidthColor{255, 165, 0};
inline constexpr Rgb kPointColor{255, 0, 0};
inline constexpr double kPointRadiusPx = 3.0;

using PixelList = std::vector<std::array<int, 2>>;

/// DDA: max(|dx|,|dy|) rounded up steps, each position rounded to nearest.
PixelList raster_segment(Point2 a, Point2 b);
/// Pixels whose centers lie within radius of c.
PixelList raster_disc(Point2 c, double radius);

RgbImage gray_to_rgb(const Frame& frame);

/// Axis segment (retinal -> measurement point), then the width segment across
/// the axis, then the measurement point disc. Missing stages are skipped.
RgbImage render_overlay(const Frame& frame, const FrameMeasurement& m);

}  // namespace onsd
