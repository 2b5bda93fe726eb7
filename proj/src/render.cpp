#include "onsd/render.hpp"

#include <algorithm>
#include <cmath>

namespace onsd {

PixelList raster_segment(Point2 a, Point2 b) {
    const Point2 d = b - a;
    const int n = static_cast<int>(std::ceil(std::max(std::abs(d.x), std::abs(d.y))));
    PixelList out;
    if (n == 0) {
        out.push_back({static_cast<int>(std::lround(a.x)), static_cast<int>(std::lround(a.y))});
        return out;
    }
    for (int i = 0; i <= n; ++i) {
        const Point2 p = a + (static_cast<double>(i) / n) * d;
        const std::array<int, 2> px{static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))};
        if (out.empty() || out.back() != px) out.push_back(px);
    }
    return out;
}

PixelList raster_disc(Point2 c, double radius) {
    PixelList out;
    const int x0 = static_cast<int>(std::floor(c.x - radius));
    const int x1 = static_cast<int>(std::ceil(c.x + radius));
    const int y0 = static_cast<int>(std::floor(c.y - radius));
    const int y1 = static_cast<int>(std::ceil(c.y + radius));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= radius * radius) out.push_back({x, y});
    return out;
}

RgbImage gray_to_rgb(const Frame& frame) {
    RgbImage img(frame.width, frame.height);
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) {
            const std::uint8_t v = to_byte(frame.at(x, y));
            img.set(x, y, {v, v, v});
        }
    return img;
}

namespace {

void paint(RgbImage& img, const PixelList& pixels, Rgb color) {
    for (const auto& [x, y] : pixels)
        if (img.contains(x, y)) img.set(x, y, color);
}

}  // namespace

RgbImage render_overlay(const Frame& frame, const FrameMeasurement& m) {
    RgbImage img = gray_to_rgb(frame);
    if (!m.construction) return img;
    const MeasurementConstruction& c = *m.construction;
    paint(img, raster_segment(c.retinal_point, c.measurement_point), kAxisColor);
    if (m.width) {
        const double half = 0.5 * m.width->width_mm * frame.pixels_per_mm;
        const Point2 across = across_axis(c.axis);
        paint(img, raster_segment(c.measurement_point - half * across, c.measurement_point + half * across),
              kWidthColor);
    }
    paint(img, raster_disc(c.measurement_point, kPointRadiusPx), kPointColor);
    return img;
}

}  // namespace onsd
