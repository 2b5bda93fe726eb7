#include "onsd/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace onsd {

Point2 bbox_center(const BBox& b) { return {0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max)}; }

MeasurementConstruction build_construction(const BBox& globe, const BBox& nerve, double pixels_per_mm) {
    if (!(pixels_per_mm > 0.0)) throw GeometryError("pixels_per_mm must be > 0");
    MeasurementConstruction c;
    c.globe_center = bbox_center(globe);
    c.nerve_center = bbox_center(nerve);
    const Point2 d = c.nerve_center - c.globe_center;
    const double len = norm(d);
    if (!(len > 1.0)) throw GeometryError("degenerate axis");
    c.axis = (1.0 / len) * d;
    c.axis_angle_deg = std::atan2(d.x, d.y) * 180.0 / std::numbers::pi;

    // Ray from the center of the inscribed ellipse: one forward hit at tau.
    const double a = 0.5 * globe.width();
    const double b = 0.5 * globe.height();
    const double ex = c.axis.x / a;
    const double ey = c.axis.y / b;
    const double tau = 1.0 / std::sqrt(ex * ex + ey * ey);
    if (std::isfinite(tau) && tau > 0.0) {
        c.retinal_point = c.globe_center + tau * c.axis;
    } else {
        // First box edge crossed by the ray.
        double t = std::numeric_limits<double>::infinity();
        if (c.axis.x != 0.0) t = std::min(t, a / std::abs(c.axis.x));
        if (c.axis.y != 0.0) t = std::min(t, b / std::abs(c.axis.y));
        c.retinal_point = c.globe_center + t * c.axis;
        c.retinal_from_box_edge = true;
    }
    c.measurement_point = c.retinal_point + (kMeasurementDepthMm * pixels_per_mm) * c.axis;
    return c;
}

bool sample_bilinear(const Frame& frame, Point2 p, float& value) {
    value = 0.0f;
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= frame.width - 1.0 && p.y <= frame.height - 1.0)) return false;
    const int x0 = static_cast<int>(std::floor(p.x));
    const int y0 = static_cast<int>(std::floor(p.y));
    const double fx = p.x - x0;
    const double fy = p.y - y0;
    const int x1 = fx > 0.0 ? x0 + 1 : x0;
    const int y1 = fy > 0.0 ? y0 + 1 : y0;
    const double top = (1.0 - fx) * frame.at(x0, y0) + fx * frame.at(x1, y0);
    const double bottom = (1.0 - fx) * frame.at(x0, y1) + fx * frame.at(x1, y1);
    value = static_cast<float>((1.0 - fy) * top + fy * bottom);
    return true;
}

OrientedCrop extract_oriented_crop(const Frame& frame, const MeasurementConstruction& c) {
    OrientedCrop crop;
    crop.center = c.measurement_point;
    crop.angle_deg = c.axis_angle_deg;
    const Point2 across = across_axis(c.axis);
    for (int r = 0; r < OrientedCrop::kRows; ++r) {
        for (int col = 0; col < OrientedCrop::kCols; ++col) {
            const Point2 p = c.measurement_point + double(r - OrientedCrop::kCenterRow) * c.axis +
                             double(col - OrientedCrop::kCenterCol) * across;
            float v = 0.0f;
            if (!sample_bilinear(frame, p, v)) crop.partial = true;
            crop.at(r, col) = v;
        }
    }
    return crop;
}

}  // namespace onsd
