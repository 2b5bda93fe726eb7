#pragma once

#include <stdexcept>
#include <vector>

#include "onsd/detection.hpp"
#include "onsd/image.hpp"

namespace onsd {

/// Distance of the measurement plane behind the retina.
inline constexpr double kMeasurementDepthMm = 3.0;

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Point2 bbox_center(const BBox& b);

/// The measurement line through globe and nerve, with the retinal point where
/// the line leaves the globe and the measurement point 3 mm beyond it.
struct MeasurementConstruction {
    Point2 globe_center;
    Point2 nerve_center;
    Point2 axis;  // unit vector, globe -> nerve
    double axis_angle_deg = 0.0;  // atan2(dx, dy): 0 = straight down, +90 = +x
    Point2 retinal_point;
    Point2 measurement_point;
    /// Set when the ray/ellipse intersection was numerically empty and the
    /// globe box edge was used instead.
    bool retinal_from_box_edge = false;
};

/// Throws GeometryError("degenerate axis") when the box centers are within
/// 1 px of each other.
MeasurementConstruction build_construction(const BBox& globe, const BBox& nerve, double pixels_per_mm);

/// 16 x 128 resampling of the frame centered on the measurement point. Rows
/// advance along the nerve axis, columns across it; sample (r, c) sits at
/// center + (r - 8) * axis + (c - 64) * across.
struct OrientedCrop {
    static constexpr int kRows = 16;
    static constexpr int kCols = 128;
    static constexpr int kCenterRow = kRows / 2;
    static constexpr int kCenterCol = kCols / 2;

    std::vector<float> pixels = std::vector<float>(kRows * kCols, 0.0f);
    Point2 center;
    double angle_deg = 0.0;
    bool partial = false;

    float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * kCols + c]; }
    [[nodiscard]] float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * kCols + c]; }
};

/// Unit vector across the nerve for a given axis: (axis.y, -axis.x).
inline Point2 across_axis(Point2 axis) { return {axis.y, -axis.x}; }

/// Bilinear sample; returns false (and 0) outside [0, w-1] x [0, h-1].
bool sample_bilinear(const Frame& frame, Point2 p, float& value);

OrientedCrop extract_oriented_crop(const Frame& frame, const MeasurementConstruction& c);

}  // namespace onsd
