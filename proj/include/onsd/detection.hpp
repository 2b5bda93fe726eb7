#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "onsd/image.hpp"

namespace onsd {

enum class ObjectClass { globe, nerve };

std::string to_string(ObjectClass c);
ObjectClass object_class_from_string(const std::string& s);

/// Axis-aligned half-open box in pixel coordinates: x in [x_min, x_max).
struct BBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;
    ObjectClass cls = ObjectClass::globe;
    double confidence = 1.0;

    [[nodiscard]] double width() const { return x_max - x_min; }
    [[nodiscard]] double height() const { return y_max - y_min; }
    [[nodiscard]] double area() const { return width() * height(); }
};

double iou(const BBox& a, const BBox& b);

struct FrameDetections {
    int frame_index = 0;
    std::optional<BBox> globe;
    std::optional<BBox> nerve;

    /// Keeps the box if its class slot is empty or it beats the incumbent's
    /// confidence.
    void offer(const BBox& box);
    [[nodiscard]] bool fit() const { return globe.has_value() && nerve.has_value(); }
};

struct ClassicalDetectorParams {
    /// Radius of the square opening that separates the globe from the thin
    /// sheath walls. Walls thicker than twice this survive the opening.
    double opening_radius_mm = 0.8;
    /// Smallest globe, as the radius of an equal-area disc.
    double min_globe_radius_mm = 2.0;
    /// Each wall must cover at least this area (mm^2) ...
    double min_wall_area_mm2 = 2.0;
    /// ... and start within this distance of the globe box.
    double wall_adjacency_mm = 1.0;
    /// Frames whose intensity range is below this are treated as blank.
    double min_dynamic_range = 0.05;
};

/// Otsu threshold of a [0,1] image over 256 bins; returns the upper edge of
/// the last background bin.
double otsu_threshold(const Frame& frame);

/// Globe = largest bright component after Otsu thresholding and opening.
/// Nerve = the two largest thin bright components (sheath walls) adjacent to
/// and below the globe center, enclosing a dark interior; box = their union.
FrameDetections detect_classical(const Frame& frame, int frame_index = 0,
                                 const ClassicalDetectorParams& params = {});

/// Error raised for malformed detection files; carries the 1-based line.
class DetectionFileError : public std::runtime_error {
public:
    DetectionFileError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] int line() const { return line_; }

private:
    int line_;
};

/// Parses `frame_index class cx cy w h [confidence]` records with normalized
/// center-size coordinates. `#` starts a comment. Result is sorted by frame.
std::vector<FrameDetections> parse_detections(std::istream& in, int frame_width, int frame_height);
std::vector<FrameDetections> parse_detection_file(const std::filesystem::path& path, int frame_width,
                                                  int frame_height);

void write_detections(std::ostream& out, std::span<const FrameDetections> detections, int frame_width,
                      int frame_height);
void write_detection_file(const std::filesystem::path& path, std::span<const FrameDetections> detections,
                          int frame_width, int frame_height);

/// Indices (FrameDetections::frame_index) of frames holding both classes.
std::vector<int> filter_fit_frames(std::span<const FrameDetections> detections);

}  // namespace onsd
