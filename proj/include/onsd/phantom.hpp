#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "onsd/detection.hpp"
#include "onsd/image.hpp"

namespace onsd {

/// Width above which a sheath is considered dilated (strict inequality).
inline constexpr double kWidthThresholdMm = 5.0;

enum class Label { negative, positive };

std::string to_string(Label l);
Label label_from_string(const std::string& s);
Label label_for_width(double sheath_width_mm);

/// Synthetic ocular ultrasound scene: a bright globe ellipse with a nerve band
/// (two bright walls around a dark interior) leaving its posterior pole.
struct PhantomSpec {
    int image_width = 200;
    int image_height = 256;
    double pixels_per_mm = 10.0;
    Point2 globe_center{100.0, 80.0};
    Point2 globe_radii{55.0, 50.0};
    double nerve_angle_deg = 0.0;  // from +y toward +x; 0 points straight down
    double sheath_width_mm = 5.5;
    double sheath_wall_thickness_mm = 1.0;
    double nerve_length_mm = 12.0;
    double interior_intensity = 0.08;
    double wall_intensity = 0.85;
    double background_intensity = 0.25;
    double speckle_sigma = 0.0;
    int jitter_px = 0;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const;
};

struct GroundTruth {
    BBox globe_bbox;
    std::optional<BBox> nerve_bbox;  // absent when the nerve lies outside the frame
    double nerve_angle_deg = 0.0;
    double sheath_width_mm = 0.0;
    Label label = Label::negative;
};

using PixelOffset = std::array<int, 2>;

/// Unit vector of a nerve angle (0 deg = +y).
Point2 nerve_direction(double angle_deg);

/// Where the ray from the globe center along the nerve direction leaves the
/// globe ellipse (before jitter).
Point2 posterior_pole(const PhantomSpec& spec);

/// Integer translation applied to frame `frame_index`; |offset| <= jitter_px.
PixelOffset frame_jitter(const PhantomSpec& spec, int frame_index);

struct PhantomFrame {
    Frame frame;
    GroundTruth truth;  // boxes include this frame's jitter
    PixelOffset jitter{0, 0};
};

PhantomFrame render_phantom_frame(const PhantomSpec& spec, int frame_index);

struct PhantomVideo {
    std::vector<Frame> frames;
    GroundTruth truth;  // un-jittered scene
    std::vector<PixelOffset> jitter;
};

PhantomVideo generate_video(const PhantomSpec& spec, int n_frames);

// --- dataset manifest -----------------------------------------------------

struct VideoEntry {
    std::string video_id;
    std::string patient_id;
    std::vector<std::string> frame_paths;  // relative to the manifest directory
    double pixels_per_mm = 10.0;
    Label label = Label::negative;
    std::optional<GroundTruth> ground_truth;
};

struct DatasetManifest {
    std::filesystem::path base_dir;  // directory holding the manifest file
    std::vector<VideoEntry> videos;

    void validate() const;
    [[nodiscard]] const VideoEntry& find(const std::string& video_id) const;
    [[nodiscard]] std::filesystem::path frame_path(const VideoEntry& v, int index) const;
    [[nodiscard]] Frame load_frame(const VideoEntry& v, int index) const;
};

inline constexpr const char* kManifestFileName = "manifest.json";

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct PhantomJob {
    PhantomSpec spec;
    std::string patient_id;
    int n_frames = 10;
    std::string video_id;  // generated as video_NNN when empty
};

/// Renders every job, writes frames as PGM under out_dir/<video_id>/ and
/// out_dir/manifest.json. Labels follow the 5 mm rule.
DatasetManifest build_dataset(const std::vector<PhantomJob>& jobs, const std::filesystem::path& out_dir);

}  // namespace onsd
