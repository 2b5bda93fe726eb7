#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "onsd/detection.hpp"
#include "onsd/geometry.hpp"
#include "onsd/lca.hpp"
#include "onsd/phantom.hpp"
#include "onsd/segmentation.hpp"

namespace onsd {

using Detector = std::function<FrameDetections(const Frame&, int frame_index)>;
using Segmenter = std::function<CropMask(const OrientedCrop&)>;

Detector classical_detector(const ClassicalDetectorParams& params = {});
/// Serves boxes read from a detection file; frames without records get none.
Detector precomputed_detector(std::vector<FrameDetections> detections);
Segmenter classical_segmenter(const SegmenterParams& params = {});

/// Lazily loaded frames of one video.
struct FrameSource {
    int count = 0;
    std::function<Frame(int)> load;
};

FrameSource frames_from(const std::vector<Frame>& frames);
FrameSource frames_from(const DatasetManifest& manifest, const VideoEntry& video);

inline constexpr int kDefaultStride = 5;

/// 0, stride, 2*stride, ... below n_frames.
std::vector<int> sample_stride(int n_frames, int stride);

struct FrameMeasurement {
    int frame_index = 0;
    FrameDetections detections;
    std::optional<MeasurementConstruction> construction;
    std::optional<OrientedCrop> crop;
    std::optional<CropMask> mask;
    std::optional<WidthMeasurement> width;  // only valid widths
    std::optional<double> probability;
    std::string error;

    [[nodiscard]] bool partial() const { return crop && crop->partial; }
};

FrameMeasurement measure_frame(const Frame& frame, const FrameDetections& detections, const Segmenter& segmenter);

enum class System { width, sparse };
enum class Decision { positive, negative, indeterminate };

std::string to_string(System s);
System system_from_string(const std::string& s);
std::string to_string(Decision d);

struct Aggregate {
    int count = 0;
    double mean = 0.0;
    Decision decision = Decision::indeterminate;
};

/// Mean of the values, summed in sorted order so that the result does not
/// depend on frame order.
double order_independent_mean(std::vector<double> values);

/// Positive iff mean width > 5 mm.
Aggregate aggregate_widths(std::span<const double> widths_mm);
/// Positive iff mean probability >= 0.5.
Aggregate aggregate_probabilities(std::span<const double> probabilities);

struct VideoVerdict {
    std::string video_id;
    System system = System::width;
    int frames_used = 0;
    double mean_value = 0.0;
    Decision decision = Decision::indeterminate;
    std::vector<FrameMeasurement> frames;  // one per sampled frame
};

struct WidthPipelineOptions {
    int stride = kDefaultStride;
    bool exclude_partial = false;
};

VideoVerdict predict_video_width(const std::string& video_id, const FrameSource& frames, const Detector& detector,
                                 const Segmenter& segmenter, const WidthPipelineOptions& options = {});

/// Axis-aligned window of the frame centered on the nerve box, resampled at a
/// fixed physical pitch so the sheath keeps its true scale.
struct NerveRegionParams {
    int size = 24;
    double mm_per_sample = 0.5;
};

Patch extract_nerve_region(const Frame& frame, const BBox& nerve, const NerveRegionParams& params = {});

struct SparseModel {
    Dictionary dictionary;
    FrameClassifier classifier;
    LcaParams lca;
    NerveRegionParams region;
};

VideoVerdict predict_video_sparse(const std::string& video_id, const FrameSource& frames, const Detector& detector,
                                  const SparseModel& model, int stride = kDefaultStride);

struct SparseTrainingConfig {
    DictionaryTrainingParams dictionary;
    ClassifierTrainingParams classifier;
    NerveRegionParams region;
    ClassicalDetectorParams detector;
    int stride = kDefaultStride;
    /// Train the dictionary on whole frames (resampled to the region grid)
    /// instead of extracted nerve regions.
    bool dictionary_on_full_frames = false;
};

struct SparseTrainingResult {
    SparseModel model;
    std::vector<double> epoch_error;  // filled when dictionary.track_error is set
    double train_accuracy = 0.0;      // percent of training frames, threshold 0.5
    int n_frames = 0;
};

/// Dictionary then classifier on the sampled fit frames of the given videos.
/// Throws std::invalid_argument when the frames hold a single class or no
/// frame is fit.
SparseTrainingResult train_sparse_model(const DatasetManifest& manifest, const std::vector<std::string>& video_ids,
                                        const SparseTrainingConfig& config);

nlohmann::json to_json(const FrameMeasurement& m);
nlohmann::json to_json(const VideoVerdict& v);

}  // namespace onsd
