#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "onsd/phantom.hpp"
#include "onsd/pipeline.hpp"

namespace onsd {

struct FoldSplit {
    int fold_index = 0;
    std::vector<std::string> train_video_ids;
    std::vector<std::string> test_video_ids;
};

/// Patients are shuffled by `seed` and dealt round-robin into k groups; fold i
/// tests the videos of group i. Throws std::invalid_argument when k < 2 or
/// there are fewer patients than folds.
std::vector<FoldSplit> grouped_kfold(const DatasetManifest& manifest, int k, std::uint64_t seed);

/// Percentage of frame decisions (0/1) equal to the video label.
double frame_accuracy(std::span<const int> per_frame_decisions, int video_label);

/// Mean absolute difference in millimeters.
double width_mae(std::span<const double> predicted, std::span<const double> truth);

/// Per-frame 0/1 decisions of a verdict; frames without a usable value count
/// as the opposite of `video_label` (never correct).
std::vector<int> frame_decisions(const VideoVerdict& v, int video_label);

struct EvalConfig {
    WidthPipelineOptions width;
    ClassicalDetectorParams detector;
    SegmenterParams segmenter;
    SparseTrainingConfig sparse;
    int stride = kDefaultStride;
};

using VideoPredictor = std::function<VideoVerdict(const VideoEntry&)>;
/// Builds the predictor for one fold (training fold-local artifacts if any).
using PredictorFactory =
    std::function<VideoPredictor(const DatasetManifest&, const FoldSplit&, std::uint64_t seed)>;

struct VideoOutcome {
    std::string video_id;
    Label label = Label::negative;
    Decision decision = Decision::indeterminate;
    double mean_value = 0.0;
    int frames_used = 0;
    std::optional<double> truth_width_mm;
};

struct FoldReport {
    int fold_index = 0;
    int n_test_videos = 0;
    int correct_videos = 0;
    int n_frames = 0;
    int correct_frames = 0;
};

struct RunReport {
    std::uint64_t seed = 0;
    double video_accuracy = 0.0;
    double frame_accuracy = 0.0;
    std::optional<double> width_mae_mm;
    std::vector<FoldReport> folds;
    std::vector<VideoOutcome> videos;
};

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // sample sd; 0 for a single run
};

MeanSd mean_sd(std::span<const double> values);

struct EvalReport {
    std::string system;
    int k = 0;
    MeanSd video_accuracy;
    MeanSd frame_accuracy;
    /// Mean over runs; absent when no run produced a width.
    std::optional<double> width_mae_mm;
    std::vector<RunReport> runs;
};

EvalReport evaluate_with(const DatasetManifest& manifest, const std::string& system_name, int k,
                         const std::vector<std::uint64_t>& seeds, const PredictorFactory& factory);

EvalReport evaluate(const DatasetManifest& manifest, System system, int k, const std::vector<std::uint64_t>& seeds,
                    const EvalConfig& config = {});

nlohmann::json to_json(const EvalReport& r);
/// model,video_accuracy,video_accuracy_sd,frame_accuracy,frame_accuracy_sd
std::string to_csv(const EvalReport& r);

}  // namespace onsd
