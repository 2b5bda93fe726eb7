#include "onsd/pipeline.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "onsd/serialize.hpp"

namespace onsd {

Detector classical_detector(const ClassicalDetectorParams& params) {
    return [params](const Frame& frame, int frame_index) { return detect_classical(frame, frame_index, params); };
}

Detector precomputed_detector(std::vector<FrameDetections> detections) {
    std::map<int, FrameDetections> by_frame;
    for (auto& d : detections) by_frame[d.frame_index] = std::move(d);
    return [by_frame = std::move(by_frame)](const Frame&, int frame_index) {
        if (const auto it = by_frame.find(frame_index); it != by_frame.end()) return it->second;
        FrameDetections none;
        none.frame_index = frame_index;
        return none;
    };
}

Segmenter classical_segmenter(const SegmenterParams& params) {
    return [params](const OrientedCrop& crop) { return segment_classical(crop, params); };
}

FrameSource frames_from(const std::vector<Frame>& frames) {
    return {static_cast<int>(frames.size()), [&frames](int i) { return frames.at(static_cast<std::size_t>(i)); }};
}

FrameSource frames_from(const DatasetManifest& manifest, const VideoEntry& video) {
    return {static_cast<int>(video.frame_paths.size()),
            [&manifest, &video](int i) { return manifest.load_frame(video, i); }};
}

std::vector<int> sample_stride(int n_frames, int stride) {
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    if (n_frames < 0) throw std::invalid_argument("n_frames must be >= 0");
    std::vector<int> out;
    for (int i = 0; i < n_frames; i += stride) out.push_back(i);
    return out;
}

FrameMeasurement measure_frame(const Frame& frame, const FrameDetections& detections, const Segmenter& segmenter) {
    FrameMeasurement m;
    m.frame_index = detections.frame_index;
    m.detections = detections;
    if (!detections.fit()) return m;
    try {
        m.construction = build_construction(*detections.globe, *detections.nerve, frame.pixels_per_mm);
    } catch (const GeometryError& e) {
        m.error = e.what();
        return m;
    }
    m.crop = extract_oriented_crop(frame, *m.construction);
    m.mask = segmenter(*m.crop);
    WidthMeasurement w = width_from_mask(*m.mask, frame.pixels_per_mm);
    if (w.valid) m.width = w;
    return m;
}

std::string to_string(System s) { return s == System::width ? "width" : "sparse"; }

System system_from_string(const std::string& s) {
    if (s == "width") return System::width;
    if (s == "sparse") return System::sparse;
    throw std::invalid_argument("unknown system '" + s + "' (expected width or sparse)");
}

std::string to_string(Decision d) {
    switch (d) {
        case Decision::positive: return "positive";
        case Decision::negative: return "negative";
        case Decision::indeterminate: return "indeterminate";
    }
    return "indeterminate";
}

double order_independent_mean(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

Aggregate aggregate_widths(std::span<const double> widths_mm) {
    Aggregate a;
    a.count = static_cast<int>(widths_mm.size());
    if (a.count == 0) return a;
    a.mean = order_independent_mean({widths_mm.begin(), widths_mm.end()});
    a.decision = a.mean > kWidthThresholdMm ? Decision::positive : Decision::negative;
    return a;
}

Aggregate aggregate_probabilities(std::span<const double> probabilities) {
    Aggregate a;
    a.count = static_cast<int>(probabilities.size());
    if (a.count == 0) return a;
    a.mean = order_independent_mean({probabilities.begin(), probabilities.end()});
    a.decision = a.mean >= 0.5 ? Decision::positive : Decision::negative;
    return a;
}

VideoVerdict predict_video_width(const std::string& video_id, const FrameSource& frames, const Detector& detector,
                                 const Segmenter& segmenter, const WidthPipelineOptions& options) {
    VideoVerdict v;
    v.video_id = video_id;
    v.system = System::width;
    std::vector<double> widths;
    for (int index : sample_stride(frames.count, options.stride)) {
        const Frame frame = frames.load(index);
        FrameMeasurement m = measure_frame(frame, detector(frame, index), segmenter);
        m.frame_index = index;
        if (m.width && !(options.exclude_partial && m.partial())) widths.push_back(m.width->width_mm);
        v.frames.push_back(std::move(m));
    }
    const Aggregate a = aggregate_widths(widths);
    v.frames_used = a.count;
    v.mean_value = a.mean;
    v.decision = a.decision;
    return v;
}

Patch extract_nerve_region(const Frame& frame, const BBox& nerve, const NerveRegionParams& params) {
    if (params.size < 1 || !(params.mm_per_sample > 0.0)) throw std::invalid_argument("invalid nerve region params");
    const Point2 c = bbox_center(nerve);
    const double pitch = params.mm_per_sample * frame.pixels_per_mm;
    const double half = 0.5 * (params.size - 1);
    Patch p(params.size, params.size);
    for (int r = 0; r < params.size; ++r) {
        for (int col = 0; col < params.size; ++col) {
            float v = 0.0f;
            sample_bilinear(frame, {c.x + (col - half) * pitch, c.y + (r - half) * pitch}, v);
            p.at(r, col) = v;
        }
    }
    return p;
}

VideoVerdict predict_video_sparse(const std::string& video_id, const FrameSource& frames, const Detector& detector,
                                  const SparseModel& model, int stride) {
    VideoVerdict v;
    v.video_id = video_id;
    v.system = System::sparse;
    std::vector<double> probs;
    for (int index : sample_stride(frames.count, stride)) {
        const Frame frame = frames.load(index);
        FrameMeasurement m;
        m.frame_index = index;
        m.detections = detector(frame, index);
        m.detections.frame_index = index;
        if (m.detections.fit()) {
            const Patch region = extract_nerve_region(frame, *m.detections.nerve, model.region);
            m.probability = classify_frame(region, model.dictionary, model.classifier, model.lca);
            probs.push_back(*m.probability);
        }
        v.frames.push_back(std::move(m));
    }
    const Aggregate a = aggregate_probabilities(probs);
    v.frames_used = a.count;
    v.mean_value = a.mean;
    v.decision = a.decision;
    return v;
}

SparseTrainingResult train_sparse_model(const DatasetManifest& manifest, const std::vector<std::string>& video_ids,
                                        const SparseTrainingConfig& config) {
    const Detector detect = classical_detector(config.detector);
    std::vector<Patch> regions;
    std::vector<Patch> full;
    std::vector<int> labels;
    for (const auto& id : video_ids) {
        const VideoEntry& v = manifest.find(id);
        for (int index : sample_stride(static_cast<int>(v.frame_paths.size()), config.stride)) {
            const Frame frame = manifest.load_frame(v, index);
            const FrameDetections det = detect(frame, index);
            if (config.dictionary_on_full_frames) {
                const double pitch_mm = std::max(frame.width, frame.height) / frame.pixels_per_mm /
                                        std::max(1, config.region.size - 1);
                BBox whole{0.0, 0.0, static_cast<double>(frame.width - 1), static_cast<double>(frame.height - 1)};
                full.push_back(extract_nerve_region(frame, whole, {config.region.size, pitch_mm}));
            }
            if (!det.fit()) continue;
            regions.push_back(extract_nerve_region(frame, *det.nerve, config.region));
            labels.push_back(v.label == Label::positive ? 1 : 0);
        }
    }
    if (regions.empty()) throw std::invalid_argument("no fit training frames");
    const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    if (!has_pos || !has_neg) throw std::invalid_argument("training frames hold a single class");

    SparseTrainingResult result;
    DictionaryTrainingResult dict =
        train_dictionary(config.dictionary_on_full_frames ? full : regions, config.dictionary);
    result.model.dictionary = std::move(dict.dictionary);
    result.epoch_error = std::move(dict.epoch_error);
    result.model.lca = config.dictionary.lca;
    result.model.region = config.region;

    std::vector<std::vector<double>> features;
    features.reserve(regions.size());
    for (const auto& r : regions) features.push_back(pool_code(lca_encode(r, result.model.dictionary, result.model.lca)));
    result.model.classifier = train_classifier(features, labels, config.classifier);
    round_to_float(result.model.classifier);

    int correct = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const int predicted = result.model.classifier.probability(features[i]) >= 0.5 ? 1 : 0;
        correct += predicted == labels[i] ? 1 : 0;
    }
    result.n_frames = static_cast<int>(features.size());
    result.train_accuracy = 100.0 * correct / result.n_frames;
    return result;
}

nlohmann::json to_json(const FrameMeasurement& m) {
    nlohmann::json j;
    j["frame_index"] = m.frame_index;
    j["detections"] = m.detections;
    j["construction"] = m.construction ? nlohmann::json(*m.construction) : nlohmann::json(nullptr);
    j["crop_partial"] = m.crop ? nlohmann::json(m.crop->partial) : nlohmann::json(nullptr);
    j["width"] = m.width ? nlohmann::json(*m.width) : nlohmann::json(nullptr);
    j["probability"] = m.probability ? nlohmann::json(*m.probability) : nlohmann::json(nullptr);
    if (!m.error.empty()) j["error"] = m.error;
    return j;
}

nlohmann::json to_json(const VideoVerdict& v) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& m : v.frames) frames.push_back(to_json(m));
    return {{"video_id", v.video_id},   {"system", to_string(v.system)}, {"frames_used", v.frames_used},
            {"mean_value", v.mean_value}, {"decision", to_string(v.decision)}, {"frames", frames}};
}

}  // namespace onsd
