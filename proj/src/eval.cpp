#include "onsd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace onsd {

std::vector<FoldSplit> grouped_kfold(const DatasetManifest& manifest, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k must be >= 2");
    std::vector<std::string> patients;
    {
        std::set<std::string> seen;
        for (const auto& v : manifest.videos)
            if (seen.insert(v.patient_id).second) patients.push_back(v.patient_id);
    }
    if (static_cast<int>(patients.size()) < k) {
        throw std::invalid_argument("fewer patients than folds (" + std::to_string(patients.size()) + " < " +
                                    std::to_string(k) + ")");
    }
    std::sort(patients.begin(), patients.end());
    std::mt19937_64 rng(seed);
    std::shuffle(patients.begin(), patients.end(), rng);
    std::map<std::string, int> group;
    for (std::size_t i = 0; i < patients.size(); ++i) group[patients[i]] = static_cast<int>(i % k);

    std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) folds[f].fold_index = f;
    for (const auto& v : manifest.videos) {
        const int g = group.at(v.patient_id);
        for (int f = 0; f < k; ++f)
            (f == g ? folds[f].test_video_ids : folds[f].train_video_ids).push_back(v.video_id);
    }
    return folds;
}

double frame_accuracy(std::span<const int> per_frame_decisions, int video_label) {
    if (per_frame_decisions.empty()) throw std::invalid_argument("frame_accuracy needs at least one frame");
    const auto hits = std::count(per_frame_decisions.begin(), per_frame_decisions.end(), video_label);
    return 100.0 * static_cast<double>(hits) / static_cast<double>(per_frame_decisions.size());
}

double width_mae(std::span<const double> predicted, std::span<const double> truth) {
    if (predicted.size() != truth.size()) throw std::invalid_argument("width_mae: length mismatch");
    if (predicted.empty()) throw std::invalid_argument("width_mae: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) acc += std::abs(predicted[i] - truth[i]);
    return acc / static_cast<double>(predicted.size());
}

std::vector<int> frame_decisions(const VideoVerdict& v, int video_label) {
    std::vector<int> out;
    out.reserve(v.frames.size());
    for (const auto& m : v.frames) {
        if (v.system == System::width && m.width) {
            out.push_back(m.width->width_mm > kWidthThresholdMm ? 1 : 0);
        } else if (v.system == System::sparse && m.probability) {
            out.push_back(*m.probability >= 0.5 ? 1 : 0);
        } else {
            out.push_back(1 - video_label);
        }
    }
    return out;
}

MeanSd mean_sd(std::span<const double> values) {
    MeanSd r;
    if (values.empty()) return r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() < 2) return r;
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return r;
}

EvalReport evaluate_with(const DatasetManifest& manifest, const std::string& system_name, int k,
                         const std::vector<std::uint64_t>& seeds, const PredictorFactory& factory) {
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    manifest.validate();
    EvalReport report;
    report.system = system_name;
    report.k = k;
    std::vector<double> video_acc, frame_acc, maes;
    for (std::uint64_t seed : seeds) {
        RunReport run;
        run.seed = seed;
        int videos = 0, videos_ok = 0, frames = 0, frames_ok = 0;
        std::vector<double> pred_w, true_w;
        for (const FoldSplit& split : grouped_kfold(manifest, k, seed)) {
            const VideoPredictor predict = factory(manifest, split, seed);
            FoldReport fold;
            fold.fold_index = split.fold_index;
            for (const auto& id : split.test_video_ids) {
                const VideoEntry& entry = manifest.find(id);
                const VideoVerdict verdict = predict(entry);
                const int label = entry.label == Label::positive ? 1 : 0;
                const Decision expected = label == 1 ? Decision::positive : Decision::negative;
                ++fold.n_test_videos;
                if (verdict.decision == expected) ++fold.correct_videos;
                for (int d : frame_decisions(verdict, label)) {
                    ++fold.n_frames;
                    if (d == label) ++fold.correct_frames;
                }
                VideoOutcome out{id, entry.label, verdict.decision, verdict.mean_value, verdict.frames_used, {}};
                if (entry.ground_truth) out.truth_width_mm = entry.ground_truth->sheath_width_mm;
                if (verdict.system == System::width && verdict.frames_used > 0 && out.truth_width_mm) {
                    pred_w.push_back(verdict.mean_value);
                    true_w.push_back(*out.truth_width_mm);
                }
                run.videos.push_back(out);
            }
            videos += fold.n_test_videos;
            videos_ok += fold.correct_videos;
            frames += fold.n_frames;
            frames_ok += fold.correct_frames;
            run.folds.push_back(fold);
        }
        run.video_accuracy = videos > 0 ? 100.0 * videos_ok / videos : 0.0;
        run.frame_accuracy = frames > 0 ? 100.0 * frames_ok / frames : 0.0;
        if (!pred_w.empty()) {
            run.width_mae_mm = width_mae(pred_w, true_w);
            maes.push_back(*run.width_mae_mm);
        }
        video_acc.push_back(run.video_accuracy);
        frame_acc.push_back(run.frame_accuracy);
        report.runs.push_back(std::move(run));
    }
    report.video_accuracy = mean_sd(video_acc);
    report.frame_accuracy = mean_sd(frame_acc);
    if (!maes.empty()) report.width_mae_mm = mean_sd(maes).mean;
    return report;
}

EvalReport evaluate(const DatasetManifest& manifest, System system, int k, const std::vector<std::uint64_t>& seeds,
                    const EvalConfig& config) {
    PredictorFactory factory;
    if (system == System::width) {
        factory = [&config](const DatasetManifest& m, const FoldSplit&, std::uint64_t) -> VideoPredictor {
            const Detector det = classical_detector(config.detector);
            const Segmenter seg = classical_segmenter(config.segmenter);
            WidthPipelineOptions opts = config.width;
            opts.stride = config.stride;
            return [&m, det, seg, opts](const VideoEntry& v) {
                return predict_video_width(v.video_id, frames_from(m, v), det, seg, opts);
            };
        };
    } else {
        factory = [&config](const DatasetManifest& m, const FoldSplit& split, std::uint64_t seed) -> VideoPredictor {
            SparseTrainingConfig cfg = config.sparse;
            cfg.stride = config.stride;
            cfg.detector = config.detector;
            cfg.dictionary.seed = seed;
            cfg.classifier.seed = seed;
            auto model = std::make_shared<SparseModel>(train_sparse_model(m, split.train_video_ids, cfg).model);
            const Detector det = classical_detector(config.detector);
            const int stride = config.stride;
            return [&m, det, model, stride](const VideoEntry& v) {
                return predict_video_sparse(v.video_id, frames_from(m, v), det, *model, stride);
            };
        };
    }
    return evaluate_with(manifest, to_string(system), k, seeds, factory);
}

nlohmann::json to_json(const EvalReport& r) {
    using nlohmann::json;
    json runs = json::array();
    for (const auto& run : r.runs) {
        json folds = json::array();
        for (const auto& f : run.folds) {
            folds.push_back({{"fold_index", f.fold_index},
                             {"n_test_videos", f.n_test_videos},
                             {"correct_videos", f.correct_videos},
                             {"n_frames", f.n_frames},
                             {"correct_frames", f.correct_frames}});
        }
        json videos = json::array();
        for (const auto& v : run.videos) {
            videos.push_back({{"video_id", v.video_id},
                              {"label", to_string(v.label)},
                              {"decision", to_string(v.decision)},
                              {"mean_value", v.mean_value},
                              {"frames_used", v.frames_used},
                              {"truth_width_mm", v.truth_width_mm ? json(*v.truth_width_mm) : json(nullptr)}});
        }
        runs.push_back({{"seed", run.seed},
                        {"video_accuracy", run.video_accuracy},
                        {"frame_accuracy", run.frame_accuracy},
                        {"width_mae_mm", run.width_mae_mm ? json(*run.width_mae_mm) : json(nullptr)},
                        {"folds", folds},
                        {"videos", videos}});
    }
    return {{"system", r.system},
            {"k", r.k},
            {"video_accuracy", {{"mean", r.video_accuracy.mean}, {"sd", r.video_accuracy.sd}}},
            {"frame_accuracy", {{"mean", r.frame_accuracy.mean}, {"sd", r.frame_accuracy.sd}}},
            {"width_mae_mm", r.width_mae_mm ? json(*r.width_mae_mm) : json(nullptr)},
            {"n_runs", r.runs.size()},
            {"runs", runs}};
}

std::string to_csv(const EvalReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << "model,video_accuracy,video_accuracy_sd,frame_accuracy,frame_accuracy_sd\n";
    os << r.system << ',' << r.video_accuracy.mean << ',' << r.video_accuracy.sd << ',' << r.frame_accuracy.mean
       << ',' << r.frame_accuracy.sd << '\n';
    return os.str();
}

}  // namespace onsd
