#include "onsd/cli.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "onsd/detection.hpp"
#include "onsd/eval.hpp"
#include "onsd/lca.hpp"
#include "onsd/phantom.hpp"
#include "onsd/pipeline.hpp"
#include "onsd/pnm.hpp"
#include "onsd/render.hpp"
#include "onsd/segmentation.hpp"
#include "onsd/serialize.hpp"

namespace onsd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kUsageError = 2;

/// Raised for invalid user input that is only detectable after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError(path, "cannot open for writing");
    f << text;
    if (!f) throw IoError(path, "write failed");
}

// --- phantom specs from JSON ------------------------------------------------

double number_field(const json& j, const std::string& key) {
    if (!j.is_number()) throw UsageError("invalid phantom spec field '" + key + "': expected a number");
    return j.get<double>();
}

int int_field(const json& j, const std::string& key) {
    if (!j.is_number_integer()) throw UsageError("invalid phantom spec field '" + key + "': expected an integer");
    return j.get<int>();
}

Point2 pair_field(const json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw UsageError("invalid phantom spec field '" + key + "': expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

PhantomJob job_from_json(const json& j) {
    if (!j.is_object()) throw UsageError("phantom spec entries must be JSON objects");
    PhantomJob job;
    PhantomSpec& s = job.spec;
    for (const auto& [key, v] : j.items()) {
        if (key == "image_width") s.image_width = int_field(v, key);
        else if (key == "image_height") s.image_height = int_field(v, key);
        else if (key == "pixels_per_mm") s.pixels_per_mm = number_field(v, key);
        else if (key == "globe_center") s.globe_center = pair_field(v, key);
        else if (key == "globe_radii") s.globe_radii = pair_field(v, key);
        else if (key == "nerve_angle") s.nerve_angle_deg = number_field(v, key);
        else if (key == "sheath_width_mm") s.sheath_width_mm = number_field(v, key);
        else if (key == "sheath_wall_thickness_mm") s.sheath_wall_thickness_mm = number_field(v, key);
        else if (key == "nerve_length_mm") s.nerve_length_mm = number_field(v, key);
        else if (key == "interior_intensity") s.interior_intensity = number_field(v, key);
        else if (key == "wall_intensity") s.wall_intensity = number_field(v, key);
        else if (key == "background_intensity") s.background_intensity = number_field(v, key);
        else if (key == "speckle_sigma") s.speckle_sigma = number_field(v, key);
        else if (key == "jitter_px") s.jitter_px = int_field(v, key);
        else if (key == "seed") {
            if (!v.is_number_unsigned()) throw UsageError("invalid phantom spec field 'seed': expected a non-negative integer");
            s.seed = v.get<std::uint64_t>();
        } else if (key == "patient_id") {
            if (!v.is_string()) throw UsageError("invalid phantom spec field 'patient_id': expected a string");
            job.patient_id = v.get<std::string>();
        } else if (key == "video_id") {
            if (!v.is_string()) throw UsageError("invalid phantom spec field 'video_id': expected a string");
            job.video_id = v.get<std::string>();
        } else if (key == "n_frames") {
            job.n_frames = int_field(v, key);
            if (job.n_frames < 1) throw UsageError("invalid phantom spec field 'n_frames': must be >= 1");
        } else {
            throw UsageError("invalid phantom spec field '" + key + "': unknown field");
        }
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return job;
}

std::vector<PhantomJob> jobs_from_spec_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError(path, "cannot open spec file");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw UsageError(path.string() + ": malformed JSON: " + e.what());
    }
    std::vector<PhantomJob> jobs;
    if (j.is_object() && j.contains("videos")) {
        if (!j["videos"].is_array()) throw UsageError("invalid phantom spec field 'videos': expected an array");
        for (const auto& e : j["videos"]) jobs.push_back(job_from_json(e));
    } else {
        jobs.push_back(job_from_json(j));
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].patient_id.empty()) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "patient_%03zu", i);
            jobs[i].patient_id = buf;
        }
    }
    return jobs;
}

struct SamplingOptions {
    int count = 200;
    std::uint64_t seed = 1;
    int frames = 10;
    int videos_per_patient = 2;
    double width_min = 3.0;
    double width_max = 7.0;
    double exclude_low = 4.8;
    double exclude_high = 5.2;
    double angle_max = 20.0;
    double speckle = 0.1;
    int jitter = 2;
};

std::vector<PhantomJob> sample_jobs(const SamplingOptions& o) {
    if (o.count < 1) throw UsageError("--count must be >= 1");
    if (o.frames < 1) throw UsageError("--frames must be >= 1");
    if (o.videos_per_patient < 1) throw UsageError("--videos-per-patient must be >= 1");
    if (!(o.width_min > 0.0) || !(o.width_max > o.width_min)) throw UsageError("width range must satisfy 0 < min < max");
    if (o.exclude_high < o.exclude_low) throw UsageError("exclusion band must satisfy low <= high");
    if (o.exclude_low <= o.width_min && o.exclude_high >= o.width_max)
        throw UsageError("exclusion band covers the whole width range");
    if (o.angle_max < 0.0 || o.speckle < 0.0 || o.jitter < 0) throw UsageError("angle, speckle and jitter must be >= 0");

    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> width(o.width_min, o.width_max);
    std::uniform_real_distribution<double> angle(-o.angle_max, o.angle_max);
    std::vector<PhantomJob> jobs;
    for (int i = 0; i < o.count; ++i) {
        PhantomJob job;
        double w = width(rng);
        while (w > o.exclude_low && w < o.exclude_high) w = width(rng);
        job.spec.sheath_width_mm = w;
        job.spec.nerve_angle_deg = o.angle_max > 0.0 ? angle(rng) : 0.0;
        job.spec.speckle_sigma = o.speckle;
        job.spec.jitter_px = o.jitter;
        job.spec.seed = rng();
        job.n_frames = o.frames;
        char buf[32];
        std::snprintf(buf, sizeof buf, "patient_%03d", i / o.videos_per_patient);
        job.patient_id = buf;
        try {
            job.spec.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        jobs.push_back(job);
    }
    return jobs;
}

// --- shared helpers ---------------------------------------------------------

Detector make_detector(const DatasetManifest& m, const VideoEntry& v, const std::string& detections_path) {
    if (detections_path.empty()) return classical_detector();
    const Frame first = m.load_frame(v, 0);
    return precomputed_detector(parse_detection_file(detections_path, first.width, first.height));
}

int check_frame_index(const VideoEntry& v, int index) {
    if (index < 0 || index >= static_cast<int>(v.frame_paths.size()))
        throw UsageError("frame index " + std::to_string(index) + " out of range (video has " +
                         std::to_string(v.frame_paths.size()) + " frames)");
    return index;
}

void add_sparse_options(CLI::App* cmd, SparseTrainingConfig& c) {
    cmd->add_option("--atoms", c.dictionary.count, "Number of dictionary kernels")->check(CLI::PositiveNumber);
    cmd->add_option("--kernel-size", c.dictionary.size, "Kernel side length")->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", c.dictionary.epochs, "Dictionary training epochs")->check(CLI::NonNegativeNumber);
    cmd->add_option("--lr", c.dictionary.learning_rate, "Dictionary learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--lambda", c.dictionary.lca.lambda, "LCA threshold")->check(CLI::NonNegativeNumber);
    cmd->add_option("--lca-step", c.dictionary.lca.step, "LCA step size (dt/tau)")->check(CLI::PositiveNumber);
    cmd->add_option("--lca-iters", c.dictionary.lca.n_steps, "LCA iterations")->check(CLI::PositiveNumber);
    cmd->add_option("--clf-epochs", c.classifier.epochs, "Classifier epochs")->check(CLI::NonNegativeNumber);
    cmd->add_option("--clf-lr", c.classifier.learning_rate, "Classifier learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--region-size", c.region.size, "Nerve region side in samples")->check(CLI::PositiveNumber);
    cmd->add_option("--region-mm", c.region.mm_per_sample, "Nerve region pitch in mm")->check(CLI::PositiveNumber);
    cmd->add_flag("--full-frames", c.dictionary_on_full_frames, "Train the dictionary on whole frames");
}

json sparse_sidecar(const SparseTrainingConfig& c) {
    return {{"atoms", c.dictionary.count},
            {"kernel_size", c.dictionary.size},
            {"epochs", c.dictionary.epochs},
            {"learning_rate", c.dictionary.learning_rate},
            {"seed", c.dictionary.seed},
            {"lambda", c.dictionary.lca.lambda},
            {"lca_step", c.dictionary.lca.step},
            {"lca_iters", c.dictionary.lca.n_steps},
            {"region_size", c.region.size},
            {"region_mm", c.region.mm_per_sample},
            {"full_frames", c.dictionary_on_full_frames},
            {"stride", c.stride}};
}

SparseModel load_sparse_model(const std::string& dict_path, const std::string& clf_path) {
    if (dict_path.empty()) throw UsageError("the sparse system needs --dictionary");
    if (clf_path.empty()) throw UsageError("the sparse system needs --classifier");
    if (!fs::exists(dict_path)) throw UsageError("dictionary file not found: " + dict_path);
    if (!fs::exists(clf_path)) throw UsageError("classifier file not found: " + clf_path);
    SparseModel m;
    m.dictionary = load_dictionary(dict_path);
    m.classifier = load_classifier(clf_path);
    const fs::path side = dict_path + ".json";
    if (fs::exists(side)) {
        std::ifstream f(side);
        const json j = json::parse(f);
        m.lca.lambda = j.value("lambda", m.lca.lambda);
        m.lca.step = j.value("lca_step", m.lca.step);
        m.lca.n_steps = j.value("lca_iters", m.lca.n_steps);
        m.region.size = j.value("region_size", m.region.size);
        m.region.mm_per_sample = j.value("region_mm", m.region.mm_per_sample);
    }
    if (m.classifier.weights.size() != static_cast<std::size_t>(m.dictionary.count))
        throw UsageError("classifier expects " + std::to_string(m.classifier.weights.size()) +
                         " features but the dictionary has " + std::to_string(m.dictionary.count) + " kernels");
    return m;
}

std::string frame_file_name(const std::string& video_id, int index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "_f%04d.%s", index, ext);
    return video_id + buf;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Optic nerve sheath measurement and classification"};
    app.require_subcommand(1);

    // phantom
    auto* phantom = app.add_subcommand("phantom", "Generate a phantom dataset");
    std::string ph_out, ph_spec;
    SamplingOptions so;
    phantom->add_option("--out", ph_out, "Output directory")->required();
    phantom->add_option("--spec", ph_spec, "JSON spec file (one spec or {\"videos\": [...]})");
    phantom->add_option("--count", so.count, "Number of sampled videos");
    phantom->add_option("--seed", so.seed, "Sampling seed");
    phantom->add_option("--frames", so.frames, "Frames per video");
    phantom->add_option("--videos-per-patient", so.videos_per_patient, "Videos sharing one patient id");
    phantom->add_option("--width-min", so.width_min, "Minimum sheath width (mm)");
    phantom->add_option("--width-max", so.width_max, "Maximum sheath width (mm)");
    phantom->add_option("--exclude-low", so.exclude_low, "Lower end of the excluded width band (mm)");
    phantom->add_option("--exclude-high", so.exclude_high, "Upper end of the excluded width band (mm)");
    phantom->add_option("--angle-max", so.angle_max, "Nerve angles drawn from [-a, a] degrees");
    phantom->add_option("--speckle", so.speckle, "Speckle sigma");
    phantom->add_option("--jitter", so.jitter, "Jitter amplitude (px)");

    // detect
    auto* detect = app.add_subcommand("detect", "Run the classical detector over a video");
    std::string manifest_path, video_id, out_path, detections_path;
    int stride = kDefaultStride;
    detect->add_option("--manifest", manifest_path, "Manifest file")->required();
    detect->add_option("--video", video_id, "Video id")->required();
    detect->add_option("--out", out_path, "Detection file to write")->required();
    int detect_stride = 1;
    detect->add_option("--stride", detect_stride, "Frame stride")->check(CLI::PositiveNumber);

    // measure
    auto* measure = app.add_subcommand("measure", "Measure the sheath width on one frame");
    int frame_index = 0;
    std::string mask_out;
    measure->add_option("--manifest", manifest_path, "Manifest file")->required();
    measure->add_option("--video", video_id, "Video id")->required();
    measure->add_option("--frame", frame_index, "Frame index");
    measure->add_option("--detections", detections_path, "Detection file instead of the classical detector");
    measure->add_option("--mask-out", mask_out, "Write the segmentation mask (PGM)");
    measure->add_option("--out", out_path, "Write the measurement JSON");

    // train
    auto* train = app.add_subcommand("train", "Train the sparse-coding dictionary and classifier");
    SparseTrainingConfig train_cfg;
    std::string train_out;
    std::uint64_t train_seed = 1;
    train->add_option("--manifest", manifest_path, "Manifest file")->required();
    train->add_option("--out", train_out, "Output directory")->required();
    train->add_option("--seed", train_seed, "Training seed");
    train->add_option("--stride", train_cfg.stride, "Frame stride")->check(CLI::PositiveNumber);
    add_sparse_options(train, train_cfg);

    // predict
    auto* predict = app.add_subcommand("predict", "Predict one video");
    std::string system_name = "width", dict_path, clf_path, render_dir;
    bool exclude_partial = false;
    predict->add_option("--manifest", manifest_path, "Manifest file")->required();
    predict->add_option("--video", video_id, "Video id")->required();
    predict->add_option("--system", system_name, "width or sparse")->check(CLI::IsMember({"width", "sparse"}));
    predict->add_option("--stride", stride, "Frame stride")->check(CLI::PositiveNumber);
    predict->add_option("--dictionary", dict_path, "Dictionary file (sparse system)");
    predict->add_option("--classifier", clf_path, "Classifier file (sparse system)");
    predict->add_option("--detections", detections_path, "Detection file instead of the classical detector");
    predict->add_flag("--exclude-partial", exclude_partial, "Drop widths from crops that leave the frame");
    predict->add_option("--out", out_path, "Verdict JSON path");
    predict->add_option("--render", render_dir, "Write overlay images to this directory");

    // eval
    auto* evalc = app.add_subcommand("eval", "Grouped k-fold evaluation");
    int k = 10;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::string eval_out;
    EvalConfig eval_cfg;
    evalc->add_option("--manifest", manifest_path, "Manifest file")->required();
    evalc->add_option("--system", system_name, "width or sparse")->check(CLI::IsMember({"width", "sparse"}));
    evalc->add_option("--k", k, "Number of folds");
    evalc->add_option("--seeds", seeds, "Fold seeds, one run each");
    evalc->add_option("--stride", eval_cfg.stride, "Frame stride")->check(CLI::PositiveNumber);
    evalc->add_flag("--exclude-partial", eval_cfg.width.exclude_partial, "Drop widths from partial crops");
    evalc->add_option("--out", eval_out, "Output directory for report.json and report.csv")->required();
    add_sparse_options(evalc, eval_cfg.sparse);

    // render
    auto* render = app.add_subcommand("render", "Render the measurement overlay for one frame");
    render->add_option("--manifest", manifest_path, "Manifest file")->required();
    render->add_option("--video", video_id, "Video id")->required();
    render->add_option("--frame", frame_index, "Frame index");
    render->add_option("--detections", detections_path, "Detection file instead of the classical detector");
    render->add_option("--out", out_path, "Output PPM path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }

    try {
        if (phantom->parsed()) {
            const std::vector<PhantomJob> jobs = ph_spec.empty() ? sample_jobs(so) : jobs_from_spec_file(ph_spec);
            build_dataset(jobs, ph_out);
            out << (fs::path(ph_out) / kManifestFileName).string() << "\n";
            return 0;
        }

        const DatasetManifest manifest = load_manifest(manifest_path);

        if (detect->parsed()) {
            const VideoEntry& v = manifest.find(video_id);
            std::vector<FrameDetections> all;
            int w = 0, h = 0;
            for (int i : sample_stride(static_cast<int>(v.frame_paths.size()), detect_stride)) {
                const Frame f = manifest.load_frame(v, i);
                w = f.width;
                h = f.height;
                all.push_back(detect_classical(f, i));
            }
            write_detection_file(out_path, all, w, h);
            out << filter_fit_frames(all).size() << " of " << all.size() << " frames fit\n";
            return 0;
        }

        if (measure->parsed() || render->parsed()) {
            const VideoEntry& v = manifest.find(video_id);
            check_frame_index(v, frame_index);
            const Frame frame = manifest.load_frame(v, frame_index);
            const Detector det = make_detector(manifest, v, detections_path);
            FrameMeasurement m = measure_frame(frame, det(frame, frame_index), classical_segmenter());
            m.frame_index = frame_index;
            if (render->parsed()) {
                write_ppm(out_path, render_overlay(frame, m));
                out << out_path << "\n";
                return 0;
            }
            if (!mask_out.empty() && m.mask) save_mask(mask_out, *m.mask);
            const json j = to_json(m);
            if (!out_path.empty()) write_text(out_path, j.dump(2) + "\n");
            if (m.width) {
                out << "width_mm " << m.width->width_mm << (m.partial() ? " (partial crop)" : "") << "\n";
            } else {
                out << "no valid width" << (m.error.empty() ? "" : ": " + m.error) << "\n";
            }
            return 0;
        }

        if (train->parsed()) {
            train_cfg.dictionary.seed = train_seed;
            train_cfg.classifier.seed = train_seed;
            train_cfg.dictionary.track_error = true;
            train_cfg.dictionary.lca.validate();
            std::vector<std::string> ids;
            for (const auto& v : manifest.videos) ids.push_back(v.video_id);
            SparseTrainingResult r;
            try {
                r = train_sparse_model(manifest, ids, train_cfg);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            const json side = sparse_sidecar(train_cfg);
            fs::create_directories(train_out);
            save_dictionary(fs::path(train_out) / "dictionary.bin", r.model.dictionary, side.dump(2));
            json clf_side = side;
            clf_side["classifier_epochs"] = train_cfg.classifier.epochs;
            clf_side["classifier_learning_rate"] = train_cfg.classifier.learning_rate;
            clf_side["training_frames"] = r.n_frames;
            save_classifier(fs::path(train_out) / "classifier.bin", r.model.classifier, clf_side.dump(2));
            for (std::size_t e = 0; e < r.epoch_error.size(); ++e)
                out << "epoch " << e << " reconstruction_error " << r.epoch_error[e] << "\n";
            out << "training_frames " << r.n_frames << " training_accuracy " << r.train_accuracy << "\n";
            return 0;
        }

        if (predict->parsed()) {
            const VideoEntry& v = manifest.find(video_id);
            const Detector det = make_detector(manifest, v, detections_path);
            VideoVerdict verdict;
            if (system_from_string(system_name) == System::width) {
                verdict = predict_video_width(v.video_id, frames_from(manifest, v), det, classical_segmenter(),
                                              {stride, exclude_partial});
            } else {
                const SparseModel model = load_sparse_model(dict_path, clf_path);
                verdict = predict_video_sparse(v.video_id, frames_from(manifest, v), det, model, stride);
            }
            if (!render_dir.empty()) {
                fs::create_directories(render_dir);
                for (const auto& m : verdict.frames) {
                    const Frame f = manifest.load_frame(v, m.frame_index);
                    write_ppm(fs::path(render_dir) / frame_file_name(v.video_id, m.frame_index, "ppm"),
                              render_overlay(f, m));
                }
            }
            const std::string path = out_path.empty() ? v.video_id + "_verdict.json" : out_path;
            write_text(path, to_json(verdict).dump(2) + "\n");
            out << v.video_id << " " << to_string(verdict.decision) << " mean " << verdict.mean_value
                << " frames_used " << verdict.frames_used << "\n";
            return 0;
        }

        if (evalc->parsed()) {
            const System system = system_from_string(system_name);
            eval_cfg.sparse.dictionary.lca.validate();
            std::set<std::string> patients;
            for (const auto& v : manifest.videos) patients.insert(v.patient_id);
            if (k < 2) throw UsageError("--k must be >= 2");
            if (static_cast<int>(patients.size()) < k)
                throw UsageError("fewer patients than folds (" + std::to_string(patients.size()) + " < " +
                                 std::to_string(k) + ")");
            const EvalReport report = evaluate(manifest, system, k, seeds, eval_cfg);
            write_text(fs::path(eval_out) / "report.json", to_json(report).dump(2) + "\n");
            write_text(fs::path(eval_out) / "report.csv", to_csv(report));
            out << "video_accuracy " << report.video_accuracy.mean << " +- " << report.video_accuracy.sd
                << " frame_accuracy " << report.frame_accuracy.mean << " +- " << report.frame_accuracy.sd;
            if (report.width_mae_mm) out << " width_mae_mm " << *report.width_mae_mm;
            out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    return kUsageError;
}

}  // namespace onsd
