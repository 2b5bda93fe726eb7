// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance                 run all criteria
//   acceptance --criterion N   run one

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "onsd/cli.hpp"
#include "onsd/eval.hpp"
#include "onsd/pnm.hpp"
#include "onsd/render.hpp"
#include "test_util.hpp"

using namespace onsd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "failed: ";
            else detail << "; ";
            detail << what;
            pass = false;
        }
    }
};

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "onsd");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (rc != 0) std::cerr << "onsd " << args[1] << ": " << err.str();
    return rc;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

BBox box(double x0, double y0, double x1, double y1, ObjectClass c) { return {x0, y0, x1, y1, c, 1.0}; }

double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// --- 1 ----------------------------------------------------------------------

void geometry_suite(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0, worst_offset = 0.0;

    auto check_case = [&](Point2 gc, double a, double b, double theta_deg, double ppm) {
        const double th = theta_deg * std::numbers::pi / 180.0;
        const Point2 u{std::sin(th), std::cos(th)};
        const Point2 nc{gc.x + 2.0 * std::max(a, b) * u.x, gc.y + 2.0 * std::max(a, b) * u.y};
        const auto c = build_construction(box(gc.x - a, gc.y - b, gc.x + a, gc.y + b, ObjectClass::globe),
                                          box(nc.x - 5, nc.y - 5, nc.x + 5, nc.y + 5, ObjectClass::nerve), ppm);
        const double t = a * b / std::sqrt(b * b * u.x * u.x + a * a * u.y * u.y);
        const Point2 r{gc.x + t * u.x, gc.y + t * u.y};
        const Point2 m{r.x + 3.0 * ppm * u.x, r.y + 3.0 * ppm * u.y};
        worst = std::max({worst, dist(c.retinal_point, r), dist(c.measurement_point, m)});
        worst_offset = std::max(worst_offset, std::abs(dist(c.measurement_point, c.retinal_point) - 3.0 * ppm));
    };
    check_case({100, 100}, 60, 60, 0.0, 10.0);   // axis-aligned
    check_case({100, 100}, 60, 60, 45.0, 10.0);  // diagonal
    check_case({120, 90}, 70, 40, 45.0, 7.5);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pos(60, 240), rad(10, 80), ang(-90, 90), ppm(2, 20);
    for (int i = 0; i < 300; ++i) check_case({pos(rng), pos(rng)}, rad(rng), rad(rng), ang(rng), ppm(rng));
    o.check(worst <= 1e-6, "construction error " + std::to_string(worst));
    o.check(worst_offset <= 1e-9, "3 mm offset error " + std::to_string(worst_offset));

    // Angle-0 crop equals the sub-image copy.
    Frame f(200, 256, 10.0);
    std::uniform_real_distribution<float> px(0.0f, 1.0f);
    for (auto& p : f.pixels) p = px(rng);
    const auto c = build_construction(box(40, 40, 160, 160, ObjectClass::globe),
                                      box(80, 200, 120, 250, ObjectClass::nerve), 10.0);
    const OrientedCrop crop = extract_oriented_crop(f, c);
    bool exact = !crop.partial;
    for (int r = 0; r < OrientedCrop::kRows; ++r)
        for (int col = 0; col < OrientedCrop::kCols; ++col)
            exact = exact && crop.at(r, col) == f.at(100 - 64 + col, 190 - 8 + r);
    o.check(exact, "angle-0 crop differs from sub-image");

    const double s = seconds_since(t0);
    o.check(s < 1.0, "runtime " + std::to_string(s) + " s");
    o.detail << "max error " << worst << " px, offset error " << worst_offset << " px";
}

// --- 2, 3 ------------------------------------------------------------------

struct WidthBenchmark {
    int videos = 0;
    int correct = 0;
    int determinate = 0;
    double mae = 0.0;
    double max_err = 0.0;
};

WidthBenchmark run_width_system(const DatasetManifest& m, int stride) {
    WidthBenchmark b;
    const Detector det = classical_detector();
    const Segmenter seg = classical_segmenter();
    double err_sum = 0.0;
    for (const auto& v : m.videos) {
        const VideoVerdict verdict = predict_video_width(v.video_id, frames_from(m, v), det, seg, {stride, false});
        ++b.videos;
        const Decision expected = v.label == Label::positive ? Decision::positive : Decision::negative;
        b.correct += verdict.decision == expected ? 1 : 0;
        if (verdict.frames_used > 0) {
            ++b.determinate;
            const double e = std::abs(verdict.mean_value - v.ground_truth->sheath_width_mm);
            err_sum += e;
            b.max_err = std::max(b.max_err, e);
        }
    }
    b.mae = b.determinate ? err_sum / b.determinate : 0.0;
    return b;
}

void width_benchmark(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    testutil::TempDir dir("acc_width");
    // CLI defaults: 200 videos x 10 frames, [3, 7] mm minus (4.8, 5.2), speckle 0.1, jitter 2.
    o.check(cli({"phantom", "--out", dir.path().string()}) == 0, "phantom generation");
    const DatasetManifest m = load_manifest(dir / "manifest.json");
    const WidthBenchmark b = run_width_system(m, kDefaultStride);
    const double acc = 100.0 * b.correct / b.videos;
    o.check(b.videos == 200, "expected 200 videos");
    o.check(acc >= 95.0, "video accuracy below 95%");
    o.check(b.mae <= 0.5, "width MAE above 0.5 mm");
    const double s = seconds_since(t0);
    o.check(s < 300.0, "runtime above 5 min");
    o.detail << "videos " << b.videos << ", accuracy " << acc << "%, MAE " << b.mae << " mm over " << b.determinate
             << " determinate, " << s << " s";
}

void noise_free_fidelity(Outcome& o) {
    testutil::TempDir dir("acc_clean");
    o.check(cli({"phantom", "--out", dir.path().string(), "--count", "60", "--frames", "5", "--seed", "7",
                 "--speckle", "0", "--jitter", "2"}) == 0,
            "phantom generation");
    const DatasetManifest m = load_manifest(dir / "manifest.json");
    const WidthBenchmark b = run_width_system(m, 1);
    o.check(b.determinate == b.videos, "indeterminate verdicts");
    o.check(b.max_err <= 0.2, "max width error above 0.2 mm");
    o.check(b.correct == b.videos, "video accuracy below 100%");
    o.detail << "videos " << b.videos << ", max error " << b.max_err << " mm, accuracy "
             << 100.0 * b.correct / b.videos << "%";
}

// --- 4 ----------------------------------------------------------------------

void lca_suite(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> w(3.0, 7.0), ang(-20, 20);

    std::vector<Patch> crops;
    for (int i = 0; i < 50; ++i) {
        PhantomSpec s;
        s.sheath_width_mm = w(rng);
        s.nerve_angle_deg = ang(rng);
        s.speckle_sigma = 0.1;
        s.jitter_px = 2;
        s.seed = rng();
        const PhantomFrame pf = render_phantom_frame(s, 0);
        const auto c = build_construction(pf.truth.globe_bbox, *pf.truth.nerve_bbox, s.pixels_per_mm);
        const OrientedCrop crop = extract_oriented_crop(pf.frame, c);
        Patch p(OrientedCrop::kRows, OrientedCrop::kCols);
        for (std::size_t k = 0; k < crop.pixels.size(); ++k) p.values[k] = crop.pixels[k];
        crops.push_back(p);
    }

    // Energy monotonicity at step 0.1.
    const Dictionary d = Dictionary::random(32, 8, 1);
    const LcaParams params{0.5, 0.1, 100};
    double worst_rise = 0.0;
    for (const Patch& p : crops) {
        std::vector<double> trace;
        lca_encode(p, d, params, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i) worst_rise = std::max(worst_rise, trace[i] - trace[i - 1]);
    }
    o.check(worst_rise <= 1e-9, "energy increased by " + std::to_string(worst_rise));

    // Threshold above the drive silences every unit.
    bool all_zero = true;
    for (int i = 0; i < 5; ++i) {
        const auto b = correlate_all(normalize_patch(crops[static_cast<std::size_t>(i)]), d);
        double mx = 0.0;
        for (double v : b) mx = std::max(mx, std::abs(v));
        const Activations a = lca_encode(crops[static_cast<std::size_t>(i)], d, {mx, 0.1, 100});
        for (double v : a.code) all_zero = all_zero && v == 0.0;
    }
    o.check(all_zero, "nonzero code with lambda >= max|b|");

    // Delta kernel: fixed point is the soft threshold of the input.
    Dictionary delta;
    delta.count = 1;
    delta.size = 1;
    delta.kernels = {1.0};
    const Patch x = normalize_patch(crops[0]);
    const Activations a = lca_encode(x, delta, {0.5, 0.1, 400});
    double fp_err = 0.0;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        const double v = x.values[i];
        const double expect = v > 0.5 ? v - 0.5 : (v < -0.5 ? v + 0.5 : 0.0);
        fp_err = std::max(fp_err, std::abs(a.code[i] - expect));
    }
    o.check(fp_err <= 1e-6, "delta fixed point error " + std::to_string(fp_err));

    // Kernel gradient vs central differences on a 12x12 toy with 3 kernels.
    Patch toy(12, 12);
    std::normal_distribution<double> g;
    for (double& v : toy.values) v = g(rng);
    const Dictionary td = Dictionary::random(3, 4, 9);
    const Patch toyn = normalize_patch(toy);
    const Activations ta = lca_encode(toy, td, {0.1, 0.1, 60});
    const auto grad = kernel_gradient(toyn, td, ta);
    auto loss = [&](const Dictionary& dd) {
        const Patch r = reconstruct(dd, ta);
        double s = 0.0;
        for (std::size_t i = 0; i < r.values.size(); ++i) s += 0.5 * std::pow(toyn.values[i] - r.values[i], 2);
        return s;
    };
    double rel = 0.0;
    for (std::size_t i = 0; i < td.kernels.size(); ++i) {
        Dictionary p = td, q = td;
        p.kernels[i] += 1e-6;
        q.kernels[i] -= 1e-6;
        const double fd = (loss(p) - loss(q)) / 2e-6;
        rel = std::max(rel, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-3}));
    }
    o.check(rel <= 1e-4, "gradient relative error " + std::to_string(rel));

    // Unit-norm kernels after every update.
    DictionaryTrainingParams tp;
    tp.epochs = 1;
    tp.lca.n_steps = 50;
    double norm_err = 0.0;
    int updates = 0;
    const std::vector<Patch> corpus(crops.begin(), crops.begin() + 10);
    train_dictionary(corpus, tp, [&](const Dictionary& dd) {
        ++updates;
        for (int k = 0; k < dd.count; ++k) {
            double n2 = 0.0;
            for (double v : dd.kernel(k)) n2 += v * v;
            norm_err = std::max(norm_err, std::abs(std::sqrt(n2) - 1.0));
        }
    });
    o.check(updates == 10 && norm_err <= 1e-6, "kernel norm error " + std::to_string(norm_err));

    const double s = seconds_since(t0);
    o.check(s < 60.0, "runtime above 1 min");
    o.detail << "max energy rise " << worst_rise << ", fixed-point error " << fp_err << ", gradient rel error " << rel
             << ", norm error " << norm_err << ", " << s << " s";
}

// --- 5 ----------------------------------------------------------------------

void sparse_benchmark(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    testutil::TempDir dir("acc_sparse");
    // 150 videos over 75 patients, widths at least 1 mm from the threshold.
    o.check(cli({"phantom", "--out", dir.path().string(), "--count", "150", "--seed", "21", "--exclude-low", "4",
                 "--exclude-high", "6"}) == 0,
            "phantom generation");
    const DatasetManifest m = load_manifest(dir / "manifest.json");
    // Round-robin over 75 patients into 3 groups: one group (25 patients,
    // 50 videos) is held out.
    const FoldSplit split = grouped_kfold(m, 3, 1).front();
    std::set<std::string> train_patients;
    for (const auto& id : split.train_video_ids) train_patients.insert(m.find(id).patient_id);
    bool overlap = false;
    for (const auto& id : split.test_video_ids) overlap = overlap || train_patients.count(m.find(id).patient_id);
    o.check(!overlap, "patient overlap");
    o.check(split.train_video_ids.size() == 100 && split.test_video_ids.size() == 50, "split sizes");

    const SparseTrainingResult r = train_sparse_model(m, split.train_video_ids, SparseTrainingConfig{});
    const Detector det = classical_detector();
    int correct = 0;
    for (const auto& id : split.test_video_ids) {
        const VideoEntry& v = m.find(id);
        const VideoVerdict verdict = predict_video_sparse(id, frames_from(m, v), det, r.model);
        const Decision expected = v.label == Label::positive ? Decision::positive : Decision::negative;
        correct += verdict.decision == expected ? 1 : 0;
    }
    const double acc = 100.0 * correct / static_cast<double>(split.test_video_ids.size());
    o.check(acc >= 80.0, "video accuracy below 80%");
    const double s = seconds_since(t0);
    o.check(s < 600.0, "runtime above 10 min");
    o.detail << "train " << split.train_video_ids.size() << " videos (" << r.n_frames << " frames, training accuracy "
             << r.train_accuracy << "%), test " << split.test_video_ids.size() << " videos, accuracy " << acc << "%, "
             << s << " s";
}

// --- 6 ----------------------------------------------------------------------

void eval_properties(Outcome& o) {
    std::mt19937_64 rng(2024);
    int splits = 0;
    for (int trial = 0; trial < 100; ++trial) {
        DatasetManifest m;
        const int patients = 2 + static_cast<int>(rng() % 40);
        std::map<std::string, std::string> owner;
        int n = 0;
        for (int p = 0; p < patients; ++p) {
            const int vids = 1 + static_cast<int>(rng() % 5);
            for (int v = 0; v < vids; ++v) {
                VideoEntry e;
                e.video_id = "v" + std::to_string(n++);
                e.patient_id = "p" + std::to_string(p);
                e.frame_paths = {"f.pgm"};
                owner[e.video_id] = e.patient_id;
                m.videos.push_back(e);
            }
        }
        const int k = 2 + static_cast<int>(rng() % std::min(patients - 1, 10));
        const auto folds = grouped_kfold(m, k, rng());
        std::multiset<std::string> tested;
        for (const auto& f : folds) {
            ++splits;
            std::set<std::string> tp;
            for (const auto& id : f.train_video_ids) tp.insert(owner[id]);
            for (const auto& id : f.test_video_ids) {
                if (tp.count(owner[id])) o.check(false, "patient overlap in trial " + std::to_string(trial));
                tested.insert(id);
            }
        }
        bool partition = tested.size() == m.videos.size();
        for (const auto& v : m.videos) partition = partition && tested.count(v.video_id) == 1;
        if (!partition) o.check(false, "test sets do not partition videos in trial " + std::to_string(trial));
    }

    o.check(frame_accuracy(std::vector<int>{1, 1, 0}, 1) == 200.0 / 3.0, "frame_accuracy [1,1,0]");
    o.check(frame_accuracy(std::vector<int>{1, 1, 1}, 1) == 100.0, "frame_accuracy all correct");
    o.check(frame_accuracy(std::vector<int>{0}, 1) == 0.0, "frame_accuracy [0]");
    o.check(width_mae(std::vector<double>{5.0}, std::vector<double>{5.0}) == 0.0, "width_mae [5]");
    o.check(width_mae(std::vector<double>{4.0, 6.0}, std::vector<double>{5.0, 5.0}) == 1.0, "width_mae [4,6]");
    o.check(mean_sd(std::vector<double>{82.0}).sd == 0.0, "single-run sd");
    bool threw = false;
    try {
        width_mae(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0});
    } catch (const std::invalid_argument&) {
        threw = true;
    }
    o.check(threw, "width_mae length mismatch");
    o.detail << "100 manifests, " << splits << " folds checked";
}

// --- 7 ----------------------------------------------------------------------

bool same_tree(const fs::path& a, const fs::path& b, int& files) {
    std::set<fs::path> names;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) names.insert(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) names.insert(fs::relative(e.path(), b));
    for (const auto& n : names) {
        if (!fs::exists(a / n) || !fs::exists(b / n)) return false;
        if (testutil::slurp(a / n) != testutil::slurp(b / n)) return false;
        ++files;
    }
    return !names.empty();
}

void determinism(Outcome& o) {
    testutil::TempDir root("acc_det");
    for (const char* run : {"run1", "run2"}) {
        const fs::path d = root / run;
        const std::string manifest = (d / "data" / "manifest.json").string();
        o.check(cli({"phantom", "--out", (d / "data").string(), "--count", "8", "--frames", "6", "--seed", "4",
                     "--exclude-low", "4", "--exclude-high", "6"}) == 0,
                "phantom");
        o.check(cli({"train", "--manifest", manifest, "--out", (d / "model").string(), "--seed", "3", "--stride", "2",
                     "--epochs", "2"}) == 0,
                "train");
        o.check(cli({"predict", "--manifest", manifest, "--video", "video_001", "--out",
                     (d / "verdicts" / "width.json").string(), "--render", (d / "overlays_width").string()}) == 0,
                "predict width");
        o.check(cli({"predict", "--manifest", manifest, "--video", "video_002", "--system", "sparse", "--dictionary",
                     (d / "model" / "dictionary.bin").string(), "--classifier",
                     (d / "model" / "classifier.bin").string(), "--out", (d / "verdicts" / "sparse.json").string(),
                     "--render", (d / "overlays_sparse").string()}) == 0,
                "predict sparse");
    }
    int files = 0;
    for (const char* sub : {"data", "model", "verdicts", "overlays_width", "overlays_sparse"}) {
        int n = 0;
        o.check(same_tree(root / "run1" / sub, root / "run2" / sub, n), std::string(sub) + " differs");
        files += n;
    }
    o.detail << files << " files byte-identical across two runs";
}

// --- 8 ----------------------------------------------------------------------

void threshold_semantics(Outcome& o) {
    const std::vector<double> exactly_five{5.0, 5.0, 5.0};
    o.check(aggregate_widths(exactly_five).decision == Decision::negative, "mean width 5.0 not negative");
    const std::vector<double> straddle{4.5, 5.5};
    o.check(aggregate_widths(straddle).decision == Decision::negative, "mean of 4.5, 5.5 not negative");
    const std::vector<double> just_above{5.0, 5.0 + 1e-9};
    o.check(aggregate_widths(just_above).decision == Decision::positive, "mean just above 5 not positive");
    const std::vector<double> half{0.5};
    o.check(aggregate_probabilities(half).decision == Decision::positive, "mean probability 0.5 not positive");
    const std::vector<double> quarters{0.25, 0.75};
    o.check(aggregate_probabilities(quarters).decision == Decision::positive, "mean of 0.25, 0.75 not positive");
    const std::vector<double> below{0.5 - 1e-9};
    o.check(aggregate_probabilities(below).decision == Decision::negative, "mean below 0.5 not negative");
    o.check(label_for_width(5.0) == Label::negative && label_for_width(5.0 + 1e-9) == Label::positive,
            "label rule at 5 mm");
    o.detail << "width 5.0 -> negative, probability 0.5 -> positive";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    int only = 0;
    app.add_option("--criterion", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"geometry analytic suite", geometry_suite},
        {"width-system phantom benchmark", width_benchmark},
        {"noise-free fidelity", noise_free_fidelity},
        {"LCA numerical suite", lca_suite},
        {"sparse-system phantom benchmark", sparse_benchmark},
        {"evaluation-harness properties", eval_properties},
        {"determinism", determinism},
        {"threshold semantics", threshold_semantics},
    };
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only != 0 && static_cast<int>(i) + 1 != only) continue;
        Outcome o;
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL")
                  << " - " << o.detail.str() << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
