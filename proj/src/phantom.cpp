#include "onsd/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "onsd/pnm.hpp"
#include "onsd/serialize.hpp"

namespace onsd {
namespace {

// Independent RNG streams per (seed, frame, purpose).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t frame, std::uint64_t salt) {
    std::uint64_t z = seed ^ (frame * 0x9e3779b97f4a7c15ULL) ^ (salt << 56);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

enum class Region : std::uint8_t { background, globe, wall, interior };

struct Extent {
    int x_min = std::numeric_limits<int>::max();
    int y_min = std::numeric_limits<int>::max();
    int x_max = -1;
    int y_max = -1;

    void add(int x, int y) {
        x_min = std::min(x_min, x);
        y_min = std::min(y_min, y);
        x_max = std::max(x_max, x);
        y_max = std::max(y_max, y);
    }
    [[nodiscard]] bool empty() const { return x_max < 0; }
    [[nodiscard]] BBox box(ObjectClass cls) const {
        return {double(x_min), double(y_min), double(x_max + 1), double(y_max + 1), cls, 1.0};
    }
};

void require(bool ok, const std::string& field, const std::string& rule) {
    if (!ok) throw std::invalid_argument("invalid phantom spec field '" + field + "': " + rule);
}

}  // namespace

std::string to_string(Label l) { return l == Label::positive ? "positive" : "negative"; }

Label label_from_string(const std::string& s) {
    if (s == "positive") return Label::positive;
    if (s == "negative") return Label::negative;
    throw std::invalid_argument("unknown label '" + s + "'");
}

Label label_for_width(double sheath_width_mm) {
    return sheath_width_mm > kWidthThresholdMm ? Label::positive : Label::negative;
}

void PhantomSpec::validate() const {
    require(image_width > 0, "image_width", "must be > 0");
    require(image_height > 0, "image_height", "must be > 0");
    require(pixels_per_mm > 0.0 && std::isfinite(pixels_per_mm), "pixels_per_mm", "must be > 0");
    require(globe_radii.x >= 1.0 && globe_radii.y >= 1.0, "globe_radii", "must be >= 1 px");
    require(std::isfinite(nerve_angle_deg), "nerve_angle", "must be finite");
    require(sheath_width_mm > 0.0, "sheath_width_mm", "must be > 0");
    require(sheath_wall_thickness_mm > 0.0, "sheath_wall_thickness_mm", "must be > 0");
    require(nerve_length_mm > 0.0, "nerve_length_mm", "must be > 0");
    for (auto [v, name] : {std::pair{interior_intensity, "interior_intensity"},
                           std::pair{wall_intensity, "wall_intensity"},
                           std::pair{background_intensity, "background_intensity"}}) {
        require(v >= 0.0 && v <= 1.0, name, "must lie in [0,1]");
    }
    require(wall_intensity > background_intensity, "wall_intensity", "must exceed background_intensity");
    require(background_intensity > interior_intensity, "background_intensity", "must exceed interior_intensity");
    require(speckle_sigma >= 0.0 && std::isfinite(speckle_sigma), "speckle_sigma", "must be >= 0");
    require(jitter_px >= 0, "jitter_px", "must be >= 0");
    const double j = jitter_px;
    require(globe_center.x - globe_radii.x - j >= 0.0 && globe_center.x + globe_radii.x + j <= image_width - 1.0 &&
                globe_center.y - globe_radii.y - j >= 0.0 && globe_center.y + globe_radii.y + j <= image_height - 1.0,
            "globe_center", "globe ellipse (plus jitter) must lie inside the image");
}

Point2 nerve_direction(double angle_deg) {
    const double a = angle_deg * std::numbers::pi / 180.0;
    return {std::sin(a), std::cos(a)};
}

Point2 posterior_pole(const PhantomSpec& spec) {
    const Point2 u = nerve_direction(spec.nerve_angle_deg);
    const double ex = u.x / spec.globe_radii.x;
    const double ey = u.y / spec.globe_radii.y;
    const double tau = 1.0 / std::sqrt(ex * ex + ey * ey);
    return spec.globe_center + tau * u;
}

PixelOffset frame_jitter(const PhantomSpec& spec, int frame_index) {
    if (spec.jitter_px == 0) return {0, 0};
    std::mt19937_64 rng(stream_seed(spec.seed, static_cast<std::uint64_t>(frame_index), 2));
    std::uniform_int_distribution<int> dist(-spec.jitter_px, spec.jitter_px);
    const int r2 = spec.jitter_px * spec.jitter_px;
    for (;;) {
        const int dx = dist(rng), dy = dist(rng);
        if (dx * dx + dy * dy <= r2) return {dx, dy};
    }
}

PhantomFrame render_phantom_frame(const PhantomSpec& spec, int frame_index) {
    spec.validate();
    if (frame_index < 0) throw std::invalid_argument("frame_index must be >= 0");

    PhantomFrame out;
    out.jitter = frame_jitter(spec, frame_index);
    out.frame = Frame(spec.image_width, spec.image_height, spec.pixels_per_mm);

    const Point2 u = nerve_direction(spec.nerve_angle_deg);
    const Point2 perp{u.y, -u.x};
    const Point2 pole = posterior_pole(spec);
    const double ppm = spec.pixels_per_mm;
    const double half = 0.5 * spec.sheath_width_mm * ppm;
    const double outer = half + spec.sheath_wall_thickness_mm * ppm;
    const double length = spec.nerve_length_mm * ppm;

    std::mt19937_64 rng(stream_seed(spec.seed, static_cast<std::uint64_t>(frame_index), 1));
    std::normal_distribution<double> gauss(0.0, 1.0);

    Extent globe_ext, nerve_ext;
    for (int y = 0; y < spec.image_height; ++y) {
        for (int x = 0; x < spec.image_width; ++x) {
            const Point2 q{double(x - out.jitter[0]), double(y - out.jitter[1])};
            const double ex = (q.x - spec.globe_center.x) / spec.globe_radii.x;
            const double ey = (q.y - spec.globe_center.y) / spec.globe_radii.y;
            Region region = Region::background;
            if (ex * ex + ey * ey <= 1.0) {
                region = Region::globe;
            } else {
                const Point2 d = q - pole;
                const double t = dot(d, u);
                const double s = dot(d, perp);
                if (t >= 0.0 && t < length) {
                    if (s >= -half && s < half) region = Region::interior;
                    else if (s >= -outer && s < outer) region = Region::wall;
                }
            }

            double v = spec.background_intensity;
            switch (region) {
                case Region::globe:
                    v = spec.wall_intensity;
                    globe_ext.add(x, y);
                    break;
                case Region::wall:
                    v = spec.wall_intensity;
                    nerve_ext.add(x, y);
                    break;
                case Region::interior:
                    v = spec.interior_intensity;
                    nerve_ext.add(x, y);
                    break;
                case Region::background:
                    break;
            }
            if (spec.speckle_sigma > 0.0) v *= std::exp(spec.speckle_sigma * gauss(rng));
            out.frame.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }

    out.truth.globe_bbox = globe_ext.box(ObjectClass::globe);
    if (!nerve_ext.empty()) out.truth.nerve_bbox = nerve_ext.box(ObjectClass::nerve);
    out.truth.nerve_angle_deg = spec.nerve_angle_deg;
    out.truth.sheath_width_mm = spec.sheath_width_mm;
    out.truth.label = label_for_width(spec.sheath_width_mm);
    return out;
}

PhantomVideo generate_video(const PhantomSpec& spec, int n_frames) {
    spec.validate();
    if (n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");
    PhantomVideo video;
    PhantomSpec still = spec;
    still.jitter_px = 0;
    still.speckle_sigma = 0.0;
    video.truth = render_phantom_frame(still, 0).truth;
    video.frames.reserve(static_cast<std::size_t>(n_frames));
    for (int i = 0; i < n_frames; ++i) {
        PhantomFrame pf = render_phantom_frame(spec, i);
        video.frames.push_back(std::move(pf.frame));
        video.jitter.push_back(pf.jitter);
    }
    return video;
}

// --- manifest ---------------------------------------------------------------

void DatasetManifest::validate() const {
    std::set<std::string> ids;
    for (const auto& v : videos) {
        if (v.video_id.empty()) throw std::invalid_argument("manifest video with empty video_id");
        if (!ids.insert(v.video_id).second) throw std::invalid_argument("duplicate video_id '" + v.video_id + "'");
        if (v.frame_paths.empty()) throw std::invalid_argument("video '" + v.video_id + "' has no frames");
        if (!(v.pixels_per_mm > 0.0)) {
            throw std::invalid_argument("video '" + v.video_id + "' has pixels_per_mm <= 0");
        }
    }
}

const VideoEntry& DatasetManifest::find(const std::string& video_id) const {
    for (const auto& v : videos)
        if (v.video_id == video_id) return v;
    throw std::invalid_argument("no video '" + video_id + "' in manifest");
}

std::filesystem::path DatasetManifest::frame_path(const VideoEntry& v, int index) const {
    if (index < 0 || index >= static_cast<int>(v.frame_paths.size())) {
        throw std::out_of_range("frame index " + std::to_string(index) + " out of range for video '" +
                                v.video_id + "'");
    }
    return base_dir / v.frame_paths[static_cast<std::size_t>(index)];
}

Frame DatasetManifest::load_frame(const VideoEntry& v, int index) const {
    return read_pgm_frame(frame_path(v, index), v.pixels_per_mm);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path, std::string("invalid JSON: ") + e.what());
    }
    DatasetManifest m;
    m.base_dir = path.parent_path();
    try {
        for (const auto& jv : j.at("videos")) {
            VideoEntry v;
            v.video_id = jv.at("video_id").get<std::string>();
            v.patient_id = jv.at("patient_id").get<std::string>();
            v.frame_paths = jv.at("frame_paths").get<std::vector<std::string>>();
            v.pixels_per_mm = jv.at("pixels_per_mm").get<double>();
            v.label = label_from_string(jv.at("label").get<std::string>());
            if (jv.contains("ground_truth") && !jv.at("ground_truth").is_null()) {
                v.ground_truth = jv.at("ground_truth").get<GroundTruth>();
            }
            m.videos.push_back(std::move(v));
        }
    } catch (const std::exception& e) {
        throw IoError(path, std::string("malformed manifest: ") + e.what());
    }
    m.validate();
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    nlohmann::json videos = nlohmann::json::array();
    for (const auto& v : manifest.videos) {
        nlohmann::json jv{{"video_id", v.video_id},
                          {"patient_id", v.patient_id},
                          {"frame_paths", v.frame_paths},
                          {"pixels_per_mm", v.pixels_per_mm},
                          {"label", to_string(v.label)}};
        jv["ground_truth"] = v.ground_truth ? nlohmann::json(*v.ground_truth) : nlohmann::json(nullptr);
        videos.push_back(std::move(jv));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << nlohmann::json{{"videos", videos}}.dump(2) << '\n';
    if (!out) throw IoError(path, "write failed");
}

DatasetManifest build_dataset(const std::vector<PhantomJob>& jobs, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError(out_dir, "cannot create directory: " + ec.message());

    DatasetManifest m;
    m.base_dir = out_dir;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const PhantomJob& job = jobs[i];
        if (job.patient_id.empty()) throw std::invalid_argument("phantom job " + std::to_string(i) + " has no patient_id");
        std::string id = job.video_id;
        if (id.empty()) {
            std::ostringstream os;
            os << "video_" << std::setw(3) << std::setfill('0') << i;
            id = os.str();
        }
        const PhantomVideo video = generate_video(job.spec, job.n_frames);

        const std::filesystem::path dir = out_dir / id;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError(dir, "cannot create directory: " + ec.message());

        VideoEntry entry;
        entry.video_id = id;
        entry.patient_id = job.patient_id;
        entry.pixels_per_mm = job.spec.pixels_per_mm;
        entry.label = video.truth.label;
        entry.ground_truth = video.truth;
        for (std::size_t f = 0; f < video.frames.size(); ++f) {
            std::ostringstream name;
            name << "f" << std::setw(4) << std::setfill('0') << f << ".pgm";
            write_pgm(dir / name.str(), video.frames[f]);
            entry.frame_paths.push_back(id + "/" + name.str());
        }
        m.videos.push_back(std::move(entry));
    }
    m.validate();
    save_manifest(m, out_dir / kManifestFileName);
    return m;
}

}  // namespace onsd
