#include "onsd/detection.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "onsd/pnm.hpp"

namespace onsd {
namespace {

using Mask = std::vector<std::uint8_t>;

// Summed-area table with a zero border row/column.
std::vector<int> integral(const Mask& m, int w, int h) {
    std::vector<int> s(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    for (int y = 0; y < h; ++y) {
        int row = 0;
        for (int x = 0; x < w; ++x) {
            row += m[static_cast<std::size_t>(y) * w + x];
            s[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] = s[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    return s;
}

int window_sum(const std::vector<int>& s, int w, int x0, int y0, int x1, int y1) {
    // inclusive pixel window, already clamped
    const int stride = w + 1;
    return s[(y1 + 1) * stride + x1 + 1] - s[y0 * stride + x1 + 1] - s[(y1 + 1) * stride + x0] + s[y0 * stride + x0];
}

// Square structuring element of side 2r+1. Pixels outside the image count
// as background.
Mask erode(const Mask& m, int w, int h, int r) {
    const auto s = integral(m, w, h);
    Mask out(m.size(), 0);
    const int full = (2 * r + 1) * (2 * r + 1);
    for (int y = r; y < h - r; ++y)
        for (int x = r; x < w - r; ++x)
            out[static_cast<std::size_t>(y) * w + x] = window_sum(s, w, x - r, y - r, x + r, y + r) == full;
    return out;
}

Mask dilate(const Mask& m, int w, int h, int r) {
    const auto s = integral(m, w, h);
    Mask out(m.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
            const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
            out[static_cast<std::size_t>(y) * w + x] = window_sum(s, w, x0, y0, x1, y1) > 0;
        }
    return out;
}

struct Component {
    int area = 0;
    int x_min = std::numeric_limits<int>::max();
    int y_min = std::numeric_limits<int>::max();
    int x_max = -1;  // inclusive
    int y_max = -1;
    double sum_x = 0.0;
    double sum_y = 0.0;

    [[nodiscard]] Point2 centroid() const { return {sum_x / area, sum_y / area}; }
};

// 8-connected labelling; `labels` receives 1-based component ids.
std::vector<Component> label_components(const Mask& m, int w, int h, std::vector<int>& labels) {
    labels.assign(m.size(), 0);
    std::vector<Component> comps;
    std::vector<int> stack;
    for (int start = 0; start < w * h; ++start) {
        if (!m[start] || labels[start]) continue;
        comps.emplace_back();
        Component& c = comps.back();
        const int id = static_cast<int>(comps.size());
        labels[start] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            const int px = p % w, py = p / w;
            ++c.area;
            c.sum_x += px;
            c.sum_y += py;
            c.x_min = std::min(c.x_min, px);
            c.x_max = std::max(c.x_max, px);
            c.y_min = std::min(c.y_min, py);
            c.y_max = std::max(c.y_max, py);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = px + dx, ny = py + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const int q = ny * w + nx;
                    if (m[q] && !labels[q]) {
                        labels[q] = id;
                        stack.push_back(q);
                    }
                }
        }
    }
    return comps;
}

BBox box_of(const Component& c, ObjectClass cls) {
    return {static_cast<double>(c.x_min), static_cast<double>(c.y_min), static_cast<double>(c.x_max + 1),
            static_cast<double>(c.y_max + 1), cls, 1.0};
}

double box_gap(const BBox& a, const BBox& b) {
    const double dx = std::max({0.0, a.x_min - b.x_max, b.x_min - a.x_max});
    const double dy = std::max({0.0, a.y_min - b.y_max, b.y_min - a.y_max});
    return std::hypot(dx, dy);
}

double parse_unit(const std::string& tok, int line, const char* field) {
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
        throw DetectionFileError(line, std::string("malformed ") + field + " '" + tok + "'");
    }
    if (!(v >= 0.0 && v <= 1.0)) throw DetectionFileError(line, std::string("coordinate out of range (") + field + ")");
    return v;
}

}  // namespace

std::string to_string(ObjectClass c) { return c == ObjectClass::globe ? "globe" : "nerve"; }

ObjectClass object_class_from_string(const std::string& s) {
    if (s == "globe") return ObjectClass::globe;
    if (s == "nerve") return ObjectClass::nerve;
    throw std::invalid_argument("unknown object class '" + s + "'");
}

double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

void FrameDetections::offer(const BBox& box) {
    auto& slot = box.cls == ObjectClass::globe ? globe : nerve;
    if (!slot || box.confidence > slot->confidence) slot = box;
}

double otsu_threshold(const Frame& frame) {
    std::array<double, 256> hist{};
    for (float v : frame.pixels) {
        const int bin = std::clamp(static_cast<int>(v * 256.0f), 0, 255);
        hist[bin] += 1.0;
    }
    const double total = static_cast<double>(frame.pixels.size());
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += i * hist[i];

    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_bin = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += hist[t];
        sum0 += t * hist[t];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = t;
        }
    }
    return (best_bin + 1) / 256.0;
}

FrameDetections detect_classical(const Frame& frame, int frame_index, const ClassicalDetectorParams& params) {
    FrameDetections det;
    det.frame_index = frame_index;
    if (frame.empty()) return det;

    const auto [lo, hi] = std::minmax_element(frame.pixels.begin(), frame.pixels.end());
    if (*hi - *lo < params.min_dynamic_range) return det;

    const int w = frame.width, h = frame.height;
    const double ppm = frame.pixels_per_mm;
    const double thr = otsu_threshold(frame);
    Mask bright(frame.pixels.size());
    for (std::size_t i = 0; i < bright.size(); ++i) bright[i] = frame.pixels[i] >= thr;

    const int r = std::max(1, static_cast<int>(std::lround(params.opening_radius_mm * ppm)));
    const Mask opened = dilate(erode(bright, w, h, r), w, h, r);

    std::vector<int> labels;
    const auto blobs = label_components(opened, w, h, labels);
    const auto largest = std::max_element(blobs.begin(), blobs.end(),
                                          [](const Component& a, const Component& b) { return a.area < b.area; });
    const double min_globe_area = std::numbers::pi * std::pow(params.min_globe_radius_mm * ppm, 2);
    if (largest == blobs.end() || largest->area < min_globe_area) return det;
    det.globe = box_of(*largest, ObjectClass::globe);
    const double globe_cy = 0.5 * (det.globe->y_min + det.globe->y_max);

    // Thin bright structures removed by the opening, posterior of the globe.
    Mask residue(bright.size(), 0);
    for (int y = 0; y < h; ++y) {
        if (y <= globe_cy) continue;
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            residue[i] = bright[i] && !opened[i];
        }
    }
    const auto thin = label_components(residue, w, h, labels);
    std::vector<const Component*> walls;
    const double min_wall_area = params.min_wall_area_mm2 * ppm * ppm;
    for (const Component& c : thin) {
        if (c.area < min_wall_area) continue;
        if (box_gap(box_of(c, ObjectClass::nerve), *det.globe) > params.wall_adjacency_mm * ppm) continue;
        walls.push_back(&c);
    }
    if (walls.size() < 2) return det;
    std::partial_sort(walls.begin(), walls.begin() + 2, walls.end(),
                      [](const Component* a, const Component* b) { return a->area > b->area; });

    // The sheath interior between the walls must be dark.
    const Point2 mid = 0.5 * (walls[0]->centroid() + walls[1]->centroid());
    double acc = 0.0;
    int n = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const int x = static_cast<int>(std::lround(mid.x)) + dx, y = static_cast<int>(std::lround(mid.y)) + dy;
            if (!frame.contains(x, y)) continue;
            acc += frame.at(x, y);
            ++n;
        }
    if (n == 0 || acc / n >= thr) return det;

    BBox a = box_of(*walls[0], ObjectClass::nerve);
    const BBox b = box_of(*walls[1], ObjectClass::nerve);
    a.x_min = std::min(a.x_min, b.x_min);
    a.y_min = std::min(a.y_min, b.y_min);
    a.x_max = std::max(a.x_max, b.x_max);
    a.y_max = std::max(a.y_max, b.y_max);
    if (a.width() >= 2.0 && a.height() >= 2.0) det.nerve = a;
    return det;
}

std::vector<FrameDetections> parse_detections(std::istream& in, int frame_width, int frame_height) {
    if (frame_width <= 0 || frame_height <= 0) throw std::invalid_argument("frame size must be positive");
    std::map<int, FrameDetections> by_frame;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok.size() != 6 && tok.size() != 7) {
            throw DetectionFileError(line_no, "expected 6 or 7 fields, got " + std::to_string(tok.size()));
        }
        int frame_index = 0;
        try {
            std::size_t used = 0;
            frame_index = std::stoi(tok[0], &used);
            if (used != tok[0].size() || frame_index < 0) throw std::invalid_argument(tok[0]);
        } catch (const std::exception&) {
            throw DetectionFileError(line_no, "malformed frame index '" + tok[0] + "'");
        }
        ObjectClass cls{};
        try {
            cls = object_class_from_string(tok[1]);
        } catch (const std::invalid_argument& e) {
            throw DetectionFileError(line_no, e.what());
        }
        const double cx = parse_unit(tok[2], line_no, "cx");
        const double cy = parse_unit(tok[3], line_no, "cy");
        const double bw = parse_unit(tok[4], line_no, "w");
        const double bh = parse_unit(tok[5], line_no, "h");
        const double conf = tok.size() == 7 ? parse_unit(tok[6], line_no, "confidence") : 1.0;

        BBox box{std::clamp((cx - bw / 2) * frame_width, 0.0, double(frame_width)),
                 std::clamp((cy - bh / 2) * frame_height, 0.0, double(frame_height)),
                 std::clamp((cx + bw / 2) * frame_width, 0.0, double(frame_width)),
                 std::clamp((cy + bh / 2) * frame_height, 0.0, double(frame_height)),
                 cls,
                 conf};
        if (box.width() < 2.0 || box.height() < 2.0) {
            throw DetectionFileError(line_no, "box smaller than 2 px after clamping");
        }
        auto& fd = by_frame[frame_index];
        fd.frame_index = frame_index;
        fd.offer(box);
    }
    std::vector<FrameDetections> out;
    out.reserve(by_frame.size());
    for (auto& [_, fd] : by_frame) out.push_back(std::move(fd));
    return out;
}

std::vector<FrameDetections> parse_detection_file(const std::filesystem::path& path, int frame_width,
                                                  int frame_height) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open for reading");
    try {
        return parse_detections(in, frame_width, frame_height);
    } catch (const DetectionFileError& e) {
        throw DetectionFileError(e.line(), path.string() + ": " +
                                               std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
    }
}

void write_detections(std::ostream& out, std::span<const FrameDetections> detections, int frame_width,
                      int frame_height) {
    out << "# frame_index class cx cy w h confidence (normalized)\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& fd : detections) {
        for (const auto* box : {fd.globe ? &*fd.globe : nullptr, fd.nerve ? &*fd.nerve : nullptr}) {
            if (!box) continue;
            out << fd.frame_index << ' ' << to_string(box->cls) << ' '
                << (box->x_min + box->x_max) / 2.0 / frame_width << ' '
                << (box->y_min + box->y_max) / 2.0 / frame_height << ' ' << box->width() / frame_width << ' '
                << box->height() / frame_height << ' ' << box->confidence << '\n';
        }
    }
}

void write_detection_file(const std::filesystem::path& path, std::span<const FrameDetections> detections,
                          int frame_width, int frame_height) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    write_detections(out, detections, frame_width, frame_height);
    if (!out) throw IoError(path, "write failed");
}

std::vector<int> filter_fit_frames(std::span<const FrameDetections> detections) {
    std::vector<int> out;
    for (const auto& fd : detections)
        if (fd.fit()) out.push_back(fd.frame_index);
    return out;
}

}  // namespace onsd
