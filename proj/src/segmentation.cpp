#include "onsd/segmentation.hpp"

#include <algorithm>
#include <stdexcept>

#include "onsd/pnm.hpp"

namespace onsd {

CropMask segment_classical(const OrientedCrop& crop, const SegmenterParams& params) {
    constexpr int rows = OrientedCrop::kRows;
    constexpr int cols = OrientedCrop::kCols;
    constexpr int center = OrientedCrop::kCenterCol;
    CropMask mask;
    std::vector<double> profile(cols);
    for (int r = 0; r < rows; ++r) {
        const int r0 = std::max(0, r - params.smoothing_half_rows);
        const int r1 = std::min(rows - 1, r + params.smoothing_half_rows);
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int rr = r0; rr <= r1; ++rr) acc += crop.at(rr, c);
            profile[c] = acc / (r1 - r0 + 1);
        }
        // grad[c] = profile[c + 1] - profile[c]; left edge: most negative step
        // ending at or before the center, right edge: most positive after it.
        int left = -1;
        double left_step = 0.0;
        for (int c = 0; c < center; ++c) {
            const double g = profile[c + 1] - profile[c];
            if (g < left_step) {
                left_step = g;
                left = c;
            }
        }
        int right = -1;
        double right_step = 0.0;
        for (int c = center; c + 1 < cols; ++c) {
            const double g = profile[c + 1] - profile[c];
            if (g > right_step) {
                right_step = g;
                right = c;
            }
        }
        if (left < 0 || right < 0) continue;
        if (-left_step < params.min_edge_contrast || right_step < params.min_edge_contrast) continue;
        for (int c = left + 1; c <= right; ++c) mask.set(r, c, true);
    }
    return mask;
}

CropMask load_mask(const std::filesystem::path& path) {
    const Raster8 r = read_pnm(path);
    if (r.width != CropMask::kCols || r.height != CropMask::kRows) {
        throw IoError(path, "mask must be " + std::to_string(CropMask::kCols) + "x" +
                                std::to_string(CropMask::kRows) + " (width x height), got " +
                                std::to_string(r.width) + "x" + std::to_string(r.height));
    }
    CropMask m;
    for (std::size_t i = 0; i < r.values.size(); ++i) m.bits[i] = r.values[i] != 0;
    return m;
}

void save_mask(const std::filesystem::path& path, const CropMask& mask) {
    std::vector<std::uint8_t> bytes(mask.bits.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits[i] ? 255 : 0;
    write_pgm(path, CropMask::kCols, CropMask::kRows, bytes);
}

WidthMeasurement width_from_mask(const CropMask& mask, double pixels_per_mm) {
    if (!(pixels_per_mm > 0.0)) throw std::invalid_argument("pixels_per_mm must be > 0");
    WidthMeasurement m;
    std::vector<int> runs;
    for (int r = 0; r < CropMask::kRows; ++r) {
        int best = 0, cur = 0;
        for (int c = 0; c < CropMask::kCols; ++c) {
            cur = mask.at(r, c) ? cur + 1 : 0;
            best = std::max(best, cur);
        }
        if (best > 0) {
            m.per_row_px[static_cast<std::size_t>(r)] = best;
            runs.push_back(best);
        }
    }
    if (static_cast<int>(runs.size()) < kMinValidRows) return m;
    std::sort(runs.begin(), runs.end());
    const std::size_t n = runs.size();
    const double median = n % 2 == 1 ? runs[n / 2] : 0.5 * (runs[n / 2 - 1] + runs[n / 2]);
    m.width_mm = median / pixels_per_mm;
    m.valid = true;
    return m;
}

}  // namespace onsd
