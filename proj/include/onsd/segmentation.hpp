#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "onsd/geometry.hpp"

namespace onsd {

/// Nerve-interior mask over an oriented crop.
struct CropMask {
    static constexpr int kRows = OrientedCrop::kRows;
    static constexpr int kCols = OrientedCrop::kCols;

    std::vector<std::uint8_t> bits = std::vector<std::uint8_t>(kRows * kCols, 0);

    [[nodiscard]] bool at(int r, int c) const { return bits[static_cast<std::size_t>(r) * kCols + c] != 0; }
    void set(int r, int c, bool v) { bits[static_cast<std::size_t>(r) * kCols + c] = v ? 1 : 0; }
    friend bool operator==(const CropMask&, const CropMask&) = default;
};

struct SegmenterParams {
    /// Minimum intensity step for a wall edge on the smoothed profile.
    double min_edge_contrast = 0.1;
    /// Rows averaged on each side of the current row before differencing.
    /// Rows run along the nerve, so this smooths noise without blurring edges.
    int smoothing_half_rows = 2;
};

/// Per row: the strongest bright-to-dark step left of the crop center and the
/// strongest dark-to-bright step right of it bound the interior run.
CropMask segment_classical(const OrientedCrop& crop, const SegmenterParams& params = {});

/// Reads a 16 x 128 P5 or P4 file; nonzero = nerve.
CropMask load_mask(const std::filesystem::path& path);
/// Writes a P5 file with 255 for nerve cells.
void save_mask(const std::filesystem::path& path, const CropMask& mask);

/// Minimum rows with a run for a width to count.
inline constexpr int kMinValidRows = 8;

struct WidthMeasurement {
    double width_mm = 0.0;
    std::array<std::optional<int>, CropMask::kRows> per_row_px{};
    bool valid = false;
};

/// Longest true run per row; width = median of nonempty rows / px-per-mm.
WidthMeasurement width_from_mask(const CropMask& mask, double pixels_per_mm);

}  // namespace onsd
