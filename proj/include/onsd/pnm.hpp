#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "onsd/image.hpp"

namespace onsd {

/// File-system failure; the message always carries the offending path.
class IoError : public std::runtime_error {
public:
    IoError(const std::filesystem::path& path, const std::string& what)
        : std::runtime_error(path.string() + ": " + what), path_(path) {}
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Raw 8-bit raster as read from a PGM (P5) or PBM (P4) file. PBM bits are
/// expanded so that a set (black) bit becomes 255.
struct Raster8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;
};

Raster8 read_pnm(const std::filesystem::path& path);

/// Reads an 8-bit PGM into a Frame with the given calibration.
Frame read_pgm_frame(const std::filesystem::path& path, double pixels_per_mm);

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& values);
void write_pgm(const std::filesystem::path& path, const Frame& frame);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

}  // namespace onsd
