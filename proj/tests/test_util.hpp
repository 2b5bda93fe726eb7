#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <unistd.h>

#include "onsd/image.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "onsd") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Nearest-neighbour sample with 0 outside; used by oracles that rotate frames.
inline float nearest(const onsd::Frame& f, double x, double y) {
    const long xi = std::lround(x), yi = std::lround(y);
    if (xi < 0 || yi < 0 || xi >= f.width || yi >= f.height) return 0.0f;
    return f.at(static_cast<int>(xi), static_cast<int>(yi));
}

/// Length of the longest run of pixels equal to `value` along row y.
inline int longest_run_in_row(const onsd::Frame& f, int y, float value) {
    int best = 0, cur = 0;
    for (int x = 0; x < f.width; ++x) {
        cur = std::abs(f.at(x, y) - value) < 1e-6f ? cur + 1 : 0;
        best = std::max(best, cur);
    }
    return best;
}

}  // namespace testutil
