#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "onsd/phantom.hpp"
#include "onsd/pnm.hpp"
#include "onsd/segmentation.hpp"
#include "test_util.hpp"

using namespace onsd;

namespace {

OrientedCrop phantom_crop(const PhantomSpec& s, int frame = 0) {
    const PhantomFrame pf = render_phantom_frame(s, frame);
    const auto c = build_construction(pf.truth.globe_bbox, *pf.truth.nerve_bbox, s.pixels_per_mm);
    return extract_oriented_crop(pf.frame, c);
}

CropMask runs_mask(const std::vector<std::pair<int, int>>& rows) {  // (start, length) per row
    CropMask m;
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = rows[r].first; c < rows[r].first + rows[r].second; ++c) m.set(static_cast<int>(r), c, true);
    return m;
}

}  // namespace

TEST(Segmenter, NoiseFreePhantomRowsMatchWidth) {
    PhantomSpec s;
    s.sheath_width_mm = 6.0;
    const WidthMeasurement w = width_from_mask(segment_classical(phantom_crop(s)), s.pixels_per_mm);
    ASSERT_TRUE(w.valid);
    for (const auto& r : w.per_row_px) {
        ASSERT_TRUE(r);
        EXPECT_NEAR(*r, 60, 1);
    }
}

TEST(Segmenter, ConstantCropGivesEmptyMask) {
    OrientedCrop crop;
    std::fill(crop.pixels.begin(), crop.pixels.end(), 0.4f);
    EXPECT_EQ(segment_classical(crop), CropMask{});
}

TEST(Segmenter, NoiseFreeAccuracyAcrossWidthsAndAngles) {
    for (double w : {3.0, 3.7, 4.5, 5.3, 6.1, 7.0}) {
        for (double a : {-25.0, -10.0, 0.0, 12.0, 25.0}) {
            PhantomSpec s;
            s.sheath_width_mm = w;
            s.nerve_angle_deg = a;
            const WidthMeasurement m = width_from_mask(segment_classical(phantom_crop(s)), s.pixels_per_mm);
            ASSERT_TRUE(m.valid) << w << " " << a;
            EXPECT_NEAR(m.width_mm, w, 0.1 + 1e-9) << "width " << w << " angle " << a;
        }
    }
}

TEST(Segmenter, SpeckledCropsMonteCarlo) {
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        PhantomSpec s;
        s.sheath_width_mm = 5.6;
        s.speckle_sigma = 0.15;
        s.seed = seed;
        const WidthMeasurement m = width_from_mask(segment_classical(phantom_crop(s)), s.pixels_per_mm);
        const int rows = static_cast<int>(std::count_if(m.per_row_px.begin(), m.per_row_px.end(),
                                                        [](const auto& r) { return r.has_value(); }));
        if (rows < 12 || std::abs(m.width_mm * s.pixels_per_mm - 56.0) > 3.0) ++failures;
    }
    EXPECT_EQ(failures, 0);
}

TEST(MaskFiles, LoadAllOnes) {
    testutil::TempDir dir("mask");
    write_pgm(dir / "ones.pgm", CropMask::kCols, CropMask::kRows,
              std::vector<std::uint8_t>(CropMask::kCols * CropMask::kRows, 1));
    const CropMask m = load_mask(dir / "ones.pgm");
    for (auto b : m.bits) EXPECT_TRUE(b);
}

TEST(MaskFiles, WrongDimensionsNamed) {
    testutil::TempDir dir("mask");
    write_pgm(dir / "tall.pgm", 128, 32, std::vector<std::uint8_t>(128 * 32, 0));
    try {
        load_mask(dir / "tall.pgm");
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("128x32"), std::string::npos) << e.what();
    }
    EXPECT_THROW(load_mask(dir / "missing.pgm"), IoError);
}

TEST(MaskFiles, RoundTripAndBitmap) {
    testutil::TempDir dir("mask");
    CropMask m;
    std::mt19937 rng(3);
    for (auto& b : m.bits) b = rng() % 3 == 0;
    save_mask(dir / "m.pgm", m);
    EXPECT_EQ(load_mask(dir / "m.pgm"), m);

    // Same mask as a P4 bitmap (set bit = nerve).
    {
        std::ofstream f(dir / "m.pbm", std::ios::binary);
        f << "P4\n# bitmap\n128 16\n";
        for (int r = 0; r < 16; ++r)
            for (int byte = 0; byte < 16; ++byte) {
                unsigned char v = 0;
                for (int bit = 0; bit < 8; ++bit)
                    if (m.at(r, byte * 8 + bit)) v |= static_cast<unsigned char>(0x80 >> bit);
                f.put(static_cast<char>(v));
            }
    }
    EXPECT_EQ(load_mask(dir / "m.pbm"), m);
}

TEST(Width, CenteredRunsAndEvenMedian) {
    std::vector<std::pair<int, int>> rows(16, {39, 50});
    WidthMeasurement w = width_from_mask(runs_mask(rows), 10.0);
    EXPECT_TRUE(w.valid);
    EXPECT_DOUBLE_EQ(w.width_mm, 5.0);

    for (int r = 0; r < 16; ++r) rows[static_cast<std::size_t>(r)] = r < 8 ? std::pair{40, 48} : std::pair{38, 52};
    w = width_from_mask(runs_mask(rows), 10.0);
    EXPECT_DOUBLE_EQ(w.width_mm, 5.0);

    w = width_from_mask(CropMask{}, 10.0);
    EXPECT_FALSE(w.valid);
    EXPECT_EQ(w.width_mm, 0.0);
    EXPECT_THROW(width_from_mask(CropMask{}, 0.0), std::invalid_argument);
}

TEST(Width, QuorumOfEightRows) {
    std::vector<std::pair<int, int>> rows(16, {0, 0});
    for (int r = 0; r < 7; ++r) rows[static_cast<std::size_t>(r)] = {10, 30};
    EXPECT_FALSE(width_from_mask(runs_mask(rows), 10.0).valid);
    rows[7] = {10, 30};
    EXPECT_TRUE(width_from_mask(runs_mask(rows), 10.0).valid);
}

TEST(Width, LongestRunWins) {
    CropMask m;
    for (int r = 0; r < 16; ++r) {
        for (int c = 10; c < 20; ++c) m.set(r, c, true);
        for (int c = 30; c < 75; ++c) m.set(r, c, true);
    }
    EXPECT_DOUBLE_EQ(width_from_mask(m, 10.0).width_mm, 4.5);
}

TEST(Width, PermutationTranslationAndDilation) {
    std::mt19937 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<int, int>> rows(16);
        for (auto& r : rows) {
            const int len = static_cast<int>(rng() % 60);
            r = {20 + static_cast<int>(rng() % 40), len};
        }
        const double ppm = 1.0 + (rng() % 200) / 10.0;
        const WidthMeasurement base = width_from_mask(runs_mask(rows), ppm);

        auto permuted = rows;
        std::shuffle(permuted.begin(), permuted.end(), rng);
        const WidthMeasurement p = width_from_mask(runs_mask(permuted), ppm);
        ASSERT_EQ(p.valid, base.valid);
        ASSERT_EQ(p.width_mm, base.width_mm);

        auto shifted = rows;
        for (auto& r : shifted) r.first += static_cast<int>(rng() % 10) - 5;
        ASSERT_EQ(width_from_mask(runs_mask(shifted), ppm).width_mm, base.width_mm);

        // Dilate nonempty runs by k on each side.
        const int k = 1 + static_cast<int>(rng() % 5);
        auto dilated = rows;
        for (auto& r : dilated)
            if (r.second > 0) r = {r.first - k, r.second + 2 * k};
        const WidthMeasurement d = width_from_mask(runs_mask(dilated), ppm);
        if (base.valid) ASSERT_NEAR(d.width_mm - base.width_mm, 2.0 * k / ppm, 1e-12);
    }
}
