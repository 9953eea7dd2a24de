#include <gtest/gtest.h>

#include <fstream>

#include "hvseg/error.hpp"
#include "hvseg/io.hpp"
#include "hvseg/labeling.hpp"
#include "hvseg/slide.hpp"
#include "hvseg/synthetic.hpp"
#include "support/oracles.hpp"

using namespace hvseg;

namespace {

Image gradient(int w, int h) {
    Image img(w, h, 3, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto* p = img.at(x, y);
            p[0] = static_cast<std::uint8_t>(x * 3);
            p[1] = static_cast<std::uint8_t>(y * 5);
            p[2] = static_cast<std::uint8_t>((x + y) & 0xff);
        }
    return img;
}

bool same_pixel(const Image& a, int ax, int ay, const Image& b, int bx, int by) {
    return std::equal(a.at(ax, ay), a.at(ax, ay) + 3, b.at(bx, by));
}

}  // namespace

TEST(RasterSlide, ReadRegionPadsWithBackground) {
    const Image img = gradient(40, 30);
    SlideMeta m;
    RasterSlide s(img, m);
    EXPECT_EQ(s.meta().width_px, 40);
    const Image r = s.read_region(-5, 25, 20, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 20; ++x) {
            const int sx = x - 5, sy = y + 25;
            if (sx >= 0 && sy < 30) {
                ASSERT_TRUE(same_pixel(r, x, y, img, sx, sy));
            } else {
                ASSERT_EQ(r.at(x, y)[0], 255);
                ASSERT_EQ(r.at(x, y)[2], 255);
            }
        }
    m.modality = Modality::fluorescence;
    RasterSlide dark(img, m);
    EXPECT_EQ(dark.read_region(100, 100, 2, 2).at(1, 1)[1], 0);
}

TEST(OpenSlide, PngWithSidecar) {
    const auto dir = oracle::temp_dir("png-sidecar");
    io::write_image(dir / "a.png", gradient(64, 48));
    {
        const auto s = open_slide(dir / "a.png");
        EXPECT_EQ(s->meta().width_px, 64);
        EXPECT_FALSE(s->meta().mpp.has_value());
        EXPECT_EQ(s->truth(), nullptr);
    }
    LabelMap nuclei(64, 48, 0);
    oracle::paint_rect(nuclei, 10, 10, 5, 5, 3);
    io::write_label_map(dir / "n.png", nuclei);
    std::ofstream(sidecar_path(dir / "a.png"))
        << R"({"mpp": 0.25, "modality": "fluorescence", "truth": {"nuclei": "n.png"}})";
    const auto s = open_slide(dir / "a.png");
    EXPECT_EQ(s->meta().mpp, 0.25);
    EXPECT_EQ(s->meta().modality, Modality::fluorescence);
    ASSERT_NE(s->truth(), nullptr);
    EXPECT_EQ(s->truth()->truth_region(TruthKind::nuclei, 0, 0, 64, 48), nuclei);
    EXPECT_EQ(s->truth()->truth_region(TruthKind::nuclei, 8, 8, 4, 4)(2, 2), 3u);
    EXPECT_THROW(s->truth()->truth_region(TruthKind::cells, 0, 0, 4, 4), Error);
}

TEST(OpenSlide, Errors) {
    const auto dir = oracle::temp_dir("open-errors");
    try {
        open_slide(dir / "missing.png");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::not_found);
    }
    std::ofstream(dir / "x.xyz") << "?";
    try {
        open_slide(dir / "x.xyz");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unsupported);
    }
    io::write_image(dir / "b.png", gradient(8, 8));
    std::ofstream(sidecar_path(dir / "b.png")) << "{not json";
    EXPECT_THROW(open_slide(dir / "b.png"), Error);
}

TEST(OpenSlide, Tiff) {
    const auto dir = oracle::temp_dir("tiff");
    const Image img = gradient(70, 50);
    io::write_image(dir / "a.tif", img);
    const auto s = open_slide(dir / "a.tif");
    EXPECT_EQ(s->meta().width_px, 70);
    EXPECT_EQ(s->meta().height_px, 50);
    const Image r = s->read_region(60, 40, 20, 20);
    EXPECT_TRUE(same_pixel(r, 0, 0, img, 60, 40));
    EXPECT_TRUE(same_pixel(r, 9, 9, img, 69, 49));
    EXPECT_EQ(r.at(15, 15)[0], 255);
    EXPECT_EQ(s->read_region(0, 0, 70, 50).pixels, img.pixels);
}

TEST(OpenSlide, SyntheticSpecRoundTrip) {
    const auto dir = oracle::temp_dir("synth");
    synthetic::SlideSpec spec;
    spec.width = 300;
    spec.height = 200;
    spec.seed = 42;
    spec.mpp.reset();
    spec.tissue = synthetic::TissueLayout::disk;
    write_synthetic_spec(dir / "s.synth.json", spec);
    const auto back = read_synthetic_spec(dir / "s.synth.json");
    EXPECT_EQ(back.width, 300);
    EXPECT_EQ(back.seed, 42u);
    EXPECT_FALSE(back.mpp.has_value());
    EXPECT_EQ(back.tissue, synthetic::TissueLayout::disk);
    const auto s = open_slide(dir / "s.synth.json");
    ASSERT_NE(s->truth(), nullptr);
    const SyntheticSlide direct(spec);
    EXPECT_EQ(s->read_region(10, 20, 50, 40).pixels, direct.read_region(10, 20, 50, 40).pixels);
    std::ofstream(dir / "bad.synth.json") << R"({"tissue": "striped"})";
    EXPECT_THROW(open_slide(dir / "bad.synth.json"), Error);
}

TEST(SyntheticSlide, RegionsAreConsistent) {
    synthetic::SlideSpec spec;
    spec.width = spec.height = 400;
    const SyntheticSlide s(spec);
    const auto whole = s.truth_region(TruthKind::cells, 0, 0, 400, 400);
    EXPECT_EQ(s.truth_region(TruthKind::cells, 123, 77, 90, 60), whole.crop(123, 77, 90, 60, 0));
    const auto img = s.read_region(0, 0, 400, 400);
    const auto part = s.read_region(200, 150, 30, 30);
    EXPECT_TRUE(same_pixel(part, 5, 7, img, 205, 157));
    EXPECT_GT(oracle::ids_of(whole).size(), 50u);
}

TEST(RegionSlide, ViewsSubrectangle) {
    const Image img = gradient(60, 60);
    RasterSlide base(img, SlideMeta{});
    RegionSlide r(base, {10, 20, 30, 25});
    EXPECT_EQ(r.meta().width_px, 30);
    EXPECT_EQ(r.meta().height_px, 25);
    const Image px = r.read_region(0, 0, 35, 25);
    EXPECT_TRUE(same_pixel(px, 0, 0, img, 10, 20));
    EXPECT_TRUE(same_pixel(px, 29, 24, img, 39, 44));
    EXPECT_EQ(px.at(32, 3)[0], 255);  // past the region, inside the base
    EXPECT_EQ(r.truth(), nullptr);
    EXPECT_THROW(RegionSlide(base, {50, 50, 20, 20}), Error);

    LabelMap l(60, 60, 0);
    oracle::paint_rect(l, 38, 40, 10, 10, 2);
    FileSlide fs(std::make_unique<RasterSlide>(img, SlideMeta{}), SlideMeta{60, 60}, std::make_unique<LabelTruth>(l, l));
    RegionSlide rt(fs, {10, 20, 30, 25});
    ASSERT_NE(rt.truth(), nullptr);
    const auto t = rt.truth_region(TruthKind::nuclei, 0, 0, 40, 30);
    EXPECT_EQ(t(28, 20), 2u);
    EXPECT_EQ(t(30, 20), 0u);  // clipped at the region edge
    EXPECT_EQ(t(28, 25), 0u);
}

TEST(DemoSlide, WritesSlideTruthAndSidecar) {
    const auto dir = oracle::temp_dir("demo");
    const auto png = write_demo_slide(dir, 256, 3);
    const auto s = open_slide(png);
    EXPECT_EQ(s->meta().width_px, 256);
    EXPECT_EQ(s->meta().mpp, 0.5);
    ASSERT_NE(s->truth(), nullptr);
    synthetic::SlideSpec spec;
    spec.width = spec.height = 256;
    spec.seed = 3;
    const SyntheticSlide ref(spec);
    EXPECT_EQ(s->truth()->truth_region(TruthKind::nuclei, 0, 0, 256, 256),
              ref.truth_region(TruthKind::nuclei, 0, 0, 256, 256));
    EXPECT_EQ(s->read_region(0, 0, 256, 256).pixels, ref.read_region(0, 0, 256, 256).pixels);
    // Deterministic bytes.
    const auto first = io::file_content_hash(png);
    write_demo_slide(dir, 256, 3);
    EXPECT_EQ(io::file_content_hash(png), first);
}

TEST(EllipseMap, TouchingIsCappedAndShapesStayWhole) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto m = synthetic::random_ellipse_map(seed, {});
        EXPECT_LE(m.touching_fraction, 0.3) << seed;
        EXPECT_EQ(m.touching_fraction, synthetic::touching_fraction(m.nuclei));
        for (std::size_t k = 0; k < m.ellipses.size(); ++k) {
            const auto id = static_cast<std::uint32_t>(k + 1);
            Mask own(m.nuclei.width(), m.nuclei.height(), 0);
            std::size_t inside = 0, kept = 0;
            for (int y = 0; y < own.height(); ++y)
                for (int x = 0; x < own.width(); ++x) {
                    own(x, y) = m.nuclei(x, y) == id;
                    if (m.ellipses[k].normalized_distance(x, y) <= 1.0) ++inside, kept += own(x, y);
                }
            // A partner may claim a thin seam, never a chunk.
            EXPECT_GE(static_cast<double>(kept), 0.95 * static_cast<double>(inside)) << seed << " " << id;
            EXPECT_EQ(unique_ids(connected_components(own)).size(), 1u) << seed << " " << id;
        }
    }
}
