#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hvseg/geometry.hpp"
#include "hvseg/raster.hpp"
#include "hvseg/synthetic.hpp"

namespace hvseg {

enum class TruthKind { nuclei, cells };

// Hidden ground truth behind a slide, read region by region. Pixels outside
// the slide are background (0).
class TruthSource {
public:
    virtual ~TruthSource() = default;
    virtual LabelMap truth_region(TruthKind kind, int x, int y, int w, int h) const = 0;
};

struct Rect {
    int x = 0, y = 0, width = 0, height = 0;

    bool within(int slide_width, int slide_height) const noexcept {
        return width >= 1 && height >= 1 && x >= 0 && y >= 0 && x + width <= slide_width &&
               y + height <= slide_height;
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

class SlideReader {
public:
    virtual ~SlideReader() = default;
    virtual SlideMeta meta() const = 0;
    // RGB region; pixels outside the slide take the modality background
    // (white for brightfield, black for fluorescence). Safe to call from
    // several threads.
    virtual Image read_region(int x, int y, int w, int h) const = 0;
    virtual const TruthSource* truth() const { return nullptr; }
    // Number of stored resolution levels (1 for flat rasters).
    virtual int stored_levels() const { return 1; }
};

std::uint8_t background_value(Modality modality);

// Whole image decoded up front (PNG, JPEG, BMP, ...).
class RasterSlide : public SlideReader {
public:
    RasterSlide(Image image, SlideMeta meta);
    SlideMeta meta() const override { return meta_; }
    Image read_region(int x, int y, int w, int h) const override;
    const Image& image() const noexcept { return image_; }

private:
    Image image_;
    SlideMeta meta_;
};

// Strip- or tile-organized TIFF, decoded on demand from the first directory.
// Further directories are reported as pyramid levels.
class TiffSlide : public SlideReader {
public:
    explicit TiffSlide(const std::filesystem::path& path);
    ~TiffSlide() override;
    TiffSlide(const TiffSlide&) = delete;
    TiffSlide& operator=(const TiffSlide&) = delete;

    SlideMeta meta() const override { return meta_; }
    Image read_region(int x, int y, int w, int h) const override;
    int stored_levels() const override { return levels_; }
    void set_meta(const SlideMeta& meta) { meta_ = meta; }

private:
    void* tif_ = nullptr;
    SlideMeta meta_;
    int levels_ = 1;
    bool tiled_ = false;
    std::uint32_t block_w_ = 0, block_h_ = 0;
    mutable std::mutex mutex_;
};

class SyntheticSlide : public SlideReader, public TruthSource {
public:
    explicit SyntheticSlide(synthetic::SlideSpec spec) : slide_(std::move(spec)) {}
    SlideMeta meta() const override { return slide_.meta(); }
    Image read_region(int x, int y, int w, int h) const override { return slide_.render(x, y, w, h); }
    const TruthSource* truth() const override { return this; }
    LabelMap truth_region(TruthKind kind, int x, int y, int w, int h) const override;
    const synthetic::ProceduralSlide& procedural() const noexcept { return slide_; }

private:
    synthetic::ProceduralSlide slide_;
};

// Ground truth held as whole label maps.
class LabelTruth : public TruthSource {
public:
    LabelTruth(std::optional<LabelMap> nuclei, std::optional<LabelMap> cells)
        : nuclei_(std::move(nuclei)), cells_(std::move(cells)) {}
    LabelMap truth_region(TruthKind kind, int x, int y, int w, int h) const override;

private:
    std::optional<LabelMap> nuclei_;
    std::optional<LabelMap> cells_;
};

// A slide plus optional truth loaded from files.
class FileSlide : public SlideReader {
public:
    FileSlide(std::unique_ptr<SlideReader> pixels, SlideMeta meta, std::unique_ptr<LabelTruth> truth)
        : pixels_(std::move(pixels)), meta_(meta), truth_(std::move(truth)) {}
    SlideMeta meta() const override { return meta_; }
    Image read_region(int x, int y, int w, int h) const override {
        return pixels_->read_region(x, y, w, h);
    }
    const TruthSource* truth() const override { return truth_.get(); }
    int stored_levels() const override { return pixels_->stored_levels(); }

private:
    std::unique_ptr<SlideReader> pixels_;
    SlideMeta meta_;
    std::unique_ptr<LabelTruth> truth_;
};

// View of a rectangle of another slide, in the rectangle's own coordinates.
class RegionSlide : public SlideReader, public TruthSource {
public:
    RegionSlide(const SlideReader& base, Rect roi);
    SlideMeta meta() const override;
    Image read_region(int x, int y, int w, int h) const override;
    const TruthSource* truth() const override { return base_.truth() ? this : nullptr; }
    LabelMap truth_region(TruthKind kind, int x, int y, int w, int h) const override;
    const Rect& roi() const noexcept { return roi_; }

private:
    const SlideReader& base_;
    Rect roi_;
};

// Sidecar JSON next to a slide file (`<file>.meta.json`):
//   {"width": .., "height": .., "mpp": .., "modality": "brightfield",
//    "truth": {"nuclei": "<label file>", "cells": "<label file>"}}
// Every key is optional; present keys override embedded metadata. Truth
// paths are relative to the sidecar.
std::filesystem::path sidecar_path(const std::filesystem::path& slide);

// Opens PNG/JPEG/BMP, TIFF, or a procedural slide description (`*.synth.json`).
std::unique_ptr<SlideReader> open_slide(const std::filesystem::path& path);

synthetic::SlideSpec read_synthetic_spec(const std::filesystem::path& path);
void write_synthetic_spec(const std::filesystem::path& path, const synthetic::SlideSpec& spec);

// Deterministic demo: a rendered procedural slide saved as PNG with truth
// label files and sidecar. Returns the PNG path.
std::filesystem::path write_demo_slide(const std::filesystem::path& dir, int size = 1024,
                                       std::uint64_t seed = 7);

}  // namespace hvseg
