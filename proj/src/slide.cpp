#include "hvseg/slide.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include <tiffio.h>

#include "hvseg/error.hpp"
#include "hvseg/io.hpp"

namespace hvseg {

using nlohmann::json;

std::uint8_t background_value(Modality modality) {
    return modality == Modality::brightfield ? 255 : 0;
}

namespace {

Image to_rgb(const Image& in) {
    if (in.channels == 3) return in;
    Image out(in.width, in.height, 3);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            const auto* s = in.at(x, y);
            auto* d = out.at(x, y);
            if (in.channels < 3) {
                d[0] = d[1] = d[2] = s[0];
            } else {
                d[0] = s[0];
                d[1] = s[1];
                d[2] = s[2];
            }
        }
    }
    return out;
}

std::string lower_ext(const std::filesystem::path& p) {
    auto e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

RasterSlide::RasterSlide(Image image, SlideMeta meta) : image_(to_rgb(image)), meta_(meta) {
    meta_.width_px = image_.width;
    meta_.height_px = image_.height;
    meta_.validate();
}

Image RasterSlide::read_region(int x, int y, int w, int h) const {
    Image out(w, h, 3, background_value(meta_.modality));
    const int x0 = std::max(x, 0), x1 = std::min(x + w, image_.width);
    if (x1 <= x0) return out;
    for (int r = 0; r < h; ++r) {
        const int sy = y + r;
        if (sy < 0 || sy >= image_.height) continue;
        std::memcpy(out.at(x0 - x, r), image_.at(x0, sy), static_cast<std::size_t>(x1 - x0) * 3);
    }
    return out;
}

TiffSlide::TiffSlide(const std::filesystem::path& path) {
    TIFFSetWarningHandler(nullptr);
    TIFF* tif = TIFFOpen(path.string().c_str(), "r");
    if (!tif) throw Error(ErrorCode::unsupported, "cannot open TIFF " + path.string());
    tif_ = tif;
    std::uint32_t w = 0, h = 0;
    TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &w);
    TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &h);
    std::uint16_t spp = 1;
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &spp);
    meta_.width_px = static_cast<int>(w);
    meta_.height_px = static_cast<int>(h);
    meta_.channel_count = spp;
    float xres = 0;
    std::uint16_t unit = RESUNIT_NONE;
    if (TIFFGetField(tif, TIFFTAG_XRESOLUTION, &xres) && xres > 0) {
        TIFFGetFieldDefaulted(tif, TIFFTAG_RESOLUTIONUNIT, &unit);
        if (unit == RESUNIT_INCH) meta_.mpp = 25400.0 / xres;
        if (unit == RESUNIT_CENTIMETER) meta_.mpp = 10000.0 / xres;
    }
    tiled_ = TIFFIsTiled(tif);
    if (tiled_) {
        TIFFGetField(tif, TIFFTAG_TILEWIDTH, &block_w_);
        TIFFGetField(tif, TIFFTAG_TILELENGTH, &block_h_);
    } else {
        std::uint32_t rps = h;
        TIFFGetFieldDefaulted(tif, TIFFTAG_ROWSPERSTRIP, &rps);
        block_w_ = w;
        block_h_ = std::min(rps, h);
    }
    levels_ = TIFFNumberOfDirectories(tif);
    TIFFSetDirectory(tif, 0);
    meta_.validate();
}

TiffSlide::~TiffSlide() {
    if (tif_) TIFFClose(static_cast<TIFF*>(tif_));
}

Image TiffSlide::read_region(int x, int y, int w, int h) const {
    Image out(w, h, 3, background_value(meta_.modality));
    const int x0 = std::max(x, 0), y0 = std::max(y, 0);
    const int x1 = std::min(x + w, meta_.width_px), y1 = std::min(y + h, meta_.height_px);
    if (x1 <= x0 || y1 <= y0) return out;

    std::lock_guard lock(mutex_);
    auto* tif = static_cast<TIFF*>(tif_);
    const int bw = static_cast<int>(block_w_), bh = static_cast<int>(block_h_);
    std::vector<std::uint32_t> block(static_cast<std::size_t>(bw) * bh);
    for (int by = (y0 / bh) * bh; by < y1; by += bh) {
        for (int bx = (x0 / bw) * bw; bx < x1; bx += bw) {
            int ok = tiled_ ? TIFFReadRGBATile(tif, bx, by, block.data())
                            : TIFFReadRGBAStrip(tif, by, block.data());
            if (!ok) throw Error(ErrorCode::io, "TIFF decode failed");
            // RGBA blocks come bottom-up; strips at the image end are short.
            const int rows = tiled_ ? bh : std::min(bh, meta_.height_px - by);
            for (int r = std::max(by, y0); r < std::min(by + rows, y1); ++r) {
                const std::uint32_t* src = block.data() + static_cast<std::size_t>(rows - 1 - (r - by)) * bw;
                for (int c = std::max(bx, x0); c < std::min(bx + bw, x1); ++c) {
                    const std::uint32_t p = src[c - bx];
                    auto* d = out.at(c - x, r - y);
                    d[0] = static_cast<std::uint8_t>(TIFFGetR(p));
                    d[1] = static_cast<std::uint8_t>(TIFFGetG(p));
                    d[2] = static_cast<std::uint8_t>(TIFFGetB(p));
                }
            }
        }
    }
    return out;
}

LabelMap SyntheticSlide::truth_region(TruthKind kind, int x, int y, int w, int h) const {
    return kind == TruthKind::nuclei ? slide_.nuclei(x, y, w, h) : slide_.cells(x, y, w, h);
}

LabelMap LabelTruth::truth_region(TruthKind kind, int x, int y, int w, int h) const {
    const auto& src = kind == TruthKind::nuclei ? nuclei_ : cells_;
    if (!src) {
        throw Error(ErrorCode::not_found,
                    std::string("slide has no ") + (kind == TruthKind::nuclei ? "nuclei" : "cells") +
                        " ground truth");
    }
    return src->crop(x, y, w, h, 0);
}

RegionSlide::RegionSlide(const SlideReader& base, Rect roi) : base_(base), roi_(roi) {
    const auto m = base.meta();
    require(roi.within(m.width_px, m.height_px), "region lies outside the slide");
}

SlideMeta RegionSlide::meta() const {
    auto m = base_.meta();
    m.width_px = roi_.width;
    m.height_px = roi_.height;
    return m;
}

Image RegionSlide::read_region(int x, int y, int w, int h) const {
    Image out(w, h, 3, background_value(base_.meta().modality));
    const Image src = base_.read_region(roi_.x + x, roi_.y + y, w, h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (x + c < 0 || y + r < 0 || x + c >= roi_.width || y + r >= roi_.height) continue;
            std::memcpy(out.at(c, r), src.at(c, r), 3);
        }
    }
    return out;
}

LabelMap RegionSlide::truth_region(TruthKind kind, int x, int y, int w, int h) const {
    auto t = base_.truth()->truth_region(kind, roi_.x + x, roi_.y + y, w, h);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (x + c < 0 || y + r < 0 || x + c >= roi_.width || y + r >= roi_.height) t(c, r) = 0;
    return t;
}

std::filesystem::path sidecar_path(const std::filesystem::path& slide) {
    auto p = slide;
    p += ".meta.json";
    return p;
}

namespace {

const char* to_string(synthetic::TissueLayout t) {
    switch (t) {
        case synthetic::TissueLayout::full: return "full";
        case synthetic::TissueLayout::disk: return "disk";
        case synthetic::TissueLayout::none: return "none";
    }
    return "full";
}

synthetic::TissueLayout tissue_from_string(const std::string& s) {
    if (s == "full") return synthetic::TissueLayout::full;
    if (s == "disk") return synthetic::TissueLayout::disk;
    if (s == "none") return synthetic::TissueLayout::none;
    throw Error(ErrorCode::invalid_argument, "unknown tissue layout '" + s + "'");
}

json parse_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, "malformed JSON in " + path.string() + ": " + e.what());
    }
}

}  // namespace

synthetic::SlideSpec read_synthetic_spec(const std::filesystem::path& path) {
    const json j = parse_json_file(path);
    synthetic::SlideSpec s;
    try {
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.seed = j.value("seed", s.seed);
        if (j.contains("modality")) s.modality = modality_from_string(j.at("modality").get<std::string>());
        if (j.contains("mpp")) {
            if (j.at("mpp").is_null()) s.mpp.reset();
            else s.mpp = j.at("mpp").get<double>();
        }
        if (j.contains("tissue")) s.tissue = tissue_from_string(j.at("tissue").get<std::string>());
        s.pitch = j.value("pitch", s.pitch);
        s.occupancy = j.value("occupancy", s.occupancy);
        s.cell_radius_min = j.value("cell_radius_min", s.cell_radius_min);
        s.cell_radius_max = j.value("cell_radius_max", s.cell_radius_max);
        s.nucleus_scale_min = j.value("nucleus_scale_min", s.nucleus_scale_min);
        s.nucleus_scale_max = j.value("nucleus_scale_max", s.nucleus_scale_max);
        s.anucleate_fraction = j.value("anucleate_fraction", s.anucleate_fraction);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, "bad synthetic slide spec: " + std::string(e.what()));
    }
    return s;
}

void write_synthetic_spec(const std::filesystem::path& path, const synthetic::SlideSpec& s) {
    json j;
    j["width"] = s.width;
    j["height"] = s.height;
    j["seed"] = s.seed;
    j["modality"] = to_string(s.modality);
    j["mpp"] = s.mpp ? json(*s.mpp) : json(nullptr);
    j["tissue"] = to_string(s.tissue);
    j["pitch"] = s.pitch;
    j["occupancy"] = s.occupancy;
    j["cell_radius_min"] = s.cell_radius_min;
    j["cell_radius_max"] = s.cell_radius_max;
    j["nucleus_scale_min"] = s.nucleus_scale_min;
    j["nucleus_scale_max"] = s.nucleus_scale_max;
    j["anucleate_fraction"] = s.anucleate_fraction;
    io::write_file_atomic(path, j.dump(2) + "\n");
}

std::unique_ptr<SlideReader> open_slide(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::not_found, "slide not found: " + path.string());
    if (ends_with(path.filename().string(), ".synth.json"))
        return std::make_unique<SyntheticSlide>(read_synthetic_spec(path));

    const auto ext = lower_ext(path);
    std::unique_ptr<SlideReader> pixels;
    if (ext == ".tif" || ext == ".tiff") {
        pixels = std::make_unique<TiffSlide>(path);
    } else if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") {
        Image img = io::read_image(path);
        SlideMeta m;
        m.width_px = img.width;
        m.height_px = img.height;
        m.channel_count = img.channels;
        pixels = std::make_unique<RasterSlide>(std::move(img), m);
    } else {
        throw Error(ErrorCode::unsupported, "unsupported slide format: " + path.string());
    }

    SlideMeta meta = pixels->meta();
    std::unique_ptr<LabelTruth> truth;
    const auto side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
        const json j = parse_json_file(side);
        try {
            if (j.contains("width")) meta.width_px = j.at("width").get<int>();
            if (j.contains("height")) meta.height_px = j.at("height").get<int>();
            if (j.contains("mpp")) {
                if (j.at("mpp").is_null()) meta.mpp.reset();
                else meta.mpp = j.at("mpp").get<double>();
            }
            if (j.contains("modality"))
                meta.modality = modality_from_string(j.at("modality").get<std::string>());
            if (j.contains("truth")) {
                const auto& t = j.at("truth");
                const auto base = side.parent_path();
                std::optional<LabelMap> nuclei, cells;
                if (t.contains("nuclei")) nuclei = io::read_label_map(base / t.at("nuclei").get<std::string>());
                if (t.contains("cells")) cells = io::read_label_map(base / t.at("cells").get<std::string>());
                truth = std::make_unique<LabelTruth>(std::move(nuclei), std::move(cells));
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::invalid_argument, "bad sidecar " + side.string() + ": " + e.what());
        }
        meta.validate();
        if (auto* r = dynamic_cast<RasterSlide*>(pixels.get())) {
            // Dimensions of decoded rasters are authoritative.
            meta.width_px = r->image().width;
            meta.height_px = r->image().height;
        }
    }
    return std::make_unique<FileSlide>(std::move(pixels), meta, std::move(truth));
}

std::filesystem::path write_demo_slide(const std::filesystem::path& dir, int size, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    synthetic::SlideSpec spec;
    spec.width = size;
    spec.height = size;
    spec.seed = seed;
    const synthetic::ProceduralSlide slide(spec);
    const auto png = dir / "demo_slide.png";
    io::write_image(png, slide.render(0, 0, size, size));
    io::write_label_map(dir / "demo_nuclei.png", slide.nuclei(0, 0, size, size));
    io::write_label_map(dir / "demo_cells.png", slide.cells(0, 0, size, size));
    json side;
    side["width"] = size;
    side["height"] = size;
    side["mpp"] = *spec.mpp;
    side["modality"] = to_string(spec.modality);
    side["truth"] = {{"nuclei", "demo_nuclei.png"}, {"cells", "demo_cells.png"}};
    io::write_file_atomic(sidecar_path(png), side.dump(2) + "\n");
    return png;
}

}  // namespace hvseg
