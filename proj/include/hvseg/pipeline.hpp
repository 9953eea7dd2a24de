#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hvseg/extraction.hpp"
#include "hvseg/geometry.hpp"
#include "hvseg/morphometrics.hpp"
#include "hvseg/predictor.hpp"
#include "hvseg/slide.hpp"

namespace hvseg {

struct TissueParams {
    double luminance_max = 235.0 / 255.0;   // brightfield: darker counts as tissue
    double saturation_min = 0.05;           // brightfield: more saturated counts
    double fluorescence_min = 10.0 / 255.0; // fluorescence: brighter counts
    double min_fraction = 0.01;
};

bool detect_tissue(const Image& tile, Modality modality, const TissueParams& params = {});

// Chebyshev dilation of a rows x cols tile mask.
Mask dilate_tile_mask(const Mask& mask, int radius);

struct Instance {
    std::uint32_t id = 0;
    Head head = Head::he_nuclei;
    Polygon polygon;        // slide pixel coordinates
    Morphometrics morph;    // centroid and bbox live here
    int tile_row = 0;
    int tile_col = 0;
    std::optional<NCRecord> nc;  // cell heads only
    bool orphan_nucleus = false; // nuclear heads only
};

struct TileFailure {
    int row = 0;
    int col = 0;
    std::string message;
};

struct Provenance {
    std::string config_hash;
    double scale = 1.0;
    bool missing_mpp = false;
    int workers = 1;
    std::size_t tiles_total = 0;
    std::size_t tiles_scheduled = 0;  // after tissue filtering
    std::size_t tiles_processed = 0;
    double processed_area_px = 0;     // slide pixels covered by processed tiles
    std::size_t peak_resident_tiles = 0;
    std::size_t resident_limit = 0;
    double read_s = 0, tissue_s = 0, predict_s = 0, extract_s = 0, merge_s = 0, total_s = 0;
    std::vector<TileFailure> failures;
};

struct InstanceCollection {
    SlideMeta slide;
    std::vector<Head> heads;          // output heads, in export order
    std::vector<Instance> instances;  // grouped by head in `heads` order, ids ascending
    Provenance provenance;

    std::size_t count(Head head) const;
    std::size_t cell_count() const;
};

struct PipelineConfig {
    int tile_size = 512;
    int overlap = 64;
    std::optional<double> target_mpp;  // absent: process at native resolution
    std::vector<Head> heads{Head::he_nuclei};
    bool tissue_filter = true;
    int tissue_dilate_tiles = 1;
    double dedup_iou = 0.5;
    ExtractionParams extraction;
    PredictorSpec predictor;
    TissueParams tissue;
    NCDenominator nc_denominator = NCDenominator::cytoplasm;
    int workers = 1;                   // extraction threads; 0 = hardware concurrency
    int prefetch = 2;                  // decoded tiles allowed beyond one batch

    void validate() const;
    std::string canonical_json() const;
    std::string hash() const;
};

// Output heads with the nuclear head of every cell head added, ordered
// nuclei before cells.
std::vector<Head> expand_heads(const std::vector<Head>& heads);

// Heads for a modality from short names ("nuclei", "cells").
std::vector<Head> heads_for(Modality modality, const std::vector<std::string>& names);

// Counting gate on decoded tiles held in memory at once.
class ResidentTileCounter {
public:
    explicit ResidentTileCounter(std::size_t limit) : limit_(limit) {}
    void acquire();
    void release();
    std::size_t peak() const;
    std::size_t current() const;
    std::size_t limit() const noexcept { return limit_; }

private:
    std::size_t limit_;
    std::size_t current_ = 0;
    std::size_t peak_ = 0;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
};

// Keeps instances whose centroid lies in the tile core: each side that is not
// a slide edge moves to the middle of the overlap with the neighbouring tile
// (overlap / 2 in, more next to a clamped last tile), so cores partition the slide. The rectangle is taken
// in working pixels and mapped to slide pixels with `scale`.
std::vector<Instance> filter_core_region(const std::vector<Instance>& instances, const TileRef& tile,
                                         const TileGrid& grid, double scale = 1.0);

// Rasterized-polygon IoU (pixel centers inside each ring).
double polygon_iou(const Polygon& a, const Polygon& b);

// Per head: instances are visited by (area desc, id asc) and dropped when they
// reach iou_threshold with an already kept instance. Candidate pairs come from
// a uniform spatial hash over bounding boxes. Input order is preserved.
std::vector<Instance> dedup_polygons(const std::vector<Instance>& instances, double iou_threshold);

using ProgressSink = std::function<void(std::size_t done, std::size_t total)>;

InstanceCollection run_slide(const SlideReader& slide, const PipelineConfig& config,
                             const ProgressSink& progress = {});
// Same, with a caller-owned predictor (its spec must cover the expanded heads).
InstanceCollection run_slide(const SlideReader& slide, const PipelineConfig& config, Predictor& predictor,
                             const ProgressSink& progress = {});

// Per-tile extraction of all heads from a prediction set, in tile-local
// pixels. Exposed for single-pass comparisons and the bench harness.
struct TileLabels {
    Head head;
    LabelMap labels;
};
std::vector<TileLabels> extract_tile(const PredictionSet& predictions, const ExtractionParams& params);

// Decodes the predictor input for a working-resolution tile: the slide region
// it covers, resampled by `scale` and padded up to tile_size.
TileInput read_tile_input(const SlideReader& slide, const TileRef& tile, int tile_size, double scale = 1.0);

// Rasterizes the instances of one head into a label map of the given size.
LabelMap rasterize_instances(const InstanceCollection& collection, Head head, int width, int height);

}  // namespace hvseg
