#include "hvseg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <thread>
#include <unordered_map>

#include <opencv2/imgproc.hpp>

#include "json.hpp"

#include "hvseg/contours.hpp"
#include "hvseg/error.hpp"
#include "hvseg/io.hpp"

namespace hvseg {

using nlohmann::json;

bool detect_tissue(const Image& tile, Modality modality, const TissueParams& p) {
    if (tile.empty()) return false;
    const std::size_t n = static_cast<std::size_t>(tile.width) * tile.height;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* px = tile.pixels.data() + i * tile.channels;
        const int c = std::min(tile.channels, 3);
        double r = px[0] / 255.0, g = c > 1 ? px[1] / 255.0 : r, b = c > 2 ? px[2] / 255.0 : r;
        const double hi = std::max({r, g, b}), lo = std::min({r, g, b});
        if (modality == Modality::brightfield) {
            const double lum = 0.299 * r + 0.587 * g + 0.114 * b;
            const double sat = hi > 0 ? (hi - lo) / hi : 0.0;
            if (lum < p.luminance_max || sat > p.saturation_min) ++hits;
        } else if (hi > p.fluorescence_min) {
            ++hits;
        }
    }
    return static_cast<double>(hits) >= p.min_fraction * static_cast<double>(n);
}

Mask dilate_tile_mask(const Mask& mask, int radius) {
    if (radius <= 0) return mask;
    Mask out(mask.width(), mask.height(), 0);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            if (mask(x, y))
                for (int dy = -radius; dy <= radius; ++dy)
                    for (int dx = -radius; dx <= radius; ++dx)
                        if (out.contains(x + dx, y + dy)) out(x + dx, y + dy) = 1;
    return out;
}

std::size_t InstanceCollection::count(Head head) const {
    return static_cast<std::size_t>(
        std::count_if(instances.begin(), instances.end(), [&](const Instance& i) { return i.head == head; }));
}

std::size_t InstanceCollection::cell_count() const {
    return static_cast<std::size_t>(std::count_if(instances.begin(), instances.end(),
                                                  [](const Instance& i) { return is_cell_head(i.head); }));
}

void PipelineConfig::validate() const {
    require(tile_size >= 1 && overlap >= 0 && overlap < tile_size, "need 0 <= overlap < tile_size");
    require(!target_mpp || *target_mpp > 0, "target_mpp must be positive");
    require(!heads.empty(), "at least one head is required");
    require(tissue_dilate_tiles >= 0, "tissue_dilate_tiles must be >= 0");
    require(dedup_iou > 0 && dedup_iou <= 1, "dedup_iou must lie in (0, 1]");
    require(workers >= 0 && prefetch >= 1, "invalid worker or prefetch count");
    extraction.validate();
    predictor.validate();
}

std::string PipelineConfig::canonical_json() const {
    json j;
    j["tile_size"] = tile_size;
    j["overlap"] = overlap;
    j["target_mpp"] = target_mpp ? json(*target_mpp) : json(nullptr);
    std::vector<std::string> hs;
    for (auto h : expand_heads(heads)) hs.push_back(to_string(h));
    j["heads"] = hs;
    j["tissue_filter"] = tissue_filter;
    j["tissue_dilate_tiles"] = tissue_dilate_tiles;
    j["dedup_iou"] = dedup_iou;
    j["extraction"] = {{"prob_threshold", extraction.prob_threshold},
                       {"grad_threshold", extraction.grad_threshold},
                       {"min_marker_px", extraction.min_marker_px},
                       {"min_instance_px", extraction.min_instance_px},
                       {"min_anucleate_px", extraction.min_anucleate_px},
                       {"seed_min_distance_px", extraction.seed_min_distance_px}};
    j["predictor"] = {{"kind", to_string(predictor.kind)},
                      {"batch_size", predictor.batch_size},
                      {"seed", predictor.seed},
                      {"prob_sigma", predictor.noise.prob_sigma},
                      {"hv_sigma", predictor.noise.hv_sigma},
                      {"boundary_jitter_px", predictor.noise.boundary_jitter_px}};
    j["tissue"] = {{"luminance_max", tissue.luminance_max},
                   {"saturation_min", tissue.saturation_min},
                   {"fluorescence_min", tissue.fluorescence_min},
                   {"min_fraction", tissue.min_fraction}};
    j["nc_denominator"] = nc_denominator == NCDenominator::cytoplasm ? "cytoplasm" : "cell";
    return j.dump();
}

std::string PipelineConfig::hash() const {
    const auto s = canonical_json();
    return io::fnv1a_hex(s.data(), s.size());
}

std::vector<Head> expand_heads(const std::vector<Head>& heads) {
    std::set<Head> all(heads.begin(), heads.end());
    for (auto h : heads) all.insert(nuclei_head_for(h));
    std::vector<Head> out;
    for (auto h : all)
        if (!is_cell_head(h)) out.push_back(h);
    for (auto h : all)
        if (is_cell_head(h)) out.push_back(h);
    return out;
}

std::vector<Head> heads_for(Modality modality, const std::vector<std::string>& names) {
    std::vector<Head> out;
    const bool bf = modality == Modality::brightfield;
    for (const auto& n : names) {
        if (n == "nuclei") out.push_back(bf ? Head::he_nuclei : Head::mif_nuclei);
        else if (n == "cells") out.push_back(bf ? Head::he_cells : Head::mif_cells);
        else out.push_back(head_from_string(n));
    }
    require(!out.empty(), "no heads requested");
    return out;
}

void ResidentTileCounter::acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return current_ < limit_; });
    ++current_;
    peak_ = std::max(peak_, current_);
}

void ResidentTileCounter::release() {
    {
        std::lock_guard lock(mutex_);
        require(current_ > 0, "resident tile counter underflow");
        --current_;
    }
    cv_.notify_all();
}

std::size_t ResidentTileCounter::peak() const {
    std::lock_guard lock(mutex_);
    return peak_;
}

std::size_t ResidentTileCounter::current() const {
    std::lock_guard lock(mutex_);
    return current_;
}

std::vector<Instance> filter_core_region(const std::vector<Instance>& instances, const TileRef& tile,
                                         const TileGrid& grid, double scale) {
    // Inner borders sit mid-way through the overlap with the neighbour. That is
    // overlap / 2 for regular steps and further in next to a clamped last tile.
    auto mid = [](int a0, int a_len, int b0) { return (b0 + a0 + a_len) / 2.0; };
    const double x0 = tile.left_edge || tile.col == 0
                          ? tile.x - 0.5
                          : mid(grid.at(tile.row, tile.col - 1).x, grid.at(tile.row, tile.col - 1).width, tile.x);
    const double y0 = tile.top_edge || tile.row == 0
                          ? tile.y - 0.5
                          : mid(grid.at(tile.row - 1, tile.col).y, grid.at(tile.row - 1, tile.col).height, tile.y);
    const double x1 = tile.right_edge || tile.col + 1 == grid.cols
                          ? tile.x + tile.width - 0.5
                          : mid(tile.x, tile.width, grid.at(tile.row, tile.col + 1).x);
    const double y1 = tile.bottom_edge || tile.row + 1 == grid.rows
                          ? tile.y + tile.height - 0.5
                          : mid(tile.y, tile.height, grid.at(tile.row + 1, tile.col).y);
    std::vector<Instance> out;
    for (const auto& inst : instances) {
        // Back to working pixels for the containment test.
        const double cx = inst.morph.centroid.x * scale, cy = inst.morph.centroid.y * scale;
        const bool in_x = cx >= x0 && (tile.right_edge ? cx <= x1 : cx < x1);
        const bool in_y = cy >= y0 && (tile.bottom_edge ? cy <= y1 : cy < y1);
        if (in_x && in_y) out.push_back(inst);
    }
    return out;
}

double polygon_iou(const Polygon& a, const Polygon& b) {
    const BBox ba = a.bbox(), bb = b.bbox();
    const double x0 = std::floor(std::min(ba.x0, bb.x0)), y0 = std::floor(std::min(ba.y0, bb.y0));
    const int w = static_cast<int>(std::ceil(std::max(ba.x1, bb.x1)) - x0) + 1;
    const int h = static_cast<int>(std::ceil(std::max(ba.y1, bb.y1)) - y0) + 1;
    LabelMap ra(w, h, 0), rb(w, h, 0);
    rasterize_polygon(a, ra, 1, {x0, y0});
    rasterize_polygon(b, rb, 1, {x0, y0});
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        inter += ra[i] && rb[i];
        uni += ra[i] || rb[i];
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

constexpr double kHashCell = 64.0;

struct SpatialHash {
    std::unordered_map<std::int64_t, std::vector<std::size_t>> cells;

    static std::int64_t key(int cx, int cy) {
        return (static_cast<std::int64_t>(cx) << 32) ^ static_cast<std::uint32_t>(cy);
    }
    template <typename Fn>
    static void cover(const BBox& b, Fn&& fn) {
        const int cx0 = static_cast<int>(std::floor(b.x0 / kHashCell));
        const int cx1 = static_cast<int>(std::floor(b.x1 / kHashCell));
        const int cy0 = static_cast<int>(std::floor(b.y0 / kHashCell));
        const int cy1 = static_cast<int>(std::floor(b.y1 / kHashCell));
        for (int cy = cy0; cy <= cy1; ++cy)
            for (int cx = cx0; cx <= cx1; ++cx) fn(key(cx, cy));
    }
    void insert(const BBox& b, std::size_t idx) {
        cover(b, [&](std::int64_t k) { cells[k].push_back(idx); });
    }
    std::vector<std::size_t> query(const BBox& b) const {
        std::vector<std::size_t> out;
        cover(b, [&](std::int64_t k) {
            auto it = cells.find(k);
            if (it != cells.end()) out.insert(out.end(), it->second.begin(), it->second.end());
        });
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

}  // namespace

std::vector<Instance> dedup_polygons(const std::vector<Instance>& instances, double iou_threshold) {
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ia = instances[a];
        const auto& ib = instances[b];
        if (ia.head != ib.head) return ia.head < ib.head;
        if (ia.morph.area_px2 != ib.morph.area_px2) return ia.morph.area_px2 > ib.morph.area_px2;
        return ia.id < ib.id;
    });
    std::map<Head, SpatialHash> kept_hash;
    std::vector<bool> keep(instances.size(), false);
    for (auto idx : order) {
        const auto& inst = instances[idx];
        auto& hash = kept_hash[inst.head];
        bool duplicate = false;
        for (auto other : hash.query(inst.morph.bbox)) {
            const auto& o = instances[other];
            if (!o.morph.bbox.intersects(inst.morph.bbox)) continue;
            if (polygon_iou(inst.polygon, o.polygon) >= iou_threshold) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) {
            keep[idx] = true;
            hash.insert(inst.morph.bbox, idx);
        }
    }
    std::vector<Instance> out;
    for (std::size_t i = 0; i < instances.size(); ++i)
        if (keep[i]) out.push_back(instances[i]);
    return out;
}

std::vector<TileLabels> extract_tile(const PredictionSet& predictions, const ExtractionParams& params) {
    std::vector<TileLabels> out;
    auto find = [&](Head h) -> const TileLabels* {
        for (const auto& t : out)
            if (t.head == h) return &t;
        return nullptr;
    };
    for (const auto& p : predictions)
        if (!is_cell_head(p.head)) out.push_back({p.head, extract_instances_hv(p, params)});
    for (const auto& p : predictions) {
        if (!is_cell_head(p.head)) continue;
        const TileLabels* nuclei = find(nuclei_head_for(p.head));
        require(nuclei != nullptr, "cell head " + to_string(p.head) + " needs its nuclear head");
        LabelMap cells = extract_cells_constrained(p, nuclei->labels, params);
        cells = recover_anucleate_cells(cells, p.seg_prob, nuclei->labels, params);
        out.push_back({p.head, std::move(cells)});
    }
    return out;
}

TileInput read_tile_input(const SlideReader& slide, const TileRef& tile, int tile_size, double scale) {
    TileInput in;
    in.tile = tile;
    in.input_width = std::max(tile.width, tile_size);
    in.input_height = std::max(tile.height, tile_size);
    in.source.x = static_cast<int>(std::lround(tile.x / scale));
    in.source.y = static_cast<int>(std::lround(tile.y / scale));
    in.source.width = source_region_side(in.input_width, scale);
    in.source.height = source_region_side(in.input_height, scale);
    Image px = slide.read_region(in.source.x, in.source.y, in.source.width, in.source.height);
    if (px.width != in.input_width || px.height != in.input_height) {
        cv::Mat src(px.height, px.width, CV_8UC3, px.pixels.data());
        Image resized(in.input_width, in.input_height, 3);
        cv::Mat dst(resized.height, resized.width, CV_8UC3, resized.pixels.data());
        cv::resize(src, dst, dst.size(), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
        px = std::move(resized);
    }
    in.pixels = std::move(px);
    return in;
}

LabelMap rasterize_instances(const InstanceCollection& collection, Head head, int width, int height) {
    LabelMap out(width, height, 0);
    for (const auto& inst : collection.instances)
        if (inst.head == head) rasterize_polygon(inst.polygon, out, inst.id);
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct PendingInstance {
    Instance inst;
    std::optional<Point> nucleus_anchor;  // centroid of the paired nucleus, slide pixels
};

struct TileResult {
    std::vector<PendingInstance> instances;
    std::optional<std::string> error;
};

struct Context {
    const SlideReader& slide;
    const PipelineConfig& config;
    TileGrid grid;
    double scale = 1.0;
    std::vector<Head> heads;
};

TileInput read_tile(const Context& ctx, const TileRef& tile) {
    return read_tile_input(ctx.slide, tile, ctx.config.tile_size, ctx.scale);
}

DensePrediction crop_prediction(const DensePrediction& p, int w, int h) {
    if (p.width() == w && p.height() == h) return p;
    DensePrediction out;
    out.head = p.head;
    out.seg_prob = p.seg_prob.crop(0, 0, w, h);
    out.hv.h = p.hv.h.crop(0, 0, w, h);
    out.hv.v = p.hv.v.crop(0, 0, w, h);
    return out;
}

TileResult process_tile(const Context& ctx, const TileRef& tile, const PredictionSet& raw) {
    TileResult result;
    PredictionSet preds;
    for (const auto& p : raw) preds.push_back(crop_prediction(p, tile.width, tile.height));
    const auto labels = extract_tile(preds, ctx.config.extraction);
    auto labels_of = [&](Head h) -> const LabelMap* {
        for (const auto& t : labels)
            if (t.head == h) return &t.labels;
        return nullptr;
    };

    std::map<Head, std::map<std::uint32_t, Point>> nucleus_centroids;
    std::map<Head, std::set<std::uint32_t>> orphans;
    std::map<Head, std::map<std::uint32_t, NCRecord>> records;
    for (auto h : ctx.heads) {
        if (!is_cell_head(h)) continue;
        const auto pairing =
            pair_nuclei_cells(*labels_of(nuclei_head_for(h)), *labels_of(h), ctx.config.nc_denominator);
        for (const auto& r : pairing.records) records[h][r.cell_id] = r;
        orphans[nuclei_head_for(h)].insert(pairing.orphan_nuclei.begin(), pairing.orphan_nuclei.end());
    }

    const Point offset{static_cast<double>(tile.x), static_cast<double>(tile.y)};
    for (auto h : ctx.heads) {
        const LabelMap* lm = labels_of(h);
        if (!lm) continue;
        std::vector<Instance> traced;
        for (auto& c : trace_contours(*lm, offset)) {
            Instance inst;
            inst.id = c.id;
            inst.head = h;
            inst.polygon = std::move(c.polygon);
            if (ctx.scale != 1.0)
                for (auto& v : inst.polygon.exterior) v = {v.x / ctx.scale, v.y / ctx.scale};
            inst.morph = morphometrics(inst.polygon);
            inst.tile_row = tile.row;
            inst.tile_col = tile.col;
            if (!is_cell_head(h)) {
                nucleus_centroids[h][c.id] = inst.morph.centroid;
                inst.orphan_nucleus = orphans[h].contains(c.id);
            }
            traced.push_back(std::move(inst));
        }
        for (auto& inst : filter_core_region(traced, tile, ctx.grid, ctx.scale)) {
            PendingInstance p{std::move(inst), std::nullopt};
            if (is_cell_head(h)) {
                auto it = records[h].find(p.inst.id);
                if (it != records[h].end()) {
                    p.inst.nc = it->second;
                    if (it->second.nucleus_id) {
                        const auto& cents = nucleus_centroids[nuclei_head_for(h)];
                        auto c = cents.find(*it->second.nucleus_id);
                        if (c != cents.end()) p.nucleus_anchor = c->second;
                    }
                }
            }
            result.instances.push_back(std::move(p));
        }
    }
    return result;
}

// Links every cell to the surviving nucleus copy closest to its in-tile
// nucleus centroid, then rewrites ids in the NC records.
void link_cells(std::vector<PendingInstance>& all) {
    std::map<Head, SpatialHash> nuclei_hash;
    for (std::size_t i = 0; i < all.size(); ++i)
        if (!is_cell_head(all[i].inst.head)) nuclei_hash[all[i].inst.head].insert(all[i].inst.morph.bbox, i);
    for (auto& p : all) {
        if (!p.inst.nc) continue;
        p.inst.nc->cell_id = p.inst.id;
        if (!p.nucleus_anchor) {
            p.inst.nc->nucleus_id.reset();
            continue;
        }
        const Point a = *p.nucleus_anchor;
        const BBox probe{a.x, a.y, a.x, a.y};
        double best = 1.0;  // accept copies within one pixel, or containing the anchor
        std::optional<std::uint32_t> found;
        for (auto idx : nuclei_hash[nuclei_head_for(p.inst.head)].query(probe)) {
            const auto& n = all[idx].inst;
            const double d = std::hypot(n.morph.centroid.x - a.x, n.morph.centroid.y - a.y);
            if (d < best || (!found && n.polygon.contains(a))) {
                best = std::min(best, d);
                found = n.id;
            }
        }
        p.inst.nc->nucleus_id = found;
    }
}

}  // namespace

InstanceCollection run_slide(const SlideReader& slide, const PipelineConfig& config, const ProgressSink& progress) {
    config.validate();
    PredictorSpec spec = config.predictor;
    spec.heads = expand_heads(config.heads);
    auto predictor = make_predictor(spec, slide);
    return run_slide(slide, config, *predictor, progress);
}

InstanceCollection run_slide(const SlideReader& slide, const PipelineConfig& config, Predictor& predictor,
                             const ProgressSink& progress) {
    const auto t_start = Clock::now();
    config.validate();
    const SlideMeta meta = slide.meta();
    meta.validate();

    InstanceCollection out;
    out.slide = meta;
    out.heads = expand_heads(config.heads);
    for (auto h : out.heads) {
        const auto& ph = predictor.spec().heads;
        require(std::find(ph.begin(), ph.end(), h) != ph.end(),
                "predictor does not provide head " + to_string(h));
    }
    auto& prov = out.provenance;
    prov.config_hash = config.hash();

    const ScaleFactor sf = config.target_mpp ? virtual_scale_factor(meta.mpp, *config.target_mpp) : ScaleFactor{};
    prov.scale = sf.scale;
    prov.missing_mpp = sf.missing_source_mpp;
    const int work_w = std::max(1, static_cast<int>(std::lround(meta.width_px * sf.scale)));
    const int work_h = std::max(1, static_cast<int>(std::lround(meta.height_px * sf.scale)));

    Context ctx{slide, config, build_tile_grid(work_w, work_h, config.tile_size, config.overlap), sf.scale,
                out.heads};
    const auto& grid = ctx.grid;
    prov.tiles_total = grid.tiles.size();

    const int batch_size = predictor.spec().batch_size;
    ResidentTileCounter counter(static_cast<std::size_t>(batch_size + config.prefetch));
    prov.resident_limit = counter.limit();
    const int workers = config.workers > 0 ? config.workers
                                           : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    prov.workers = workers;

    // Tissue pass.
    std::vector<std::size_t> scheduled;
    {
        const auto t0 = Clock::now();
        Mask tissue(grid.cols, grid.rows, 1);
        if (config.tissue_filter) {
            for (const auto& t : grid.tiles) {
                counter.acquire();
                bool hit = false;
                try {
                    const Image px = ctx.slide.read_region(
                        static_cast<int>(std::lround(t.x / sf.scale)), static_cast<int>(std::lround(t.y / sf.scale)),
                        source_region_side(t.width, sf.scale), source_region_side(t.height, sf.scale));
                    hit = detect_tissue(px, meta.modality, config.tissue);
                } catch (const std::exception&) {
                    hit = true;  // let the main pass record the failure
                }
                counter.release();
                tissue(t.col, t.row) = hit ? 1 : 0;
            }
            tissue = dilate_tile_mask(tissue, config.tissue_dilate_tiles);
        }
        for (std::size_t i = 0; i < grid.tiles.size(); ++i)
            if (tissue(grid.tiles[i].col, grid.tiles[i].row)) scheduled.push_back(i);
        prov.tissue_s = seconds_since(t0);
    }
    prov.tiles_scheduled = scheduled.size();

    // Reader stage: decodes scheduled tiles in order, gated by the counter.
    struct Decoded {
        std::size_t order;
        std::optional<TileInput> input;
        std::string error;
    };
    std::deque<Decoded> queue;
    std::mutex qmutex;
    std::condition_variable qcv;
    std::atomic<bool> abort{false};
    double read_s = 0;
    std::thread reader([&] {
        for (std::size_t k = 0; k < scheduled.size() && !abort; ++k) {
            counter.acquire();
            const auto t0 = Clock::now();
            Decoded d{k, std::nullopt, {}};
            try {
                d.input = read_tile(ctx, grid.tiles[scheduled[k]]);
            } catch (const std::exception& e) {
                d.error = e.what();
            }
            read_s += seconds_since(t0);
            {
                std::lock_guard lock(qmutex);
                queue.push_back(std::move(d));
            }
            qcv.notify_all();
        }
    });

    std::vector<TileResult> results(scheduled.size());
    std::size_t done = 0;
    auto report = [&] {
        if (progress) progress(done, scheduled.size());
    };
    report();

    try {
        std::size_t next = 0;
        while (next < scheduled.size()) {
            std::vector<Decoded> batch;
            {
                std::unique_lock lock(qmutex);
                const std::size_t want = std::min<std::size_t>(batch_size, scheduled.size() - next);
                qcv.wait(lock, [&] { return queue.size() >= want; });
                for (std::size_t i = 0; i < want; ++i) {
                    batch.push_back(std::move(queue.front()));
                    queue.pop_front();
                }
            }
            next += batch.size();

            // Predict; a failing batch is retried tile by tile.
            const auto t_pred = Clock::now();
            std::vector<std::optional<PredictionSet>> preds(batch.size());
            TileBatch tb;
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < batch.size(); ++i) {
                if (batch[i].input) {
                    tb.tiles.push_back(std::move(*batch[i].input));
                    members.push_back(i);
                } else {
                    results[batch[i].order].error = "read failed: " + batch[i].error;
                }
            }
            if (!tb.tiles.empty()) {
                try {
                    auto sets = predictor.predict(tb);
                    require(sets.size() == tb.tiles.size(), "predictor returned wrong batch size",
                            ErrorCode::predictor);
                    for (std::size_t i = 0; i < members.size(); ++i) preds[members[i]] = std::move(sets[i]);
                } catch (const std::exception&) {
                    for (std::size_t i = 0; i < members.size(); ++i) {
                        TileBatch single;
                        single.tiles.push_back(tb.tiles[i]);
                        try {
                            auto sets = predictor.predict(single);
                            require(sets.size() == 1, "predictor returned wrong batch size", ErrorCode::predictor);
                            preds[members[i]] = std::move(sets[0]);
                        } catch (const std::exception& e) {
                            results[batch[members[i]].order].error = std::string("predict failed: ") + e.what();
                        }
                    }
                }
            }
            // Decoded pixels are no longer needed.
            tb.tiles.clear();
            for (std::size_t i = 0; i < batch.size(); ++i) counter.release();
            prov.predict_s += seconds_since(t_pred);

            // Extraction across workers; results land in fixed slots.
            const auto t_ext = Clock::now();
            std::atomic<std::size_t> cursor{0};
            auto work = [&] {
                for (std::size_t i = cursor++; i < batch.size(); i = cursor++) {
                    if (!preds[i]) continue;
                    const auto order = batch[i].order;
                    try {
                        results[order] = process_tile(ctx, grid.tiles[scheduled[order]], *preds[i]);
                    } catch (const std::exception& e) {
                        results[order] = TileResult{{}, std::string("extraction failed: ") + e.what()};
                    }
                    preds[i].reset();
                }
            };
            if (workers <= 1 || batch.size() <= 1) {
                work();
            } else {
                std::vector<std::thread> pool;
                const int n = std::min<int>(workers, static_cast<int>(batch.size()));
                for (int w = 0; w < n; ++w) pool.emplace_back(work);
                for (auto& t : pool) t.join();
            }
            prov.extract_s += seconds_since(t_ext);
            done += batch.size();
            report();
        }
    } catch (...) {
        abort = true;
        // Unblock the reader if it waits on the counter.
        while (counter.current() > 0) counter.release();
        reader.join();
        throw;
    }
    reader.join();
    prov.read_s = read_s;
    prov.peak_resident_tiles = counter.peak();

    // Merge in grid order.
    const auto t_merge = Clock::now();
    std::vector<PendingInstance> merged;
    std::uint32_t next_id = 0;
    for (std::size_t k = 0; k < results.size(); ++k) {
        const auto& tile = grid.tiles[scheduled[k]];
        if (results[k].error) {
            prov.failures.push_back({tile.row, tile.col, *results[k].error});
            continue;
        }
        ++prov.tiles_processed;
        prov.processed_area_px += static_cast<double>(tile.width) * tile.height / (sf.scale * sf.scale);
        for (auto& p : results[k].instances) {
            p.inst.id = ++next_id;
            merged.push_back(std::move(p));
        }
    }
    results.clear();

    std::vector<Instance> plain;
    plain.reserve(merged.size());
    for (const auto& p : merged) plain.push_back(p.inst);
    const auto kept = dedup_polygons(plain, config.dedup_iou);
    std::unordered_map<std::uint32_t, std::size_t> by_temp_id;
    for (std::size_t i = 0; i < merged.size(); ++i) by_temp_id[merged[i].inst.id] = i;

    std::vector<PendingInstance> final_list;
    for (auto h : out.heads) {
        std::uint32_t id = 0;
        for (const auto& inst : kept) {
            if (inst.head != h) continue;
            PendingInstance p = merged[by_temp_id[inst.id]];
            p.inst.id = ++id;
            final_list.push_back(std::move(p));
        }
    }
    link_cells(final_list);
    for (auto& p : final_list) out.instances.push_back(std::move(p.inst));
    prov.merge_s = seconds_since(t_merge);
    prov.total_s = seconds_since(t_start);
    return out;
}

}  // namespace hvseg
