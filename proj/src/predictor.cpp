#include "hvseg/predictor.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <unordered_map>

#include "hvseg/error.hpp"
#include "hvseg/hv.hpp"
#include "hvseg/io.hpp"
#include "hvseg/labeling.hpp"

namespace hvseg {

std::string to_string(PredictorKind kind) {
    return kind == PredictorKind::synthetic_oracle ? "synthetic" : "files";
}

PredictorKind predictor_kind_from_string(const std::string& s) {
    if (s == "synthetic" || s == "oracle" || s == "synthetic_oracle") return PredictorKind::synthetic_oracle;
    if (s == "files" || s == "file_backed") return PredictorKind::file_backed;
    throw Error(ErrorCode::invalid_argument, "unknown predictor '" + s + "'");
}

void PredictorSpec::validate() const {
    require(batch_size >= 1, "batch_size must be >= 1");
    require(noise.prob_sigma >= 0 && noise.hv_sigma >= 0 && noise.boundary_jitter_px >= 0,
            "noise parameters must be non-negative");
    require(!heads.empty(), "at least one head is required");
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t tile_seed(std::uint64_t seed, const Rect& source, Head head) {
    return mix(mix(mix(seed, static_cast<std::uint64_t>(source.x)), static_cast<std::uint64_t>(source.y)),
               static_cast<std::uint64_t>(head));
}

LabelMap resample_nearest(const LabelMap& src, int w, int h) {
    if (src.width() == w && src.height() == h) return src;
    LabelMap out(w, h, 0);
    // Pixel-center mapping, same as cv::INTER_NEAREST_EXACT.
    for (int y = 0; y < h; ++y) {
        const int sy = std::min(src.height() - 1,
                                static_cast<int>((y + 0.5) * src.height() / h));
        for (int x = 0; x < w; ++x) {
            const int sx = std::min(src.width() - 1, static_cast<int>((x + 0.5) * src.width() / w));
            out(x, y) = src(sx, sy);
        }
    }
    return out;
}

}  // namespace

LabelMap jitter_boundaries(const LabelMap& labels, int radius, std::uint64_t seed) {
    if (radius <= 0) return labels;
    std::unordered_map<std::uint32_t, int> step;
    for (auto id : unique_ids(labels)) {
        std::mt19937_64 rng(mix(seed, id));
        step[id] = static_cast<int>(rng() % static_cast<std::uint64_t>(2 * radius + 1)) - radius;
    }
    LabelMap cur = labels;
    const int w = cur.width(), h = cur.height();
    for (int k = 1; k <= radius; ++k) {
        LabelMap next = cur;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const auto id = cur(x, y);
                const int nx[4] = {x - 1, x + 1, x, x};
                const int ny[4] = {y, y, y - 1, y + 1};
                if (id != 0) {
                    if (step[id] > -k) continue;
                    for (int n = 0; n < 4; ++n) {
                        if (!cur.contains(nx[n], ny[n]) || cur(nx[n], ny[n]) != id) {
                            next(x, y) = 0;
                            break;
                        }
                    }
                } else if (labels(x, y) == 0) {
                    // Smallest growing neighbour id wins; pixels vacated by a
                    // shrinking instance stay empty.
                    std::uint32_t best = 0;
                    for (int n = 0; n < 4; ++n) {
                        if (!cur.contains(nx[n], ny[n])) continue;
                        const auto nb = cur(nx[n], ny[n]);
                        if (nb != 0 && step[nb] >= k && (best == 0 || nb < best)) best = nb;
                    }
                    next(x, y) = best;
                }
            }
        }
        cur = std::move(next);
    }
    return cur;
}

SyntheticOraclePredictor::SyntheticOraclePredictor(PredictorSpec spec, const TruthSource& truth)
    : spec_(std::move(spec)), truth_(truth) {
    spec_.validate();
}

DensePrediction SyntheticOraclePredictor::predict_tile(const TileInput& in, Head head) const {
    const auto kind = is_cell_head(head) ? TruthKind::cells : TruthKind::nuclei;
    LabelMap labels = truth_.truth_region(kind, in.source.x, in.source.y, in.source.width, in.source.height);
    labels = resample_nearest(labels, in.input_width, in.input_height);
    const std::uint64_t seed = tile_seed(spec_.seed, in.source, head);
    if (spec_.noise.boundary_jitter_px > 0)
        labels = jitter_boundaries(labels, spec_.noise.boundary_jitter_px, seed);

    DensePrediction pred;
    pred.head = head;
    pred.seg_prob = ProbabilityMap(labels.width(), labels.height(), 0.0f);
    for (std::size_t i = 0; i < labels.size(); ++i) pred.seg_prob[i] = labels[i] != 0 ? 1.0f : 0.0f;
    pred.hv = generate_hv_maps(labels);

    if (spec_.noise.prob_sigma > 0 || spec_.noise.hv_sigma > 0) {
        std::mt19937_64 rng(mix(seed, 0x5eed));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double ps = spec_.noise.prob_sigma, hs = spec_.noise.hv_sigma;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double a = gauss(rng), b = gauss(rng), c = gauss(rng);
            pred.seg_prob[i] = static_cast<float>(std::clamp(pred.seg_prob[i] + ps * a, 0.0, 1.0));
            pred.hv.h[i] = static_cast<float>(std::clamp(pred.hv.h[i] + hs * b, -1.0, 1.0));
            pred.hv.v[i] = static_cast<float>(std::clamp(pred.hv.v[i] + hs * c, -1.0, 1.0));
        }
    }
    return pred;
}

std::vector<PredictionSet> SyntheticOraclePredictor::predict(const TileBatch& batch) {
    std::vector<PredictionSet> out;
    out.reserve(batch.tiles.size());
    for (const auto& t : batch.tiles) {
        PredictionSet set;
        for (auto head : spec_.heads) set.push_back(predict_tile(t, head));
        out.push_back(std::move(set));
    }
    return out;
}

std::filesystem::path prediction_file(const std::filesystem::path& dir, Head head, int x, int y) {
    return dir / (to_string(head) + "_" + std::to_string(x) + "_" + std::to_string(y) + ".f32");
}

void write_prediction(const std::filesystem::path& dir, const TileRef& tile, const DensePrediction& pred) {
    pred.validate();
    std::filesystem::create_directories(dir);
    io::write_float_raster(prediction_file(dir, pred.head, tile.x, tile.y),
                           {pred.seg_prob, pred.hv.h, pred.hv.v});
}

DensePrediction read_prediction(const std::filesystem::path& file, Head head) {
    if (!std::filesystem::exists(file))
        throw Error(ErrorCode::predictor, "missing prediction file " + file.string());
    auto channels = io::read_float_raster(file);
    require(channels.size() == 3, "prediction file needs 3 channels: " + file.string(), ErrorCode::predictor);
    DensePrediction p;
    p.head = head;
    p.seg_prob = std::move(channels[0]);
    p.hv.h = std::move(channels[1]);
    p.hv.v = std::move(channels[2]);
    return p;
}

std::filesystem::path resolve_prediction_dir(const PredictorSpec& spec) {
    if (!spec.source_dir.empty()) return spec.source_dir;
    if (const char* env = std::getenv("PREDICTOR_DIR"); env && *env) return env;
    throw Error(ErrorCode::invalid_argument,
                "file-backed predictor needs a source directory or PREDICTOR_DIR");
}

FileBackedPredictor::FileBackedPredictor(PredictorSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    spec_.source_dir = resolve_prediction_dir(spec_);
}

std::vector<PredictionSet> FileBackedPredictor::predict(const TileBatch& batch) {
    std::vector<PredictionSet> out;
    out.reserve(batch.tiles.size());
    for (const auto& t : batch.tiles) {
        PredictionSet set;
        for (auto head : spec_.heads) {
            auto p = read_prediction(prediction_file(spec_.source_dir, head, t.tile.x, t.tile.y), head);
            if (p.width() != t.input_width || p.height() != t.input_height || !p.seg_prob.same_shape(p.hv.h) ||
                !p.seg_prob.same_shape(p.hv.v)) {
                throw Error(ErrorCode::predictor, "prediction shape mismatch for tile (" +
                                                      std::to_string(t.tile.x) + "," +
                                                      std::to_string(t.tile.y) + ")");
            }
            set.push_back(std::move(p));
        }
        out.push_back(std::move(set));
    }
    return out;
}

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec, const SlideReader& slide) {
    if (spec.kind == PredictorKind::file_backed) return std::make_unique<FileBackedPredictor>(spec);
    const TruthSource* truth = slide.truth();
    if (!truth)
        throw Error(ErrorCode::invalid_argument, "synthetic oracle needs a slide with ground truth");
    return std::make_unique<SyntheticOraclePredictor>(spec, *truth);
}

}  // namespace hvseg
