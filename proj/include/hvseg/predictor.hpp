#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "hvseg/extraction.hpp"
#include "hvseg/geometry.hpp"
#include "hvseg/slide.hpp"

namespace hvseg {

enum class PredictorKind { synthetic_oracle, file_backed };

std::string to_string(PredictorKind kind);
PredictorKind predictor_kind_from_string(const std::string& s);  // synthetic|oracle|files|file_backed

struct NoiseSpec {
    double prob_sigma = 0.0;
    double hv_sigma = 0.0;
    int boundary_jitter_px = 0;
};

struct PredictorSpec {
    PredictorKind kind = PredictorKind::synthetic_oracle;
    std::vector<Head> heads{Head::he_nuclei};
    int batch_size = 8;
    NoiseSpec noise;
    std::filesystem::path source_dir;  // file_backed only
    std::uint64_t seed = 0;

    void validate() const;
};

struct TileInput {
    TileRef tile;          // working-resolution tile
    Rect source;           // slide region it was read from (may extend past the slide)
    int input_width = 0;   // predictor input size; exceeds the tile when a small
    int input_height = 0;  // slide is padded up to the tile size
    Image pixels;          // input_width x input_height RGB, may be left empty
};

struct TileBatch {
    std::vector<TileInput> tiles;
};

// One DensePrediction per requested head, in PredictorSpec::heads order.
using PredictionSet = std::vector<DensePrediction>;

class Predictor {
public:
    virtual ~Predictor() = default;
    // Output order matches input order. Must be safe to call concurrently.
    virtual std::vector<PredictionSet> predict(const TileBatch& batch) = 0;
    virtual const PredictorSpec& spec() const = 0;
};

// Oracle: emits the hidden truth as prediction (indicator probability and HV
// targets), optionally perturbed. Noise is seeded per tile from
// (seed, tile origin), so results do not depend on batching or call order.
class SyntheticOraclePredictor : public Predictor {
public:
    SyntheticOraclePredictor(PredictorSpec spec, const TruthSource& truth);
    std::vector<PredictionSet> predict(const TileBatch& batch) override;
    const PredictorSpec& spec() const override { return spec_; }

    DensePrediction predict_tile(const TileInput& tile, Head head) const;

private:
    PredictorSpec spec_;
    const TruthSource& truth_;
};

// Loads `<head>_<x>_<y>.f32` float rasters (channels: probability, h, v)
// keyed by tile origin.
class FileBackedPredictor : public Predictor {
public:
    explicit FileBackedPredictor(PredictorSpec spec);
    std::vector<PredictionSet> predict(const TileBatch& batch) override;
    const PredictorSpec& spec() const override { return spec_; }

private:
    PredictorSpec spec_;
};

std::filesystem::path prediction_file(const std::filesystem::path& dir, Head head, int x, int y);
void write_prediction(const std::filesystem::path& dir, const TileRef& tile, const DensePrediction& pred);
DensePrediction read_prediction(const std::filesystem::path& file, Head head);

// Directory for file-backed predictions: spec.source_dir, else $PREDICTOR_DIR.
std::filesystem::path resolve_prediction_dir(const PredictorSpec& spec);

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec, const SlideReader& slide);

// Deterministic truth-based jitter: each instance grows or shrinks by up to
// `radius` pixels (4-neighbour steps), never into another instance.
LabelMap jitter_boundaries(const LabelMap& labels, int radius, std::uint64_t seed);

}  // namespace hvseg
