#pragma once

#include <cstdint>
#include <string>

#include "hvseg/geometry.hpp"
#include "hvseg/hv.hpp"
#include "hvseg/raster.hpp"

namespace hvseg {

enum class Head { he_nuclei, he_cells, mif_nuclei, mif_cells };

std::string to_string(Head head);
Head head_from_string(const std::string& s);
bool is_cell_head(Head head);
// The nuclear head of the same modality (identity for nuclear heads).
Head nuclei_head_for(Head head);
Modality modality_of(Head head);

struct DensePrediction {
    Head head = Head::he_nuclei;
    ProbabilityMap seg_prob;
    HVField hv;

    int width() const noexcept { return seg_prob.width(); }
    int height() const noexcept { return seg_prob.height(); }
    void validate() const;
    friend bool operator==(const DensePrediction&, const DensePrediction&) = default;
};

struct ExtractionParams {
    double prob_threshold = 0.5;
    double grad_threshold = 0.4;
    int min_marker_px = 10;
    int min_instance_px = 10;
    int min_anucleate_px = 30;
    int seed_min_distance_px = 10;

    void validate() const;
};

// Energy S = max(1 - mm(dh/dx), 1 - mm(dv/dy)), mm being min-max normalization
// over `foreground`; zero elsewhere.
Raster<double> hv_energy(const HVField& hv, const Mask& foreground);

// Nuclei (or any instance head) from probability + HV via marker-controlled
// watershed. Ids are contiguous from 1 in raster order of first occurrence.
LabelMap extract_instances_hv(const DensePrediction& pred, const ExtractionParams& params);

// Whole cells seeded by nuclei. Each cell id equals the id of its nucleus; a
// nucleus outside the cell foreground becomes its own degenerate cell.
LabelMap extract_cells_constrained(const DensePrediction& cell_pred, const LabelMap& nuclei,
                                   const ExtractionParams& params);

// Residual cell foreground without nuclei, split at distance-transform maxima.
// New ids start after the current maximum; existing labels are untouched.
LabelMap recover_anucleate_cells(const LabelMap& cells, const ProbabilityMap& cell_prob,
                                 const LabelMap& nuclei, const ExtractionParams& params);

}  // namespace hvseg
