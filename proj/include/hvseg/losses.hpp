#pragma once

#include <string>
#include <vector>

#include "hvseg/hv.hpp"
#include "hvseg/raster.hpp"

namespace hvseg {

// Forward evaluations of the training objective. No gradients.

inline constexpr double kDiceSmoothing = 1e-5;
inline constexpr double kProbabilityClamp = 1e-7;

double dice_loss(const ProbabilityMap& pred, const Mask& target);
double focal_bce(const ProbabilityMap& pred, const Mask& target, double alpha = 1.0,
                 double gamma = 2.0);
// Mean binary cross-entropy with the same clamping as focal_bce.
double binary_cross_entropy(const ProbabilityMap& pred, const Mask& target);

// Mean squared error over both channels and every pixel. `foreground` is only
// shape-checked.
double hv_mse(const HVField& pred, const HVField& target, const Mask& foreground);
// Squared differences of d(h)/dx and d(v)/dy averaged over foreground pixels
// of both channels; 0 when the mask is empty.
double hv_msge(const HVField& pred, const HVField& target, const Mask& foreground);

enum class LossScheme { dual, flex };
enum class HeadKind { nuclear, cell };

struct LossWeights {
    double seg_weight = 1.0;
    double hv_weight_nuclei = 2.0;
    double hv_weight_cells = 2.0;

    static LossWeights for_scheme(LossScheme scheme);
    void validate() const;
};

struct HeadLossInput {
    std::string name;
    HeadKind kind = HeadKind::nuclear;
    // Cell heads from datasets without whole-cell labels are skipped.
    bool annotated = true;
    ProbabilityMap seg_prob;
    HVField hv_pred;
    Mask seg_target;
    HVField hv_target;
    Mask fg_mask;
};

struct HeadLossTerms {
    std::string name;
    double dice = 0.0;
    double focal = 0.0;
    double mse = 0.0;
    double msge = 0.0;
    double hv_weight = 0.0;
    double total = 0.0;
};

struct CompositeLoss {
    double total = 0.0;
    std::vector<HeadLossTerms> heads;  // included heads only
};

// Per head: seg_weight * (dice + focal) + w_hv * (mse + msge); averaged over heads.
CompositeLoss composite_loss(const std::vector<HeadLossInput>& heads, const LossWeights& weights);
CompositeLoss composite_loss(const std::vector<HeadLossInput>& heads, LossScheme scheme);

}  // namespace hvseg
