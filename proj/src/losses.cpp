#include "hvseg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "hvseg/error.hpp"

namespace hvseg {

double dice_loss(const ProbabilityMap& pred, const Mask& target) {
    require_same_shape(pred, target, "dice_loss");
    double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred[i];
        const double t = target[i] ? 1.0 : 0.0;
        inter += p * t;
        sum_p += p;
        sum_t += t;
    }
    return 1.0 - (2.0 * inter + kDiceSmoothing) / (sum_p + sum_t + kDiceSmoothing);
}

double focal_bce(const ProbabilityMap& pred, const Mask& target, double alpha, double gamma) {
    require_same_shape(pred, target, "focal_bce");
    if (pred.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(static_cast<double>(pred[i]), kProbabilityClamp,
                                    1.0 - kProbabilityClamp);
        const double pt = target[i] ? p : 1.0 - p;
        acc += alpha * std::pow(1.0 - pt, gamma) * -std::log(pt);
    }
    return acc / static_cast<double>(pred.size());
}

double binary_cross_entropy(const ProbabilityMap& pred, const Mask& target) {
    require_same_shape(pred, target, "binary_cross_entropy");
    if (pred.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(static_cast<double>(pred[i]), kProbabilityClamp,
                                    1.0 - kProbabilityClamp);
        const double y = target[i] ? 1.0 : 0.0;
        acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return acc / static_cast<double>(pred.size());
}

namespace {

void check_hv_shapes(const HVField& pred, const HVField& target, const Mask& fg,
                     const char* what) {
    require_same_shape(pred.h, pred.v, what);
    require_same_shape(target.h, target.v, what);
    require_same_shape(pred.h, target.h, what);
    require_same_shape(pred.h, fg, what);
}

}  // namespace

double hv_mse(const HVField& pred, const HVField& target, const Mask& foreground) {
    check_hv_shapes(pred, target, foreground, "hv_mse");
    if (pred.h.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.h.size(); ++i) {
        const double dh = static_cast<double>(pred.h[i]) - target.h[i];
        const double dv = static_cast<double>(pred.v[i]) - target.v[i];
        acc += dh * dh + dv * dv;
    }
    return acc / (2.0 * static_cast<double>(pred.h.size()));
}

double hv_msge(const HVField& pred, const HVField& target, const Mask& foreground) {
    check_hv_shapes(pred, target, foreground, "hv_msge");
    std::size_t fg_count = 0;
    for (auto m : foreground.data()) fg_count += m ? 1 : 0;
    if (fg_count == 0) return 0.0;

    const auto pdx = derivative_x(pred.h);
    const auto pdy = derivative_y(pred.v);
    const auto tdx = derivative_x(target.h);
    const auto tdy = derivative_y(target.v);
    double acc = 0.0;
    for (std::size_t i = 0; i < foreground.size(); ++i) {
        if (!foreground[i]) continue;
        const double gx = pdx[i] - tdx[i];
        const double gy = pdy[i] - tdy[i];
        acc += gx * gx + gy * gy;
    }
    return acc / (2.0 * static_cast<double>(fg_count));
}

LossWeights LossWeights::for_scheme(LossScheme scheme) {
    if (scheme == LossScheme::dual) return {1.0, 2.0, 2.0};
    return {1.0, 4.0, 2.0};
}

void LossWeights::validate() const {
    require(seg_weight >= 0 && hv_weight_nuclei >= 0 && hv_weight_cells >= 0,
            "loss weights must be non-negative");
}

CompositeLoss composite_loss(const std::vector<HeadLossInput>& heads, const LossWeights& weights) {
    require(!heads.empty(), "composite_loss: at least one head is required");
    weights.validate();
    CompositeLoss out;
    for (const auto& head : heads) {
        if (head.kind == HeadKind::cell && !head.annotated) continue;
        HeadLossTerms t;
        t.name = head.name;
        t.dice = dice_loss(head.seg_prob, head.seg_target);
        t.focal = focal_bce(head.seg_prob, head.seg_target);
        t.mse = hv_mse(head.hv_pred, head.hv_target, head.fg_mask);
        t.msge = hv_msge(head.hv_pred, head.hv_target, head.fg_mask);
        t.hv_weight = head.kind == HeadKind::nuclear ? weights.hv_weight_nuclei
                                                     : weights.hv_weight_cells;
        t.total = weights.seg_weight * (t.dice + t.focal) + t.hv_weight * (t.mse + t.msge);
        out.heads.push_back(std::move(t));
    }
    require(!out.heads.empty(), "composite_loss: every head was excluded");
    for (const auto& t : out.heads) out.total += t.total;
    out.total /= static_cast<double>(out.heads.size());
    return out;
}

CompositeLoss composite_loss(const std::vector<HeadLossInput>& heads, LossScheme scheme) {
    return composite_loss(heads, LossWeights::for_scheme(scheme));
}

}  // namespace hvseg
