#include <gtest/gtest.h>

#include <cmath>

#include "hvseg/error.hpp"
#include "hvseg/losses.hpp"
#include "support/oracles.hpp"

using namespace hvseg;

namespace {

HVField random_field(oracle::Rng& rng, int w, int h) {
    HVField f(w, h);
    for (std::size_t i = 0; i < f.h.size(); ++i) {
        f.h[i] = static_cast<float>(rng.uniform(-1, 1));
        f.v[i] = static_cast<float>(rng.uniform(-1, 1));
    }
    return f;
}

HeadLossInput random_head(oracle::Rng& rng, HeadKind kind, const std::string& name) {
    const int w = 16, h = 12;
    HeadLossInput in;
    in.name = name;
    in.kind = kind;
    in.seg_prob = ProbabilityMap(w, h);
    in.seg_target = Mask(w, h);
    in.fg_mask = Mask(w, h);
    for (std::size_t i = 0; i < in.seg_prob.size(); ++i) {
        in.seg_prob[i] = static_cast<float>(rng.uniform());
        in.seg_target[i] = rng.coin() ? 1 : 0;
        in.fg_mask[i] = in.seg_target[i];
    }
    in.hv_pred = random_field(rng, w, h);
    in.hv_target = random_field(rng, w, h);
    return in;
}

}  // namespace

TEST(DiceLoss, Examples) {
    ProbabilityMap p(10, 20, 0.0f);
    Mask t(10, 20, 0);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) t(x, y) = 1;  // 100 px target
    EXPECT_NEAR(dice_loss(p, t), 1.0, 1e-6);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 10; ++x) p(x, y) = 1.0f;  // half the target
    EXPECT_NEAR(dice_loss(p, t), 1.0 - 100.0 / 150.0, 1e-6);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = t[i];
    EXPECT_NEAR(dice_loss(p, t), 0.0, 1e-6);
}

TEST(FocalLoss, SinglePixel) {
    ProbabilityMap p(1, 1, 0.5f);
    Mask t(1, 1, 1);
    EXPECT_NEAR(focal_bce(p, t, 1.0, 2.0), 0.25 * std::log(2.0), 1e-12);
    EXPECT_NEAR(focal_bce(p, t, 1.0, 2.0), 0.173287, 5e-7);
}

TEST(FocalLoss, PerfectPredictionNearZero) {
    ProbabilityMap p(8, 8, 0.0f);
    Mask t(8, 8, 0);
    for (int i = 0; i < 32; ++i) p[i] = 1.0f, t[i] = 1;
    EXPECT_LT(focal_bce(p, t), 1e-5);
}

TEST(FocalLoss, GammaZeroIsCrossEntropy) {
    oracle::Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const int w = rng.integer(1, 30), h = rng.integer(1, 30);
        ProbabilityMap p(w, h);
        Mask t(w, h);
        double want = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = static_cast<float>(rng.uniform());
            t[i] = rng.coin() ? 1 : 0;
            want += oracle::bce(p[i], t[i]);
        }
        want /= static_cast<double>(p.size());
        EXPECT_NEAR(focal_bce(p, t, 1.0, 0.0), binary_cross_entropy(p, t), 1e-9);
        EXPECT_NEAR(binary_cross_entropy(p, t), want, 1e-9);
    }
}

TEST(HvMse, Examples) {
    oracle::Rng rng(2);
    const HVField target = random_field(rng, 9, 7);
    const Mask fg(9, 7, 1);
    EXPECT_EQ(hv_mse(target, target, fg), 0.0);
    HVField pred = target;
    pred.h(4, 3) += 0.5f;
    const double n = 63;
    const double d = static_cast<double>(pred.h(4, 3)) - target.h(4, 3);  // 0.5 after float rounding
    EXPECT_NEAR(hv_mse(pred, target, fg), d * d / (2 * n), 1e-15);
    EXPECT_NEAR(hv_mse(pred, target, fg), 0.25 / (2 * n), 1e-8);
    EXPECT_EQ(hv_mse(HVField(4, 4), HVField(4, 4), Mask(4, 4, 1)), 0.0);
}

TEST(HvMsge, Examples) {
    oracle::Rng rng(4);
    const HVField target = random_field(rng, 16, 16);
    Mask fg(16, 16, 0);
    for (int y = 3; y < 12; ++y)
        for (int x = 2; x < 14; ++x) fg(x, y) = 1;
    EXPECT_EQ(hv_msge(target, target, fg), 0.0);
    EXPECT_EQ(hv_msge(random_field(rng, 16, 16), target, Mask(16, 16, 0)), 0.0);
    EXPECT_GT(hv_msge(random_field(rng, 16, 16), target, fg), 0.0);
}

TEST(HvMsge, ConstantOffsetInvariance) {
    oracle::Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const HVField target = random_field(rng, 16, 16);
        HVField pred = target;
        const float c = static_cast<float>(rng.uniform(-0.5, 0.5));
        for (std::size_t i = 0; i < pred.h.size(); ++i) {
            pred.h[i] += c;
            pred.v[i] += c;
        }
        Mask fg(16, 16, 0);
        for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = rng.coin(0.7) ? 1 : 0;
        // Only float rounding of the offset survives the differencing.
        EXPECT_NEAR(hv_msge(pred, target, fg), 0.0, 1e-9);
    }
}

TEST(Composite, RequiresHeads) {
    EXPECT_THROW(composite_loss({}, LossScheme::dual), Error);
}

TEST(Composite, PerfectHeadIsNearZero) {
    oracle::Rng rng(1);
    HeadLossInput in = random_head(rng, HeadKind::nuclear, "n");
    for (std::size_t i = 0; i < in.seg_prob.size(); ++i) in.seg_prob[i] = in.seg_target[i];
    in.hv_pred = in.hv_target;
    EXPECT_LT(composite_loss({in}, LossScheme::dual).total, 1e-5);
}

TEST(Composite, IdenticalHeadsAverage) {
    oracle::Rng rng(2);
    const HeadLossInput in = random_head(rng, HeadKind::nuclear, "n");
    const double one = composite_loss({in}, LossScheme::dual).total;
    EXPECT_EQ(composite_loss({in, in}, LossScheme::dual).total, one);
}

TEST(Composite, SchemeWeights) {
    oracle::Rng rng(3);
    const HeadLossInput nuc = random_head(rng, HeadKind::nuclear, "nuclei");
    const HeadLossInput cell = random_head(rng, HeadKind::cell, "cells");
    const auto dual = composite_loss({nuc, cell}, LossScheme::dual);
    const auto flex = composite_loss({nuc, cell}, LossScheme::flex);
    ASSERT_EQ(dual.heads.size(), 2u);
    EXPECT_EQ(dual.heads[0].hv_weight, 2.0);
    EXPECT_EQ(dual.heads[1].hv_weight, 2.0);
    EXPECT_EQ(flex.heads[0].hv_weight, 4.0);
    EXPECT_EQ(flex.heads[1].hv_weight, 2.0);
    for (const auto& t : flex.heads)
        EXPECT_EQ(t.total, (t.dice + t.focal) + t.hv_weight * (t.mse + t.msge));
    EXPECT_EQ(flex.total, (flex.heads[0].total + flex.heads[1].total) / 2.0);
}

// Seg loss exactly zero: empty rasters give dice 1 - s/s = 0 and focal 0, so
// the head total is the weighted hv term alone. Here the hv term is built from
// a one-pixel field with only the mse part nonzero.
TEST(Composite, FlexNuclearContributesFourTimesHvTerm) {
    HeadLossInput in;
    in.name = "n";
    in.kind = HeadKind::nuclear;
    in.seg_prob = ProbabilityMap(0, 0);
    in.seg_target = Mask(0, 0);
    in.fg_mask = Mask(0, 0);
    in.hv_pred = HVField(0, 0);
    in.hv_target = HVField(0, 0);
    auto zero = composite_loss({in}, LossScheme::flex);
    EXPECT_EQ(zero.total, 0.0);

    HeadLossInput one;
    one.name = "n";
    one.kind = HeadKind::nuclear;
    one.seg_prob = ProbabilityMap(1, 1, 0.0f);
    one.seg_target = Mask(1, 1, 0);
    one.fg_mask = Mask(1, 1, 0);
    one.hv_pred = HVField(1, 1);
    one.hv_target = HVField(1, 1);
    one.hv_pred.h(0, 0) = 0.5f;
    const auto flex = composite_loss({one}, LossScheme::flex).heads[0];
    const auto dual = composite_loss({one}, LossScheme::dual).heads[0];
    const double t = 0.25 / 2.0;  // mse over 2 channels, msge masked out
    EXPECT_EQ(flex.mse, t);
    EXPECT_EQ(flex.msge, 0.0);
    EXPECT_EQ(flex.total - (flex.dice + flex.focal), 4.0 * t);
    EXPECT_EQ(dual.total - (dual.dice + dual.focal), 2.0 * t);
}

TEST(Composite, UnannotatedCellHeadSkipped) {
    oracle::Rng rng(5);
    HeadLossInput nuc = random_head(rng, HeadKind::nuclear, "n");
    HeadLossInput cell = random_head(rng, HeadKind::cell, "c");
    cell.annotated = false;
    const auto r = composite_loss({nuc, cell}, LossScheme::dual);
    ASSERT_EQ(r.heads.size(), 1u);
    EXPECT_EQ(r.total, r.heads[0].total);
    EXPECT_THROW(composite_loss({cell}, LossScheme::dual), Error);
}
