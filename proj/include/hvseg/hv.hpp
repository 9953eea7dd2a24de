#pragma once

#include <array>
#include <vector>

#include "hvseg/raster.hpp"

namespace hvseg {

// Per-pixel horizontal/vertical offsets from each instance's center of mass,
// scaled into [-1, 1]. Background pixels are exactly zero.
struct HVField {
    Raster<float> h;
    Raster<float> v;

    HVField() = default;
    HVField(int width, int height) : h(width, height, 0.0f), v(width, height, 0.0f) {}

    int width() const noexcept { return h.width(); }
    int height() const noexcept { return h.height(); }
    friend bool operator==(const HVField&, const HVField&) = default;
};

HVField generate_hv_maps(const LabelMap& labels);

// 5x5 derivative kernel k(i, j) = j / (i^2 + j^2 + 1e-15), indexed
// [row offset + 2][column offset + 2]. The vertical kernel is its transpose.
using DerivativeKernel = std::array<std::array<double, 5>, 5>;
const DerivativeKernel& horizontal_derivative_kernel();

// Correlation with the kernel above; borders replicate the edge pixel.
Raster<double> derivative_x(const Raster<float>& field);
Raster<double> derivative_y(const Raster<float>& field);

struct HVStats {
    float h_min = 0, h_max = 0, v_min = 0, v_max = 0;
    std::size_t instance_count = 0;
};
HVStats hv_stats(const HVField& field, const LabelMap& labels);

}  // namespace hvseg
