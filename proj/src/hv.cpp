#include "hvseg/hv.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace hvseg {

namespace {

struct Moments {
    double sum_x = 0.0;
    double sum_y = 0.0;
    std::size_t count = 0;
    // Extremes of (coord - center) on each side, filled in a second pass.
    double max_dx = 0.0, min_dx = 0.0, max_dy = 0.0, min_dy = 0.0;
};

}  // namespace

HVField generate_hv_maps(const LabelMap& labels) {
    const int w = labels.width();
    const int h = labels.height();
    HVField out(w, h);

    std::unordered_map<std::uint32_t, Moments> moments;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto id = labels(x, y);
            if (id == 0) continue;
            auto& m = moments[id];
            m.sum_x += x;
            m.sum_y += y;
            ++m.count;
        }
    }
    for (auto& [id, m] : moments) {
        m.sum_x /= static_cast<double>(m.count);  // now the center of mass
        m.sum_y /= static_cast<double>(m.count);
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto id = labels(x, y);
            if (id == 0) continue;
            auto& m = moments[id];
            const double dx = x - m.sum_x;
            const double dy = y - m.sum_y;
            m.max_dx = std::max(m.max_dx, dx);
            m.min_dx = std::min(m.min_dx, dx);
            m.max_dy = std::max(m.max_dy, dy);
            m.min_dy = std::min(m.min_dy, dy);
        }
    }

    auto scale = [](double d, double pos_extent, double neg_extent) -> float {
        if (d > 0.0) return pos_extent > 0.0 ? static_cast<float>(d / pos_extent) : 0.0f;
        if (d < 0.0) return neg_extent < 0.0 ? static_cast<float>(d / -neg_extent) : 0.0f;
        return 0.0f;
    };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto id = labels(x, y);
            if (id == 0) continue;
            const auto& m = moments.at(id);
            if (m.count == 1) continue;
            out.h(x, y) = std::clamp(scale(x - m.sum_x, m.max_dx, m.min_dx), -1.0f, 1.0f);
            out.v(x, y) = std::clamp(scale(y - m.sum_y, m.max_dy, m.min_dy), -1.0f, 1.0f);
        }
    }
    return out;
}

const DerivativeKernel& horizontal_derivative_kernel() {
    static const DerivativeKernel kernel = [] {
        DerivativeKernel k{};
        for (int i = -2; i <= 2; ++i)
            for (int j = -2; j <= 2; ++j)
                k[i + 2][j + 2] = static_cast<double>(j) / (i * i + j * j + 1e-15);
        return k;
    }();
    return kernel;
}

namespace {

template <bool Horizontal>
Raster<double> derivative(const Raster<float>& f) {
    const auto& k = horizontal_derivative_kernel();
    const int w = f.width();
    const int h = f.height();
    Raster<double> out(w, h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -2; i <= 2; ++i) {
                for (int j = -2; j <= 2; ++j) {
                    if (j == 0 && Horizontal) continue;
                    if (i == 0 && !Horizontal) continue;
                    // Vertical kernel is the transpose: weight i / (i^2 + j^2).
                    const double weight = Horizontal ? k[i + 2][j + 2] : k[j + 2][i + 2];
                    acc += weight * f.clamped(x + j, y + i);
                }
            }
            out(x, y) = acc;
        }
    }
    return out;
}

}  // namespace

Raster<double> derivative_x(const Raster<float>& field) { return derivative<true>(field); }
Raster<double> derivative_y(const Raster<float>& field) { return derivative<false>(field); }

HVStats hv_stats(const HVField& field, const LabelMap& labels) {
    HVStats s;
    if (!field.h.empty()) {
        auto [hmin, hmax] = std::minmax_element(field.h.data().begin(), field.h.data().end());
        auto [vmin, vmax] = std::minmax_element(field.v.data().begin(), field.v.data().end());
        s.h_min = *hmin;
        s.h_max = *hmax;
        s.v_min = *vmin;
        s.v_max = *vmax;
    }
    std::unordered_set<std::uint32_t> ids;
    for (auto id : labels.data())
        if (id != 0) ids.insert(id);
    s.instance_count = ids.size();
    return s;
}

}  // namespace hvseg
