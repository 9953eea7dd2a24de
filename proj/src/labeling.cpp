#include "hvseg/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>
#include <unordered_map>

namespace hvseg {

namespace {

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

// Flood fill over pixels accepted by `same`, writing `id` into `out`.
template <typename Pred>
void flood(int sx, int sy, std::uint32_t id, LabelMap& out, Pred same,
           std::vector<std::pair<int, int>>& stack) {
    stack.clear();
    stack.emplace_back(sx, sy);
    out(sx, sy) = id;
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx[k];
            const int ny = y + kDy[k];
            if (!out.contains(nx, ny) || out(nx, ny) != 0 || !same(nx, ny)) continue;
            out(nx, ny) = id;
            stack.emplace_back(nx, ny);
        }
    }
}

}  // namespace

LabelMap connected_components(const Mask& mask) {
    LabelMap out(mask.width(), mask.height(), 0);
    std::vector<std::pair<int, int>> stack;
    std::uint32_t next = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask(x, y) || out(x, y) != 0) continue;
            flood(x, y, ++next, out, [&](int nx, int ny) { return mask(nx, ny) != 0; }, stack);
        }
    }
    return out;
}

LabelMap relabel_sequential(const LabelMap& labels) {
    LabelMap out(labels.width(), labels.height(), 0);
    std::unordered_map<std::uint32_t, std::uint32_t> remap;
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto id = labels[i];
        if (id == 0) continue;
        auto [it, inserted] = remap.try_emplace(id, next + 1);
        if (inserted) ++next;
        out[i] = it->second;
    }
    return out;
}

LabelMap enforce_connectivity(const LabelMap& labels) {
    LabelMap out(labels.width(), labels.height(), 0);
    std::vector<std::pair<int, int>> stack;
    std::uint32_t next = 0;
    for (int y = 0; y < labels.height(); ++y) {
        for (int x = 0; x < labels.width(); ++x) {
            const auto id = labels(x, y);
            if (id == 0 || out(x, y) != 0) continue;
            flood(x, y, ++next, out, [&](int nx, int ny) { return labels(nx, ny) == id; }, stack);
        }
    }
    return out;
}

LabelMap remove_small_instances(const LabelMap& labels, std::size_t min_pixels) {
    std::unordered_map<std::uint32_t, std::size_t> counts;
    for (auto id : labels.data())
        if (id != 0) ++counts[id];
    LabelMap out = labels;
    for (auto& id : out.storage())
        if (id != 0 && counts[id] < min_pixels) id = 0;
    return out;
}

LabelMap fill_instance_holes(const LabelMap& labels) {
    const int w = labels.width();
    const int h = labels.height();
    // Background reachable from the border (4-connected through zero pixels).
    Mask outside(w, h, 0);
    std::vector<std::pair<int, int>> stack;
    auto seed = [&](int x, int y) {
        if (labels(x, y) == 0 && !outside(x, y)) {
            outside(x, y) = 1;
            stack.emplace_back(x, y);
        }
    };
    for (int x = 0; x < w; ++x) {
        seed(x, 0);
        seed(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        seed(0, y);
        seed(w - 1, y);
    }
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx[k], ny = y + kDy[k];
            if (labels.contains(nx, ny) && labels(nx, ny) == 0 && !outside(nx, ny)) {
                outside(nx, ny) = 1;
                stack.emplace_back(nx, ny);
            }
        }
    }

    // Each enclosed pocket goes to the instance it borders most.
    LabelMap out = labels;
    LabelMap pocket_ids(w, h, 0);
    std::uint32_t next = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (labels(x, y) != 0 || outside(x, y) || pocket_ids(x, y) != 0) continue;
            ++next;
            std::vector<std::pair<int, int>> pixels;
            std::unordered_map<std::uint32_t, std::size_t> border;
            stack.clear();
            stack.emplace_back(x, y);
            pocket_ids(x, y) = next;
            while (!stack.empty()) {
                auto [px, py] = stack.back();
                stack.pop_back();
                pixels.emplace_back(px, py);
                for (int k = 0; k < 4; ++k) {
                    const int nx = px + kDx[k], ny = py + kDy[k];
                    if (!labels.contains(nx, ny)) continue;
                    const auto id = labels(nx, ny);
                    if (id != 0) {
                        ++border[id];
                    } else if (pocket_ids(nx, ny) == 0) {
                        pocket_ids(nx, ny) = next;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
            std::uint32_t best = 0;
            std::size_t best_count = 0;
            for (auto [id, count] : border) {
                if (count > best_count || (count == best_count && id < best)) {
                    best = id;
                    best_count = count;
                }
            }
            for (auto [px, py] : pixels) out(px, py) = best;
        }
    }
    return out;
}

namespace {

// Felzenszwalb & Huttenlocher 1D squared distance transform of f (in place).
// Every line handed in contains at least one zero, so the sentinel never survives.
void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (int q = 1; q < n; ++q) {
        double s = 0.0;
        while (true) {
            const int p = v[k];
            s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
                (2.0 * (q - p));
            if (s > z[k]) break;
            --k;  // z[0] is -inf, so k stays >= 0
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
    f.swap(d);
}

}  // namespace

Raster<float> distance_transform(const Mask& mask) {
    // Pad by one so the raster border acts as background.
    const int w = mask.width() + 2;
    const int h = mask.height() + 2;
    constexpr double kFar = 1e12;  // above any squared distance we produce
    std::vector<double> grid(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            grid[static_cast<std::size_t>(y + 1) * w + (x + 1)] = mask(x, y) ? kFar : 0.0;

    const int n = std::max(w, h);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    for (int x = 0; x < w; ++x) {
        f.resize(h);
        d.resize(h);
        for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
        edt_1d(f, d, v, z);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = f[y];
    }
    for (int y = 0; y < h; ++y) {
        f.resize(w);
        d.resize(w);
        for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
        edt_1d(f, d, v, z);
        for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = f[x];
    }
    Raster<float> out(mask.width(), mask.height(), 0.0f);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            out(x, y) = static_cast<float>(std::sqrt(grid[static_cast<std::size_t>(y + 1) * w + (x + 1)]));
    return out;
}

LabelMap marker_watershed(const Raster<double>& elevation, const LabelMap& markers,
                          const Mask& mask) {
    require_same_shape(elevation, markers, "marker_watershed");
    require_same_shape(elevation, mask, "marker_watershed");
    const int w = markers.width();

    using Entry = std::tuple<double, std::uint32_t, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    LabelMap out = markers;

    auto push_neighbors = [&](std::size_t idx, std::uint32_t id) {
        const int x = static_cast<int>(idx % static_cast<std::size_t>(w));
        const int y = static_cast<int>(idx / static_cast<std::size_t>(w));
        for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx[k], ny = y + kDy[k];
            if (!out.contains(nx, ny) || out(nx, ny) != 0 || !mask(nx, ny)) continue;
            queue.emplace(elevation(nx, ny), id, out.index(nx, ny));
        }
    };

    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] != 0) push_neighbors(i, out[i]);

    while (!queue.empty()) {
        auto [elev, id, idx] = queue.top();
        queue.pop();
        if (out[idx] != 0) continue;
        out[idx] = id;
        push_neighbors(idx, id);
    }
    return out;
}

std::vector<std::uint32_t> unique_ids(const LabelMap& labels) {
    std::vector<std::uint32_t> ids;
    for (auto id : labels.data())
        if (id != 0) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::uint32_t max_id(const LabelMap& labels) {
    std::uint32_t m = 0;
    for (auto id : labels.data()) m = std::max(m, id);
    return m;
}

Mask threshold(const Raster<float>& prob, float min_value) {
    Mask out(prob.width(), prob.height(), 0);
    for (std::size_t i = 0; i < prob.size(); ++i) out[i] = prob[i] >= min_value ? 1 : 0;
    return out;
}

Mask foreground_of(const LabelMap& labels) {
    Mask out(labels.width(), labels.height(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] != 0 ? 1 : 0;
    return out;
}

}  // namespace hvseg
