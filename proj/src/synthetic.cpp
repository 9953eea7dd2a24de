#include "hvseg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_set>

#include "hvseg/error.hpp"
#include "hvseg/labeling.hpp"

namespace hvseg::synthetic {

double Ellipse::normalized_distance(double x, double y) const noexcept {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    return std::sqrt(u * u + v * v);
}

double Ellipse::radius_towards(double phi) const noexcept {
    const double t = phi - angle;
    const double a = std::cos(t) / rx, b = std::sin(t) / ry;
    return 1.0 / std::sqrt(a * a + b * b);
}

Ellipse Ellipse::scaled(double factor) const noexcept {
    Ellipse e = *this;
    e.rx *= factor;
    e.ry *= factor;
    return e;
}

LabelMap rasterize_ellipses(const std::vector<Ellipse>& ellipses, int width, int height) {
    LabelMap out(width, height, 0);
    Raster<double> best(width, height, 2.0);
    for (std::size_t k = 0; k < ellipses.size(); ++k) {
        const auto& e = ellipses[k];
        const double r = std::max(e.rx, e.ry);
        const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - r)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(e.cx + r)));
        const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - r)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(e.cy + r)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double d = e.normalized_distance(x, y);
                if (d <= 1.0 && d < best(x, y)) {
                    best(x, y) = d;
                    out(x, y) = static_cast<std::uint32_t>(k + 1);
                }
            }
        }
    }
    return out;
}

double touching_fraction(const LabelMap& labels) {
    std::unordered_set<std::uint32_t> touching;
    for (int y = 0; y < labels.height(); ++y) {
        for (int x = 0; x < labels.width(); ++x) {
            const auto a = labels(x, y);
            if (a == 0) continue;
            if (x + 1 < labels.width()) {
                const auto b = labels(x + 1, y);
                if (b != 0 && b != a) touching.insert(a), touching.insert(b);
            }
            if (y + 1 < labels.height()) {
                const auto b = labels(x, y + 1);
                if (b != 0 && b != a) touching.insert(a), touching.insert(b);
            }
        }
    }
    const auto n = unique_ids(labels).size();
    return n == 0 ? 0.0 : static_cast<double>(touching.size()) / static_cast<double>(n);
}

EllipseMap random_ellipse_map(std::uint64_t seed, const EllipseMapOptions& opt) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double pi = std::numbers::pi;
    auto sample_shape = [&] {
        Ellipse e;
        e.rx = 0.5 * (opt.min_diameter + unit(rng) * (opt.max_diameter - opt.min_diameter));
        e.ry = 0.5 * (opt.min_diameter + unit(rng) * (opt.max_diameter - opt.min_diameter));
        e.angle = unit(rng) * pi;
        return e;
    };
    auto grown = [](Ellipse e, double margin) {
        e.rx += margin;
        e.ry += margin;
        return e;
    };
    // Boundary sampling is dense enough for the radii used here.
    auto overlaps = [&](const Ellipse& a, const Ellipse& b) {
        if (a.normalized_distance(b.cx, b.cy) <= 1.0 || b.normalized_distance(a.cx, a.cy) <= 1.0) return true;
        for (const auto* q : {&a, &b}) {
            const auto& o = q == &a ? b : a;
            const double c = std::cos(q->angle), sn = std::sin(q->angle);
            for (int i = 0; i < 256; ++i) {
                const double t = 2.0 * pi * i / 256.0;
                const double u = q->rx * std::cos(t), v = q->ry * std::sin(t);
                if (o.normalized_distance(q->cx + c * u - sn * v, q->cy + sn * u + c * v) <= 1.0) return true;
            }
        }
        return false;
    };
    auto shared_pixels = [](const Ellipse& a, const Ellipse& b) {
        const double r = std::max(a.rx, a.ry);
        std::size_t n = 0;
        for (int y = static_cast<int>(std::floor(a.cy - r)); y <= static_cast<int>(std::ceil(a.cy + r)); ++y)
            for (int x = static_cast<int>(std::floor(a.cx - r)); x <= static_cast<int>(std::ceil(a.cx + r)); ++x)
                n += a.normalized_distance(x, y) <= 1.0 && b.normalized_distance(x, y) <= 1.0;
        return n;
    };
    auto fits = [&](const Ellipse& e) {
        const double r = std::max(e.rx, e.ry);
        return e.cx - r >= 1 && e.cy - r >= 1 && e.cx + r <= opt.width - 2 &&
               e.cy + r <= opt.height - 2;
    };

    EllipseMap map;
    std::vector<int> touch_count;
    std::vector<int> partners;
    const int max_touching = static_cast<int>(std::floor(opt.max_touching_fraction * opt.target_count));
    int touching_instances = 0;
    for (int attempt = 0; attempt < 4000 && static_cast<int>(map.ellipses.size()) < opt.target_count;
         ++attempt) {
        Ellipse e = sample_shape();
        int partner = -1;
        if (!map.ellipses.empty() && touching_instances + 2 <= max_touching && unit(rng) < 0.35) {
            partner = static_cast<int>(rng() % map.ellipses.size());
            if (touch_count[partner] > 0) {
                partner = -1;
            } else {
                const auto& p = map.ellipses[partner];
                const double phi = unit(rng) * 2.0 * pi;
                // Overlap by one pixel so the pair shares a border after rasterization.
                const double d = p.radius_towards(phi) + e.radius_towards(phi + pi) - 1.0;
                e.cx = p.cx + d * std::cos(phi);
                e.cy = p.cy + d * std::sin(phi);
            }
        }
        if (partner < 0) {
            e.cx = unit(rng) * opt.width;
            e.cy = unit(rng) * opt.height;
        }
        if (!fits(e)) continue;
        if (partner >= 0) {
            // Partners share a thin seam, never a chunk of each other.
            const auto& p = map.ellipses[partner];
            const double small = pi * std::min(p.rx * p.ry, e.rx * e.ry);
            const auto shared = shared_pixels(e, p);
            if (shared == 0 || static_cast<double>(shared) > std::max(4.0, 0.03 * small)) continue;
        }
        bool ok = true;
        for (std::size_t k = 0; k < map.ellipses.size() && ok; ++k) {
            if (static_cast<int>(k) == partner) continue;
            // Non-partners stay clear, counting the cell halo around each nucleus.
            if (overlaps(grown(map.ellipses[k].scaled(opt.cell_scale), 1.5), grown(e.scaled(opt.cell_scale), 1.5)))
                ok = false;
        }
        if (!ok) continue;
        map.ellipses.push_back(e);
        touch_count.push_back(partner >= 0 ? 1 : 0);
        partners.push_back(partner);
        if (partner >= 0) {
            ++touch_count[partner];
            touching_instances += 2;
        }
    }
    // The budget above assumes target_count placements; drop the newest touching
    // partners when fewer ellipses fit.
    while (touching_instances > 0 &&
           touching_instances > opt.max_touching_fraction * static_cast<double>(map.ellipses.size())) {
        std::size_t k = partners.size();
        while (partners[--k] < 0) {}
        --touch_count[partners[k]];
        map.ellipses.erase(map.ellipses.begin() + static_cast<std::ptrdiff_t>(k));
        partners.erase(partners.begin() + static_cast<std::ptrdiff_t>(k));
        touch_count.erase(touch_count.begin() + static_cast<std::ptrdiff_t>(k));
        touching_instances -= 2;
    }
    map.nuclei = rasterize_ellipses(map.ellipses, opt.width, opt.height);
    std::vector<Ellipse> cells;
    for (const auto& e : map.ellipses) cells.push_back(e.scaled(opt.cell_scale));
    map.cells = rasterize_ellipses(cells, opt.width, opt.height);
    // A nucleus pixel always lies in its own cell (normalized distances scale
    // uniformly), but clip defensively in case of ties.
    for (std::size_t i = 0; i < map.nuclei.size(); ++i)
        if (map.nuclei[i] != 0) map.cells[i] = map.nuclei[i];
    map.touching_fraction = touching_fraction(map.nuclei);
    return map;
}

namespace {

std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double uniform(std::uint64_t& state) {
    return static_cast<double>(splitmix(state) >> 11) * 0x1.0p-53;
}

std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

ProceduralSlide::ProceduralSlide(SlideSpec spec) : spec_(spec) {
    require(spec_.width >= 1 && spec_.height >= 1, "synthetic slide dimensions must be positive");
    require(spec_.pitch >= 8.0, "synthetic slide pitch too small");
    require(spec_.cell_radius_min > 0 && spec_.cell_radius_max >= spec_.cell_radius_min,
            "invalid synthetic cell radii");
    // Sites only reach into their 3x3 grid neighbourhood.
    require(0.25 * spec_.pitch + spec_.cell_radius_max < spec_.pitch,
            "synthetic cells must fit within one grid pitch of their site");
    cols_ = static_cast<int>(std::ceil(spec_.width / spec_.pitch));
    rows_ = static_cast<int>(std::ceil(spec_.height / spec_.pitch));
}

SlideMeta ProceduralSlide::meta() const {
    SlideMeta m;
    m.width_px = spec_.width;
    m.height_px = spec_.height;
    m.mpp = spec_.mpp;
    m.modality = spec_.modality;
    m.channel_count = 3;
    return m;
}

ProceduralSlide::Site ProceduralSlide::site(int col, int row) const {
    Site s;
    if (col < 0 || row < 0 || col >= cols_ || row >= rows_) return s;
    s.id = static_cast<std::uint32_t>(row) * static_cast<std::uint32_t>(cols_) +
           static_cast<std::uint32_t>(col) + 1;
    std::uint64_t state = spec_.seed * 0x9E3779B97F4A7C15ULL ^ (static_cast<std::uint64_t>(s.id) << 1);
    splitmix(state);
    const double jitter = 0.25 * spec_.pitch;
    s.cell.cx = (col + 0.5) * spec_.pitch + (2.0 * uniform(state) - 1.0) * jitter;
    s.cell.cy = (row + 0.5) * spec_.pitch + (2.0 * uniform(state) - 1.0) * jitter;
    const double span = spec_.cell_radius_max - spec_.cell_radius_min;
    s.cell.rx = spec_.cell_radius_min + uniform(state) * span;
    s.cell.ry = spec_.cell_radius_min + uniform(state) * span;
    s.cell.angle = uniform(state) * std::numbers::pi;
    const double occupied = uniform(state);
    const double anucleate = uniform(state);
    const double nscale = spec_.nucleus_scale_min +
                          uniform(state) * (spec_.nucleus_scale_max - spec_.nucleus_scale_min);
    const double off_r = uniform(state) * 0.15 * std::min(s.cell.rx, s.cell.ry);
    const double off_t = uniform(state) * 2.0 * std::numbers::pi;

    bool in_tissue = true;
    switch (spec_.tissue) {
        case TissueLayout::full: break;
        case TissueLayout::none: in_tissue = false; break;
        case TissueLayout::disk: {
            const double r = 0.4 * std::min(spec_.width, spec_.height);
            in_tissue = std::hypot(s.cell.cx - 0.5 * spec_.width, s.cell.cy - 0.5 * spec_.height) <= r;
            break;
        }
    }
    s.has_cell = in_tissue && occupied < spec_.occupancy;
    s.has_nucleus = s.has_cell && anucleate >= spec_.anucleate_fraction;
    s.nucleus = s.cell.scaled(nscale);
    s.nucleus.cx += off_r * std::cos(off_t);
    s.nucleus.cy += off_r * std::sin(off_t);
    return s;
}

namespace {

// Ellipse with the rotation precomputed.
struct FastEllipse {
    double cx = 0, cy = 0, c = 1, s = 0, inv_rx = 1, inv_ry = 1;

    explicit FastEllipse(const Ellipse& e = {})
        : cx(e.cx), cy(e.cy), c(std::cos(e.angle)), s(std::sin(e.angle)),
          inv_rx(1.0 / e.rx), inv_ry(1.0 / e.ry) {}

    double distance_sq(double x, double y) const noexcept {
        const double dx = x - cx, dy = y - cy;
        const double u = (c * dx + s * dy) * inv_rx;
        const double v = (-s * dx + c * dy) * inv_ry;
        return u * u + v * v;
    }
};

}  // namespace

struct ProceduralSlide::RegionSites {
    int col0 = 0, row0 = 0, cols = 0, rows = 0;
    struct Entry {
        std::uint32_t id = 0;
        bool has_cell = false;
        bool has_nucleus = false;
        FastEllipse cell;
        FastEllipse nucleus;
    };
    std::vector<Entry> entries;

    const Entry& at(int col, int row) const {
        return entries[static_cast<std::size_t>(row - row0) * cols + (col - col0)];
    }
};

ProceduralSlide::RegionSites ProceduralSlide::sites_for(int x, int y, int w, int h) const {
    RegionSites rs;
    rs.col0 = static_cast<int>(std::floor(x / spec_.pitch)) - 1;
    rs.row0 = static_cast<int>(std::floor(y / spec_.pitch)) - 1;
    rs.cols = static_cast<int>(std::floor((x + w) / spec_.pitch)) + 2 - rs.col0;
    rs.rows = static_cast<int>(std::floor((y + h) / spec_.pitch)) + 2 - rs.row0;
    rs.entries.resize(static_cast<std::size_t>(rs.cols) * rs.rows);
    for (int r = 0; r < rs.rows; ++r) {
        for (int c = 0; c < rs.cols; ++c) {
            const Site s = site(rs.col0 + c, rs.row0 + r);
            auto& e = rs.entries[static_cast<std::size_t>(r) * rs.cols + c];
            e.id = s.id;
            e.has_cell = s.has_cell;
            e.has_nucleus = s.has_nucleus;
            if (s.has_cell) {
                e.cell = FastEllipse(s.cell);
                e.nucleus = FastEllipse(s.nucleus);
            }
        }
    }
    return rs;
}

std::pair<std::uint32_t, std::uint32_t> ProceduralSlide::owner(const RegionSites& rs, int x,
                                                               int y) const {
    const int col = static_cast<int>(std::floor(x / spec_.pitch));
    const int row = static_cast<int>(std::floor(y / spec_.pitch));
    double best = 2.0;
    const RegionSites::Entry* winner = nullptr;
    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
            const auto& e = rs.at(col + dc, row + dr);
            if (!e.has_cell) continue;
            const double d = e.cell.distance_sq(x, y);
            if (d <= 1.0 && (d < best || (d == best && e.id < winner->id))) {
                best = d;
                winner = &e;
            }
        }
    }
    if (!winner) return {0, 0};
    const bool in_nucleus = winner->has_nucleus && winner->nucleus.distance_sq(x, y) <= 1.0;
    return {winner->id, in_nucleus ? winner->id : 0};
}

namespace {

template <typename Fn>
void for_each_pixel(int x, int y, int w, int h, int width, int height, Fn&& fn) {
    for (int r = 0; r < h; ++r) {
        const int gy = y + r;
        if (gy < 0 || gy >= height) continue;
        for (int c = 0; c < w; ++c) {
            const int gx = x + c;
            if (gx < 0 || gx >= width) continue;
            fn(c, r, gx, gy);
        }
    }
}

}  // namespace

LabelMap ProceduralSlide::nuclei(int x, int y, int w, int h) const {
    LabelMap out(w, h, 0);
    const auto rs = sites_for(x, y, w, h);
    for_each_pixel(x, y, w, h, spec_.width, spec_.height,
                   [&](int c, int r, int gx, int gy) { out(c, r) = owner(rs, gx, gy).second; });
    return out;
}

LabelMap ProceduralSlide::cells(int x, int y, int w, int h) const {
    LabelMap out(w, h, 0);
    const auto rs = sites_for(x, y, w, h);
    for_each_pixel(x, y, w, h, spec_.width, spec_.height,
                   [&](int c, int r, int gx, int gy) { out(c, r) = owner(rs, gx, gy).first; });
    return out;
}

Image ProceduralSlide::render(int x, int y, int w, int h) const {
    const bool bright = spec_.modality == Modality::brightfield;
    Image img(w, h, 3, bright ? 255 : 0);
    const auto rs = sites_for(x, y, w, h);
    for_each_pixel(x, y, w, h, spec_.width, spec_.height, [&](int c, int r, int gx, int gy) {
        const auto [cell, nucleus] = owner(rs, gx, gy);
        std::uint64_t state = spec_.seed ^ (static_cast<std::uint64_t>(gy) << 32) ^
                              static_cast<std::uint64_t>(gx);
        const double noise = (uniform(state) - 0.5) * 8.0;
        std::uint8_t* px = img.at(c, r);
        double rgb[3];
        if (bright) {
            if (nucleus) {
                rgb[0] = 105; rgb[1] = 70; rgb[2] = 150;
            } else if (cell) {
                rgb[0] = 228; rgb[1] = 160; rgb[2] = 200;
            } else {
                rgb[0] = 244; rgb[1] = 243; rgb[2] = 246;
            }
        } else {
            rgb[0] = 2; rgb[1] = 2; rgb[2] = 2;
            if (cell) rgb[1] = 70;
            if (nucleus) rgb[2] = 200;
        }
        for (int k = 0; k < 3; ++k) px[k] = clamp_u8(rgb[k] + (bright ? noise : noise * 0.25));
    });
    return img;
}

}  // namespace hvseg::synthetic
