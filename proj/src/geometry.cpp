#include "hvseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hvseg/error.hpp"

namespace hvseg {

std::string to_string(Modality m) {
    return m == Modality::brightfield ? "brightfield" : "fluorescence";
}

Modality modality_from_string(const std::string& s) {
    if (s == "brightfield" || s == "he" || s == "bf") return Modality::brightfield;
    if (s == "fluorescence" || s == "mif" || s == "if") return Modality::fluorescence;
    throw Error(ErrorCode::invalid_argument, "unknown modality '" + s + "'");
}

void SlideMeta::validate() const {
    require(width_px >= 1 && height_px >= 1, "slide dimensions must be positive");
    require(!mpp || *mpp > 0.0, "mpp must be positive when present");
    require(channel_count >= 1, "channel count must be positive");
}

double Polygon::signed_area() const noexcept {
    const std::size_t n = exterior.size();
    if (n < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = exterior[i];
        const Point& b = exterior[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

double Polygon::area() const noexcept { return std::abs(signed_area()); }

double Polygon::perimeter() const noexcept {
    const std::size_t n = exterior.size();
    if (n < 2) return 0.0;
    double p = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = exterior[i];
        const Point& b = exterior[(i + 1) % n];
        p += std::hypot(b.x - a.x, b.y - a.y);
    }
    return p;
}

Point Polygon::centroid() const noexcept {
    const std::size_t n = exterior.size();
    if (n == 0) return {};
    double twice = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = exterior[i];
        const Point& b = exterior[(i + 1) % n];
        const double cross = a.x * b.y - b.x * a.y;
        twice += cross;
        cx += (a.x + b.x) * cross;
        cy += (a.y + b.y) * cross;
    }
    if (twice == 0.0) {
        Point mean;
        for (const auto& p : exterior) {
            mean.x += p.x;
            mean.y += p.y;
        }
        return {mean.x / static_cast<double>(n), mean.y / static_cast<double>(n)};
    }
    return {cx / (3.0 * twice), cy / (3.0 * twice)};
}

BBox Polygon::bbox() const noexcept {
    if (exterior.empty()) return {};
    BBox b{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
           std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest()};
    for (const auto& p : exterior) {
        b.x0 = std::min(b.x0, p.x);
        b.y0 = std::min(b.y0, p.y);
        b.x1 = std::max(b.x1, p.x);
        b.y1 = std::max(b.y1, p.y);
    }
    return b;
}

bool Polygon::contains(Point p) const noexcept {
    bool inside = false;
    const std::size_t n = exterior.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = exterior[i];
        const Point& b = exterior[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xi = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < xi) inside = !inside;
        }
    }
    return inside;
}

namespace {

double cross(Point o, Point a, Point b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Proper crossing only: shared endpoints and touching vertices do not count.
bool segments_cross(Point a, Point b, Point c, Point d) {
    const double d1 = cross(c, d, a);
    const double d2 = cross(c, d, b);
    const double d3 = cross(a, b, c);
    const double d4 = cross(a, b, d);
    return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
           ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace

bool Polygon::is_valid() const {
    const std::size_t n = exterior.size();
    if (n < 3 || signed_area() <= 0.0) return false;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            if (segments_cross(exterior[i], exterior[(i + 1) % n], exterior[j],
                               exterior[(j + 1) % n]))
                return false;
        }
    }
    return true;
}

std::vector<int> tile_origins(int dim, int tile_size, int stride) {
    if (dim <= tile_size) return {0};
    const int count = (dim - tile_size + stride - 1) / stride + 1;
    std::vector<int> origins(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) origins[i] = std::min(i * stride, dim - tile_size);
    return origins;
}

TileGrid build_tile_grid(int width, int height, int tile_size, int overlap) {
    require(width >= 1 && height >= 1, "slide dimensions must be positive");
    require(tile_size >= 1, "tile size must be positive");
    require(overlap >= 0 && overlap < tile_size, "overlap must satisfy 0 <= overlap < tile_size");

    TileGrid grid;
    grid.tile_size = tile_size;
    grid.overlap = overlap;
    grid.stride = tile_size - overlap;
    grid.slide_width = width;
    grid.slide_height = height;

    const auto xs = tile_origins(width, tile_size, grid.stride);
    const auto ys = tile_origins(height, tile_size, grid.stride);
    grid.cols = static_cast<int>(xs.size());
    grid.rows = static_cast<int>(ys.size());
    grid.tiles.reserve(xs.size() * ys.size());
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            TileRef t;
            t.row = r;
            t.col = c;
            t.x = xs[c];
            t.y = ys[r];
            t.width = std::min(tile_size, width);
            t.height = std::min(tile_size, height);
            t.left_edge = c == 0;
            t.top_edge = r == 0;
            t.right_edge = c == grid.cols - 1;
            t.bottom_edge = r == grid.rows - 1;
            grid.tiles.push_back(t);
        }
    }
    return grid;
}

TileGrid build_tile_grid(const SlideMeta& slide, int tile_size, int overlap) {
    slide.validate();
    return build_tile_grid(slide.width_px, slide.height_px, tile_size, overlap);
}

double virtual_scale_factor(double source_mpp, double target_mpp) {
    require(source_mpp > 0.0 && target_mpp > 0.0, "mpp values must be positive");
    return source_mpp / target_mpp;
}

ScaleFactor virtual_scale_factor(std::optional<double> source_mpp, double target_mpp) {
    require(target_mpp > 0.0, "target mpp must be positive");
    if (!source_mpp) return {1.0, true};
    return {virtual_scale_factor(*source_mpp, target_mpp), false};
}

int source_region_side(int target_side, double scale) {
    require(scale > 0.0, "scale must be positive");
    return static_cast<int>(std::lround(static_cast<double>(target_side) / scale));
}

namespace {

void check_local(const TileRef& tile, Point local, double scale) {
    // Continuous extent of a tile with pixel centers on integers.
    const double w = tile.width * scale;
    const double h = tile.height * scale;
    require(local.x >= -0.5 && local.y >= -0.5 && local.x <= w - 0.5 && local.y <= h - 0.5,
            "local coordinate outside tile");
}

}  // namespace

Point tile_to_global(const TileRef& tile, Point local, double scale) {
    require(scale > 0.0, "scale must be positive");
    check_local(tile, local, scale);
    return {tile.x + local.x / scale, tile.y + local.y / scale};
}

Point global_to_local(const TileRef& tile, Point global, double scale) {
    require(scale > 0.0, "scale must be positive");
    const Point local{(global.x - tile.x) * scale, (global.y - tile.y) * scale};
    check_local(tile, local, scale);
    return local;
}

}  // namespace hvseg
