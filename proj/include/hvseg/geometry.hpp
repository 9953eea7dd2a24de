#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace hvseg {

enum class Modality { brightfield, fluorescence };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct SlideMeta {
    int width_px = 0;
    int height_px = 0;
    std::optional<double> mpp;
    Modality modality = Modality::brightfield;
    int channel_count = 3;

    // Throws on width/height < 1 or a non-positive mpp.
    void validate() const;
    friend bool operator==(const SlideMeta&, const SlideMeta&) = default;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

// Axis-aligned box, half-open in pixel units: [x0, x1) x [y0, y1).
struct BBox {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    double width() const noexcept { return x1 - x0; }
    double height() const noexcept { return y1 - y0; }
    bool intersects(const BBox& o) const noexcept {
        return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
    }
    friend bool operator==(const BBox&, const BBox&) = default;
};

// Exterior ring only, implicitly closed. Pixel centers sit on integer
// coordinates, so rings traced from label maps run along half-integers.
struct Polygon {
    std::vector<Point> exterior;

    double signed_area() const noexcept;
    double area() const noexcept;
    double perimeter() const noexcept;
    Point centroid() const noexcept;
    BBox bbox() const noexcept;
    bool contains(Point p) const noexcept;  // even-odd rule

    // >= 3 vertices, positive signed area, and no crossing edges.
    bool is_valid() const;
    friend bool operator==(const Polygon&, const Polygon&) = default;
};

struct TileRef {
    int row = 0;
    int col = 0;
    int x = 0;  // origin, global pixels
    int y = 0;
    int width = 0;
    int height = 0;
    // Per-edge flags: the tile edge lies on the slide edge.
    bool left_edge = false;
    bool top_edge = false;
    bool right_edge = false;
    bool bottom_edge = false;

    friend bool operator==(const TileRef&, const TileRef&) = default;
};

struct TileGrid {
    int tile_size = 0;
    int overlap = 0;
    int stride = 0;
    int rows = 0;
    int cols = 0;
    int slide_width = 0;
    int slide_height = 0;
    std::vector<TileRef> tiles;  // raster order: row-major

    const TileRef& at(int row, int col) const { return tiles.at(static_cast<std::size_t>(row) * cols + col); }
};

// Origins along one axis; the last origin is clamped to dim - tile_size.
std::vector<int> tile_origins(int dim, int tile_size, int stride);

TileGrid build_tile_grid(const SlideMeta& slide, int tile_size, int overlap);
TileGrid build_tile_grid(int width, int height, int tile_size, int overlap);

struct ScaleFactor {
    double scale = 1.0;
    bool missing_source_mpp = false;  // scale defaulted to 1.0
};

// source_mpp / target_mpp. A missing source mpp yields 1.0 with the warning flag set.
ScaleFactor virtual_scale_factor(std::optional<double> source_mpp, double target_mpp);
double virtual_scale_factor(double source_mpp, double target_mpp);

// Side of the source region that maps onto a target-resolution tile side.
int source_region_side(int target_side, double scale);

// origin + local / scale. `tile` origin is in source pixels, `local` in
// target-resolution tile pixels.
Point tile_to_global(const TileRef& tile, Point local, double scale = 1.0);
Point global_to_local(const TileRef& tile, Point global, double scale = 1.0);

}  // namespace hvseg
