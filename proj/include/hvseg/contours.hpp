#pragma once

#include <cstdint>
#include <vector>

#include "hvseg/geometry.hpp"
#include "hvseg/raster.hpp"

namespace hvseg {

struct InstanceContour {
    std::uint32_t id = 0;
    Polygon polygon;
};

// One exterior ring per instance id, sorted by id. Rings follow pixel edges
// (vertices at half-integer coordinates), collinear vertices removed, holes
// filled. An id split into several pieces contributes its largest piece.
// `offset` is added to every vertex.
std::vector<InstanceContour> trace_contours(const LabelMap& labels, Point offset = {});

// Writes `value` into every pixel of `out` whose center, shifted by `origin`,
// lies inside the ring (even-odd scanline fill). Inverts trace_contours for
// hole-free instances.
void rasterize_polygon(const Polygon& polygon, LabelMap& out, std::uint32_t value, Point origin = {});

}  // namespace hvseg
