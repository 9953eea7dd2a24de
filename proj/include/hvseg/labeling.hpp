#pragma once

#include <cstdint>
#include <vector>

#include "hvseg/raster.hpp"

namespace hvseg {

// Raster primitives shared by extraction, metrics and export. All use
// 4-connectivity.

// Components of nonzero mask pixels, ids 1..n in raster order of first pixel.
LabelMap connected_components(const Mask& mask);

// Renumber ids to 1..n in raster order of first occurrence.
LabelMap relabel_sequential(const LabelMap& labels);

// Splits every id into its 4-connected pieces, then renumbers sequentially.
LabelMap enforce_connectivity(const LabelMap& labels);

// Sets ids whose pixel count is below `min_pixels` to 0. Other ids keep their value.
LabelMap remove_small_instances(const LabelMap& labels, std::size_t min_pixels);

// Fills background pockets that are not 4-connected to the raster border,
// per instance.
LabelMap fill_instance_holes(const LabelMap& labels);

// Exact Euclidean distance from every nonzero pixel to the nearest zero pixel.
// Pixels beyond the raster border count as zero.
Raster<float> distance_transform(const Mask& mask);

// Marker-controlled watershed: grows the nonzero ids in `markers` over the
// pixels where `mask` is set. Pixels are flooded in increasing order of
// (elevation, marker id, raster index). Unreachable mask pixels stay 0.
LabelMap marker_watershed(const Raster<double>& elevation, const LabelMap& markers,
                          const Mask& mask);

std::vector<std::uint32_t> unique_ids(const LabelMap& labels);  // sorted, no 0
std::uint32_t max_id(const LabelMap& labels);

Mask threshold(const Raster<float>& prob, float min_value);  // prob >= min_value
Mask foreground_of(const LabelMap& labels);

}  // namespace hvseg
