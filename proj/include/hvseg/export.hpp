#pragma once

#include <string>

#include "hvseg/pipeline.hpp"

namespace hvseg {

enum class ExportFormat { geojson, json, table };

std::string to_string(ExportFormat format);
ExportFormat export_format_from_string(const std::string& s);
std::string content_type(ExportFormat format);

inline constexpr const char* kTableHeader =
    "id,head,centroid_x,centroid_y,area_px2,perimeter_px,circularity,nucleus_id,nc_ratio,flags";

// Canonical output: sorted keys, coordinates rounded to 2 decimals, metrics
// to 4, rings closed, features ordered by head then id. Serializing a parsed
// document reproduces it byte for byte.
std::string export_collection(const InstanceCollection& collection, ExportFormat format);

// Instances, metrics and NC fields are restored as written (rounded values).
// The ring's repeated closing vertex is dropped.
InstanceCollection parse_geojson(const std::string& text);

double round_to(double value, int decimals);

}  // namespace hvseg
