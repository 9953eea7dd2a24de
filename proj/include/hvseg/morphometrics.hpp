#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hvseg/geometry.hpp"
#include "hvseg/raster.hpp"

namespace hvseg {

struct Morphometrics {
    double area_px2 = 0;
    double perimeter_px = 0;
    double circularity = 0;  // 4*pi*A / P^2, clamped at 1 + 1e-6
    Point centroid;
    BBox bbox;
};

inline constexpr double kCircularityCap = 1.0 + 1e-6;
inline constexpr double kNcCap = 10.0;

Morphometrics morphometrics(const Polygon& polygon);

enum class NCDenominator { cytoplasm, cell };

struct NCFlags {
    bool anucleate = false;
    bool orphan_nucleus = false;
    bool cytoplasm_depleted = false;

    std::vector<std::string> names() const;  // sorted
    friend bool operator==(const NCFlags&, const NCFlags&) = default;
};

struct NCRecord {
    std::uint32_t cell_id = 0;
    std::optional<std::uint32_t> nucleus_id;
    double cell_area_px2 = 0;
    double nucleus_area_px2 = 0;
    double cytoplasm_area_px2 = 0;  // cell area minus the nucleus pixels inside the cell
    double nc_ratio = 0;
    NCFlags flags;
    friend bool operator==(const NCRecord&, const NCRecord&) = default;
};

struct NCValue {
    double ratio = 0;
    bool cytoplasm_depleted = false;
};

// nucleus / (cell - overlap) by default. A zero denominator caps the ratio at
// 10 and sets the depleted flag; a zero nucleus area gives 0.
NCValue nc_ratio(double nucleus_area, double cell_area, double overlap_area,
                 NCDenominator denominator = NCDenominator::cytoplasm);

struct Pairing {
    std::vector<NCRecord> records;             // one per cell, ascending cell id
    std::vector<std::uint32_t> orphan_nuclei;  // ascending
    std::vector<std::uint32_t> anucleate_cells;
};

// Each nucleus goes to the cell it overlaps most (ties: smaller cell id); no
// overlap makes it an orphan. A cell with several nuclei reports the one with
// the largest overlap as nucleus_id (ties: smaller id) and sums the areas of
// all of them.
Pairing pair_nuclei_cells(const LabelMap& nuclei, const LabelMap& cells,
                          NCDenominator denominator = NCDenominator::cytoplasm);

}  // namespace hvseg
