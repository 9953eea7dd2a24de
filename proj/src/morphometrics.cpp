#include "hvseg/morphometrics.hpp"

#include <algorithm>
#include <map>
#include <numbers>

#include "hvseg/error.hpp"

namespace hvseg {

Morphometrics morphometrics(const Polygon& polygon) {
    require(polygon.exterior.size() >= 3, "polygon needs at least 3 vertices");
    const double area = polygon.signed_area();
    require(area > 0.0, "polygon has zero or negative area");
    Morphometrics m;
    m.area_px2 = area;
    m.perimeter_px = polygon.perimeter();
    m.circularity = std::min(4.0 * std::numbers::pi * area / (m.perimeter_px * m.perimeter_px), kCircularityCap);
    m.centroid = polygon.centroid();
    m.bbox = polygon.bbox();
    return m;
}

std::vector<std::string> NCFlags::names() const {
    std::vector<std::string> out;
    if (anucleate) out.emplace_back("anucleate");
    if (cytoplasm_depleted) out.emplace_back("cytoplasm_depleted");
    if (orphan_nucleus) out.emplace_back("orphan_nucleus");
    return out;
}

NCValue nc_ratio(double nucleus_area, double cell_area, double overlap_area, NCDenominator denominator) {
    require(nucleus_area >= 0 && cell_area >= 0 && overlap_area >= 0 && overlap_area <= cell_area,
            "invalid areas for N/C ratio");
    if (nucleus_area == 0.0) return {};
    const double denom = denominator == NCDenominator::cytoplasm ? cell_area - overlap_area : cell_area;
    if (denom <= 0.0) return {kNcCap, true};
    return {std::min(nucleus_area / denom, kNcCap), false};
}

Pairing pair_nuclei_cells(const LabelMap& nuclei, const LabelMap& cells, NCDenominator denominator) {
    require_same_shape(nuclei, cells, "pair_nuclei_cells");
    std::map<std::uint32_t, std::size_t> nucleus_area, cell_area;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> overlap;  // (nucleus, cell)
    for (std::size_t i = 0; i < nuclei.size(); ++i) {
        const auto n = nuclei[i], c = cells[i];
        if (n) ++nucleus_area[n];
        if (c) ++cell_area[c];
        if (n && c) ++overlap[{n, c}];
    }

    // nucleus -> (cell, overlap): map iteration is by (nucleus, cell) ascending,
    // so strict > keeps the smaller cell id on ties.
    std::map<std::uint32_t, std::pair<std::uint32_t, std::size_t>> best;
    for (const auto& [key, count] : overlap) {
        auto [it, inserted] = best.try_emplace(key.first, key.second, count);
        if (!inserted && count > it->second.second) it->second = {key.second, count};
    }

    struct Acc {
        std::optional<std::uint32_t> primary;
        std::size_t primary_overlap = 0;
        std::size_t nucleus_area = 0;
        std::size_t overlap = 0;
    };
    std::map<std::uint32_t, Acc> per_cell;
    Pairing out;
    for (const auto& [n, area] : nucleus_area) {
        auto b = best.find(n);
        if (b == best.end()) {
            out.orphan_nuclei.push_back(n);
            continue;
        }
        auto& acc = per_cell[b->second.first];
        const auto ov = b->second.second;
        if (!acc.primary || ov > acc.primary_overlap) {
            acc.primary = n;
            acc.primary_overlap = ov;
        }
        acc.nucleus_area += area;
        acc.overlap += ov;
    }

    for (const auto& [c, area] : cell_area) {
        NCRecord r;
        r.cell_id = c;
        r.cell_area_px2 = static_cast<double>(area);
        auto it = per_cell.find(c);
        if (it == per_cell.end()) {
            r.flags.anucleate = true;
            r.cytoplasm_area_px2 = r.cell_area_px2;
            out.anucleate_cells.push_back(c);
        } else {
            r.nucleus_id = it->second.primary;
            r.nucleus_area_px2 = static_cast<double>(it->second.nucleus_area);
            r.cytoplasm_area_px2 = r.cell_area_px2 - static_cast<double>(it->second.overlap);
            const auto v = nc_ratio(r.nucleus_area_px2, r.cell_area_px2,
                                    static_cast<double>(it->second.overlap), denominator);
            r.nc_ratio = v.ratio;
            r.flags.cytoplasm_depleted = v.cytoplasm_depleted;
        }
        out.records.push_back(r);
    }
    return out;
}

}  // namespace hvseg
