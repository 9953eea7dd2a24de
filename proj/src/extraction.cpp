#include "hvseg/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "hvseg/error.hpp"
#include "hvseg/labeling.hpp"

namespace hvseg {

std::string to_string(Head head) {
    switch (head) {
        case Head::he_nuclei: return "he_nuclei";
        case Head::he_cells: return "he_cells";
        case Head::mif_nuclei: return "mif_nuclei";
        case Head::mif_cells: return "mif_cells";
    }
    return "unknown";
}

Head head_from_string(const std::string& s) {
    if (s == "he_nuclei") return Head::he_nuclei;
    if (s == "he_cells") return Head::he_cells;
    if (s == "mif_nuclei") return Head::mif_nuclei;
    if (s == "mif_cells") return Head::mif_cells;
    throw Error(ErrorCode::invalid_argument, "unknown head '" + s + "'");
}

bool is_cell_head(Head head) { return head == Head::he_cells || head == Head::mif_cells; }

Head nuclei_head_for(Head head) {
    if (head == Head::he_cells) return Head::he_nuclei;
    if (head == Head::mif_cells) return Head::mif_nuclei;
    return head;
}

Modality modality_of(Head head) {
    return (head == Head::he_nuclei || head == Head::he_cells) ? Modality::brightfield
                                                               : Modality::fluorescence;
}

void DensePrediction::validate() const {
    require_same_shape(seg_prob, hv.h, "DensePrediction");
    require_same_shape(seg_prob, hv.v, "DensePrediction");
}

void ExtractionParams::validate() const {
    require(prob_threshold > 0.0 && prob_threshold < 1.0, "prob_threshold must lie in (0, 1)");
    require(grad_threshold > 0.0 && grad_threshold < 1.0, "grad_threshold must lie in (0, 1)");
    require(min_marker_px >= 1 && min_instance_px >= 1 && min_anucleate_px >= 1 &&
                seed_min_distance_px >= 1,
            "extraction size parameters must be >= 1");
}

Raster<double> hv_energy(const HVField& hv, const Mask& foreground) {
    require_same_shape(hv.h, foreground, "hv_energy");
    const auto dx = derivative_x(hv.h);
    const auto dy = derivative_y(hv.v);
    // Inside an instance h rises with x and v with y, so each signed slope is
    // min-max normalized and flipped: the steepest fall maps to 1.
    auto flipped = [&](const Raster<double>& d) {
        double lo = std::numeric_limits<double>::max();
        double hi = std::numeric_limits<double>::lowest();
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!foreground[i]) continue;
            lo = std::min(lo, d[i]);
            hi = std::max(hi, d[i]);
        }
        Raster<double> out(d.width(), d.height(), 0.0);
        const double range = hi - lo;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (foreground[i] && range > 0.0) out[i] = (hi - d[i]) / range;
        return out;
    };
    const auto ex = flipped(dx);
    const auto ey = flipped(dy);
    Raster<double> energy(foreground.width(), foreground.height(), 0.0);
    for (std::size_t i = 0; i < energy.size(); ++i)
        if (foreground[i]) energy[i] = std::max(ex[i], ey[i]);
    return energy;
}

LabelMap extract_instances_hv(const DensePrediction& pred, const ExtractionParams& params) {
    pred.validate();
    params.validate();
    const Mask fg = threshold(pred.seg_prob, static_cast<float>(params.prob_threshold));
    const auto energy = hv_energy(pred.hv, fg);

    Mask interior(fg.width(), fg.height(), 0);
    for (std::size_t i = 0; i < fg.size(); ++i)
        interior[i] = fg[i] && energy[i] <= params.grad_threshold ? 1 : 0;
    LabelMap markers = remove_small_instances(connected_components(interior),
                                              static_cast<std::size_t>(params.min_marker_px));

    // Foreground blobs left without any marker keep one seed of their own so
    // small isolated objects are not lost.
    const LabelMap blobs = connected_components(fg);
    std::unordered_set<std::uint32_t> seeded;
    for (std::size_t i = 0; i < blobs.size(); ++i)
        if (markers[i] != 0) seeded.insert(blobs[i]);
    std::uint32_t next = max_id(markers);
    std::unordered_map<std::uint32_t, std::uint32_t> blob_marker;
    for (std::size_t i = 0; i < blobs.size(); ++i) {
        const auto b = blobs[i];
        if (b == 0 || seeded.contains(b)) continue;
        auto [it, inserted] = blob_marker.try_emplace(b, 0);
        if (inserted) {
            // Lowest-energy pixel of the blob, first in raster order.
            it->second = ++next;
        }
    }
    if (!blob_marker.empty()) {
        std::unordered_map<std::uint32_t, std::size_t> best;
        for (std::size_t i = 0; i < blobs.size(); ++i) {
            const auto b = blobs[i];
            if (b == 0 || !blob_marker.contains(b)) continue;
            auto [it, inserted] = best.try_emplace(b, i);
            if (!inserted && energy[i] < energy[it->second]) it->second = i;
        }
        for (auto [b, idx] : best) markers[idx] = blob_marker[b];
    }

    LabelMap labels = marker_watershed(energy, markers, fg);
    labels = remove_small_instances(labels, static_cast<std::size_t>(params.min_instance_px));
    return enforce_connectivity(labels);
}

LabelMap extract_cells_constrained(const DensePrediction& cell_pred, const LabelMap& nuclei,
                                   const ExtractionParams& params) {
    cell_pred.validate();
    params.validate();
    require_same_shape(cell_pred.seg_prob, nuclei, "extract_cells_constrained");
    const Mask fg = threshold(cell_pred.seg_prob, static_cast<float>(params.prob_threshold));
    const auto energy = hv_energy(cell_pred.hv, fg);

    LabelMap markers(nuclei.width(), nuclei.height(), 0);
    for (std::size_t i = 0; i < nuclei.size(); ++i)
        if (fg[i]) markers[i] = nuclei[i];

    // Low-energy basins holding no nucleus pixel get temporary blocking seeds,
    // so a nucleated neighbour cannot flood an anucleate cell. The blocked
    // pixels are released afterwards and left for anucleate recovery.
    Mask interior(fg.width(), fg.height(), 0);
    for (std::size_t i = 0; i < fg.size(); ++i)
        interior[i] = fg[i] && energy[i] <= params.grad_threshold ? 1 : 0;
    const LabelMap basins = remove_small_instances(connected_components(interior),
                                                   static_cast<std::size_t>(params.min_marker_px));
    std::unordered_set<std::uint32_t> nucleated;
    for (std::size_t i = 0; i < basins.size(); ++i)
        if (basins[i] != 0 && nuclei[i] != 0) nucleated.insert(basins[i]);
    const std::uint32_t block_base = max_id(nuclei);
    for (std::size_t i = 0; i < basins.size(); ++i)
        if (basins[i] != 0 && !nucleated.contains(basins[i])) markers[i] = block_base + basins[i];

    LabelMap cells = marker_watershed(energy, markers, fg);
    for (auto& c : cells.storage())
        if (c > block_base) c = 0;

    // Nuclei with no foreground support become degenerate cells.
    std::unordered_set<std::uint32_t> supported;
    for (std::size_t i = 0; i < markers.size(); ++i)
        if (markers[i] != 0) supported.insert(markers[i]);
    for (std::size_t i = 0; i < nuclei.size(); ++i) {
        const auto id = nuclei[i];
        if (id != 0 && !supported.contains(id) && cells[i] == 0) cells[i] = id;
    }
    return cells;
}

namespace {

struct PixelBox {
    int x0, y0, x1, y1;  // inclusive
};

std::vector<std::size_t> pick_seeds(const Raster<float>& dist, const Mask& component,
                                    int min_distance) {
    std::vector<std::size_t> candidates;
    for (int y = 0; y < dist.height(); ++y) {
        for (int x = 0; x < dist.width(); ++x) {
            if (!component(x, y)) continue;
            const float d = dist(x, y);
            bool is_max = true;
            for (int dy = -min_distance; dy <= min_distance && is_max; ++dy) {
                for (int dx = -min_distance; dx <= min_distance; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (dist.contains(nx, ny) && component(nx, ny) && dist(nx, ny) > d) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) candidates.push_back(dist.index(x, y));
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    std::vector<std::size_t> seeds;
    const double min_sq = static_cast<double>(min_distance) * min_distance;
    const auto w = static_cast<std::size_t>(dist.width());
    for (auto c : candidates) {
        const double cx = static_cast<double>(c % w), cy = static_cast<double>(c / w);
        bool far = true;
        for (auto s : seeds) {
            const double sx = static_cast<double>(s % w), sy = static_cast<double>(s / w);
            if ((cx - sx) * (cx - sx) + (cy - sy) * (cy - sy) < min_sq) {
                far = false;
                break;
            }
        }
        if (far) seeds.push_back(c);
    }
    return seeds;
}

}  // namespace

LabelMap recover_anucleate_cells(const LabelMap& cells, const ProbabilityMap& cell_prob,
                                 const LabelMap& nuclei, const ExtractionParams& params) {
    params.validate();
    require_same_shape(cells, cell_prob, "recover_anucleate_cells");
    require_same_shape(cells, nuclei, "recover_anucleate_cells");

    Mask residual(cells.width(), cells.height(), 0);
    for (std::size_t i = 0; i < cells.size(); ++i)
        residual[i] = cell_prob[i] >= params.prob_threshold && cells[i] == 0 ? 1 : 0;
    const LabelMap components = connected_components(residual);

    std::unordered_map<std::uint32_t, PixelBox> boxes;
    std::unordered_map<std::uint32_t, std::size_t> areas;
    std::unordered_set<std::uint32_t> nucleated;
    std::vector<std::uint32_t> order;
    for (int y = 0; y < components.height(); ++y) {
        for (int x = 0; x < components.width(); ++x) {
            const auto c = components(x, y);
            if (c == 0) continue;
            auto [it, inserted] = boxes.try_emplace(c, PixelBox{x, y, x, y});
            if (inserted) order.push_back(c);
            auto& b = it->second;
            b.x0 = std::min(b.x0, x);
            b.y0 = std::min(b.y0, y);
            b.x1 = std::max(b.x1, x);
            b.y1 = std::max(b.y1, y);
            ++areas[c];
            if (nuclei(x, y) != 0) nucleated.insert(c);
        }
    }

    LabelMap out = cells;
    std::uint32_t next = max_id(cells);
    for (auto c : order) {
        if (nucleated.contains(c) || areas[c] < static_cast<std::size_t>(params.min_anucleate_px))
            continue;
        const auto& b = boxes[c];
        const int w = b.x1 - b.x0 + 1;
        const int h = b.y1 - b.y0 + 1;
        Mask local(w, h, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) local(x, y) = components(b.x0 + x, b.y0 + y) == c ? 1 : 0;

        const auto dist = distance_transform(local);
        const auto seeds = pick_seeds(dist, local, params.seed_min_distance_px);
        LabelMap markers(w, h, 0);
        for (auto s : seeds) markers[s] = ++next;
        Raster<double> elevation(w, h, 0.0);
        for (std::size_t i = 0; i < elevation.size(); ++i) elevation[i] = -dist[i];
        const LabelMap grown = marker_watershed(elevation, markers, local);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (grown(x, y) != 0) out(b.x0 + x, b.y0 + y) = grown(x, y);
    }
    return out;
}

}  // namespace hvseg
