#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "hvseg/geometry.hpp"
#include "hvseg/raster.hpp"

namespace hvseg::synthetic {

struct Ellipse {
    double cx = 0, cy = 0;
    double rx = 1, ry = 1;
    double angle = 0;  // radians

    // sqrt((u/rx)^2 + (v/ry)^2) in the ellipse frame; <= 1 inside.
    double normalized_distance(double x, double y) const noexcept;
    // Distance from the center to the boundary along direction phi.
    double radius_towards(double phi) const noexcept;
    Ellipse scaled(double factor) const noexcept;
};

// Pixels inside several ellipses go to the one with the smallest normalized
// distance (ties: lower index). Ids are index + 1.
LabelMap rasterize_ellipses(const std::vector<Ellipse>& ellipses, int width, int height);

struct EllipseMapOptions {
    int width = 256;
    int height = 256;
    double min_diameter = 10.0;
    double max_diameter = 80.0;
    int target_count = 12;
    double max_touching_fraction = 0.3;
    double cell_scale = 1.6;  // cell ellipse = nucleus ellipse scaled by this
};

struct EllipseMap {
    std::vector<Ellipse> ellipses;
    LabelMap nuclei;
    LabelMap cells;
    double touching_fraction = 0.0;  // instances sharing a 4-adjacent border
};

EllipseMap random_ellipse_map(std::uint64_t seed, const EllipseMapOptions& options = {});

// Fraction of instances that share a 4-adjacent border with another instance.
double touching_fraction(const LabelMap& labels);

enum class TissueLayout { full, disk, none };

struct SlideSpec {
    int width = 2048;
    int height = 2048;
    std::uint64_t seed = 1;
    Modality modality = Modality::brightfield;
    std::optional<double> mpp = 0.5;
    TissueLayout tissue = TissueLayout::full;
    double pitch = 28.0;             // grid spacing of cell sites
    double occupancy = 0.85;         // probability a site holds a cell
    double cell_radius_min = 7.0;
    double cell_radius_max = 12.0;
    double nucleus_scale_min = 0.5;
    double nucleus_scale_max = 0.7;
    double anucleate_fraction = 0.05;
};

// Procedural slide: pixels and ground truth for any region are computed on
// demand from the spec, so arbitrarily large slides need no storage.
class ProceduralSlide {
public:
    explicit ProceduralSlide(SlideSpec spec);

    const SlideSpec& spec() const noexcept { return spec_; }
    SlideMeta meta() const;

    Image render(int x, int y, int w, int h) const;
    LabelMap nuclei(int x, int y, int w, int h) const;
    LabelMap cells(int x, int y, int w, int h) const;

private:
    struct Site {
        std::uint32_t id = 0;
        Ellipse cell;
        Ellipse nucleus;
        bool has_cell = false;
        bool has_nucleus = false;
    };
    struct RegionSites;
    Site site(int col, int row) const;
    RegionSites sites_for(int x, int y, int w, int h) const;
    // Cell id and nucleus id owning a pixel (0 when none).
    std::pair<std::uint32_t, std::uint32_t> owner(const RegionSites& sites, int x, int y) const;

    SlideSpec spec_;
    int cols_ = 0;
    int rows_ = 0;
};

}  // namespace hvseg::synthetic
