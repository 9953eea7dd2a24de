#include "hvseg/contours.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hvseg/labeling.hpp"

namespace hvseg {

namespace {

struct Box {
    int x0, y0, x1, y1;  // inclusive pixel bounds
};

enum Dir : std::uint8_t { east = 0, south = 1, west = 2, north = 3 };
constexpr int kStepX[4] = {1, 0, -1, 0};
constexpr int kStepY[4] = {0, 1, 0, -1};

// Walks the boundary of a filled 4-connected region with the region on the
// right-hand side (screen coordinates), preferring right turns so diagonal
// pinches are not crossed.
std::vector<Point> trace_region(const Mask& region, double ox, double oy) {
    const int w = region.width();
    const int h = region.height();
    const int cw = w + 1;
    std::vector<std::uint8_t> out_edges(static_cast<std::size_t>(cw) * (h + 1), 0);
    auto corner = [cw](int cx, int cy) { return static_cast<std::size_t>(cy) * cw + cx; };
    auto inside = [&](int x, int y) { return region.contains(x, y) && region(x, y) != 0; };

    int start_x = -1, start_y = -1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!inside(x, y)) continue;
            if (start_x < 0) {
                start_x = x;
                start_y = y;
            }
            if (!inside(x, y - 1)) out_edges[corner(x, y)] |= 1u << east;
            if (!inside(x + 1, y)) out_edges[corner(x + 1, y)] |= 1u << south;
            if (!inside(x, y + 1)) out_edges[corner(x + 1, y + 1)] |= 1u << west;
            if (!inside(x - 1, y)) out_edges[corner(x, y + 1)] |= 1u << north;
        }
    }
    std::vector<Point> ring;
    if (start_x < 0) return ring;

    int cx = start_x, cy = start_y;
    int dir = east;
    bool first = true;
    do {
        auto& bits = out_edges[corner(cx, cy)];
        int next = -1;
        if (first) {
            next = east;
        } else {
            for (int turn : {1, 0, 3}) {
                const int d = (dir + turn) % 4;
                if (bits & (1u << d)) {
                    next = d;
                    break;
                }
            }
        }
        if (next < 0) break;  // open chain; cannot happen for a valid region
        if (first || next != dir) ring.push_back({ox + cx - 0.5, oy + cy - 0.5});
        bits &= static_cast<std::uint8_t>(~(1u << next));
        dir = next;
        cx += kStepX[dir];
        cy += kStepY[dir];
        first = false;
    } while (cx != start_x || cy != start_y);
    // The start pixel is first in raster order, so the ring always closes by
    // heading north into the start corner: that corner is a real vertex.
    return ring;
}

}  // namespace

std::vector<InstanceContour> trace_contours(const LabelMap& labels, Point offset) {
    std::map<std::uint32_t, Box> boxes;
    for (int y = 0; y < labels.height(); ++y) {
        for (int x = 0; x < labels.width(); ++x) {
            const auto id = labels(x, y);
            if (id == 0) continue;
            auto [it, inserted] = boxes.try_emplace(id, Box{x, y, x, y});
            if (!inserted) {
                auto& b = it->second;
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x);
                b.y1 = std::max(b.y1, y);
            }
        }
    }

    std::vector<InstanceContour> out;
    out.reserve(boxes.size());
    for (const auto& [id, b] : boxes) {
        // One pixel of padding so hole filling sees a background border.
        const int w = b.x1 - b.x0 + 3;
        const int h = b.y1 - b.y0 + 3;
        Mask local(w, h, 0);
        for (int y = b.y0; y <= b.y1; ++y)
            for (int x = b.x0; x <= b.x1; ++x)
                if (labels(x, y) == id) local(x - b.x0 + 1, y - b.y0 + 1) = 1;

        LabelMap pieces = connected_components(local);
        std::vector<std::size_t> counts;
        for (auto p : pieces.data()) {
            if (p == 0) continue;
            if (counts.size() < p) counts.resize(p, 0);
            ++counts[p - 1];
        }
        const auto largest = static_cast<std::uint32_t>(
            std::max_element(counts.begin(), counts.end()) - counts.begin() + 1);
        LabelMap keep(w, h, 0);
        for (std::size_t i = 0; i < pieces.size(); ++i) keep[i] = pieces[i] == largest ? 1 : 0;
        const Mask filled = foreground_of(fill_instance_holes(keep));

        InstanceContour c;
        c.id = id;
        c.polygon.exterior =
            trace_region(filled, offset.x + b.x0 - 1, offset.y + b.y0 - 1);
        out.push_back(std::move(c));
    }
    return out;
}

void rasterize_polygon(const Polygon& polygon, LabelMap& out, std::uint32_t value, Point origin) {
    const auto& pts = polygon.exterior;
    if (pts.size() < 3 || out.empty()) return;
    const BBox box = polygon.bbox();
    const int y0 = std::max(0, static_cast<int>(std::ceil(box.y0 - origin.y)));
    const int y1 = std::min(out.height() - 1, static_cast<int>(std::floor(box.y1 - origin.y)));
    std::vector<double> xs;
    for (int y = y0; y <= y1; ++y) {
        const double gy = origin.y + y;
        xs.clear();
        for (std::size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
            const auto& a = pts[i];
            const auto& b = pts[j];
            if ((a.y > gy) != (b.y > gy)) xs.push_back(a.x + (gy - a.y) * (b.x - a.x) / (b.y - a.y));
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            // Centers strictly inside the span: xs[k] < x <= xs[k+1].
            const int xa = std::max(0, static_cast<int>(std::floor(xs[k] - origin.x)) + 1);
            const int xb = std::min(out.width() - 1, static_cast<int>(std::floor(xs[k + 1] - origin.x)));
            for (int x = xa; x <= xb; ++x) out(x, y) = value;
        }
    }
}

}  // namespace hvseg
