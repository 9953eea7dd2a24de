#include "hvseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "hvseg/error.hpp"

namespace hvseg {

MatchReport match_instances(const LabelMap& pred, const LabelMap& gt, double iou_threshold) {
    require_same_shape(pred, gt, "match_instances");
    std::map<std::uint32_t, std::size_t> pred_area, gt_area;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> inter;  // (pred, gt)
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto p = pred[i], g = gt[i];
        if (p) ++pred_area[p];
        if (g) ++gt_area[g];
        if (p && g) ++inter[{p, g}];
    }
    std::vector<MatchPair> candidates;
    for (const auto& [key, n] : inter) {
        const double uni = static_cast<double>(pred_area[key.first] + gt_area[key.second] - n);
        const double iou = static_cast<double>(n) / uni;
        if (iou > iou_threshold) candidates.push_back({key.first, key.second, iou});
    }
    std::sort(candidates.begin(), candidates.end(), [](const MatchPair& a, const MatchPair& b) {
        return std::tie(b.iou, a.gt_id, a.pred_id) < std::tie(a.iou, b.gt_id, b.pred_id);
    });

    MatchReport r;
    r.iou_threshold = iou_threshold;
    std::set<std::uint32_t> used_pred, used_gt;
    for (const auto& c : candidates) {
        if (used_pred.contains(c.pred_id) || used_gt.contains(c.gt_id)) continue;
        used_pred.insert(c.pred_id);
        used_gt.insert(c.gt_id);
        r.tp_pairs.push_back(c);
    }
    std::sort(r.tp_pairs.begin(), r.tp_pairs.end(),
              [](const MatchPair& a, const MatchPair& b) { return a.gt_id < b.gt_id; });
    for (const auto& [p, _] : pred_area)
        if (!used_pred.contains(p)) r.fp_ids.push_back(p);
    for (const auto& [g, _] : gt_area)
        if (!used_gt.contains(g)) r.fn_ids.push_back(g);
    return r;
}

double panoptic_quality(const MatchReport& r) {
    const double denom = static_cast<double>(r.tp_pairs.size()) + 0.5 * static_cast<double>(r.fp_ids.size()) +
                         0.5 * static_cast<double>(r.fn_ids.size());
    if (denom == 0.0) return 0.0;
    double sum = 0.0;
    for (const auto& p : r.tp_pairs) sum += p.iou;
    return sum / denom;
}

DiceResult dice(const Mask& pred, const Mask& gt) {
    require_same_shape(pred, gt, "dice");
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred[i] != 0, b = gt[i] != 0;
        p += a;
        g += b;
        both += a && b;
    }
    if (p + g == 0) return {1.0, true};
    return {2.0 * static_cast<double>(both) / static_cast<double>(p + g), false};
}

std::vector<RankCounts> rank_models(const std::vector<std::string>& models,
                                    const std::vector<std::vector<double>>& table) {
    require(!models.empty() && table.size() == models.size(), "rank table must have one row per model");
    const std::size_t datasets = table.front().size();
    require(datasets > 0, "rank table has no datasets");
    for (const auto& row : table) require(row.size() == datasets, "rank table rows differ in length");

    std::vector<RankCounts> out;
    for (const auto& m : models) out.push_back({m, 0, 0, 0});
    for (std::size_t d = 0; d < datasets; ++d) {
        for (std::size_t m = 0; m < models.size(); ++m) {
            const double s = table[m][d];
            if (std::isnan(s)) continue;
            int rank = 1;
            for (std::size_t o = 0; o < models.size(); ++o)
                if (!std::isnan(table[o][d]) && table[o][d] > s) ++rank;
            if (rank <= 1) ++out[m].top1;
            if (rank <= 2) ++out[m].top2;
            if (rank <= 3) ++out[m].top3;
        }
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    for (auto& c : cells) {
        const auto b = c.find_first_not_of(" \t");
        const auto e = c.find_last_not_of(" \t");
        c = b == std::string::npos ? "" : c.substr(b, e - b + 1);
    }
    return cells;
}

}  // namespace

RankTable parse_rank_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    RankTable t;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (header) {
            require(cells.size() >= 2, "rank CSV header needs a model column and at least one dataset");
            t.datasets.assign(cells.begin() + 1, cells.end());
            header = false;
            continue;
        }
        require(cells.size() == t.datasets.size() + 1, "rank CSV row has the wrong number of cells");
        t.models.push_back(cells[0]);
        std::vector<double> row;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            if (cells[i].empty()) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cells[i], &used));
                require(used == cells[i].size(), "bad number '" + cells[i] + "' in rank CSV");
            } catch (const std::logic_error&) {
                throw Error(ErrorCode::invalid_argument, "bad number '" + cells[i] + "' in rank CSV");
            }
        }
        t.scores.push_back(std::move(row));
    }
    require(!t.models.empty(), "rank CSV has no model rows");
    return t;
}

std::string format_rank_csv(const std::vector<RankCounts>& counts) {
    std::ostringstream out;
    out << "model,top1,top2,top3\n";
    for (const auto& c : counts) out << c.model << ',' << c.top1 << ',' << c.top2 << ',' << c.top3 << '\n';
    return out.str();
}

}  // namespace hvseg
