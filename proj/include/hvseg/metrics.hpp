#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hvseg/raster.hpp"

namespace hvseg {

struct MatchPair {
    std::uint32_t pred_id = 0;
    std::uint32_t gt_id = 0;
    double iou = 0;
    friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchReport {
    std::vector<MatchPair> tp_pairs;    // sorted by gt id
    std::vector<std::uint32_t> fp_ids;  // ascending
    std::vector<std::uint32_t> fn_ids;  // ascending
    double iou_threshold = 0.5;
};

// Candidates with IoU strictly above the threshold, accepted greedily by
// (IoU desc, gt id asc, pred id asc).
MatchReport match_instances(const LabelMap& pred, const LabelMap& gt, double iou_threshold = 0.5);

// sum(IoU over TP) / (TP + FP/2 + FN/2); 0 when everything is empty.
double panoptic_quality(const MatchReport& report);

struct DiceResult {
    double value = 0;
    bool both_empty = false;  // value is 1 by convention
};

DiceResult dice(const Mask& pred, const Mask& gt);

struct RankCounts {
    std::string model;
    int top1 = 0;
    int top2 = 0;
    int top3 = 0;
    friend bool operator==(const RankCounts&, const RankCounts&) = default;
};

// table[model][dataset]; NaN marks a missing entry, skipped for that dataset.
// Competition ranking: rank = 1 + number of models with a strictly higher score.
std::vector<RankCounts> rank_models(const std::vector<std::string>& models,
                                    const std::vector<std::vector<double>>& table);

// CSV with a header row (first column = model name, then one column per
// dataset). Empty cells are missing entries.
struct RankTable {
    std::vector<std::string> models;
    std::vector<std::string> datasets;
    std::vector<std::vector<double>> scores;
};
RankTable parse_rank_csv(const std::string& text);
std::string format_rank_csv(const std::vector<RankCounts>& counts);  // model,top1,top2,top3

}  // namespace hvseg
