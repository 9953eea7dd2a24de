#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hvseg/pipeline.hpp"

namespace hvseg {

// Samples the process resident set size (VmRSS) every `period_ms` on a
// background thread and keeps the peak.
class RssSampler {
public:
    explicit RssSampler(int period_ms = 100);
    ~RssSampler();
    RssSampler(const RssSampler&) = delete;
    RssSampler& operator=(const RssSampler&) = delete;
    double peak_mb() const noexcept { return peak_kb_.load() / 1024.0; }
    void stop();

private:
    std::atomic<bool> running_{true};
    std::atomic<long> peak_kb_{0};
    std::thread thread_;
};

long current_rss_kb();  // 0 when /proc is unavailable

struct BenchOptions {
    int warmup_runs = 3;
    int timed_runs = 10;
    std::string name = "hvseg";
    std::optional<std::filesystem::path> export_path;  // GeoJSON written here when set
};

struct BenchReport {
    std::string name;
    int warmup_runs = 0;
    int timed_runs = 0;
    std::vector<double> tile_latency_samples_ms;
    double tile_latency_ms_mean = 0;
    double tile_latency_ms_sd = 0;
    double slide_time_min = 0;
    double peak_memory_mb = 0;
    std::string memory_probe = "process_rss_sampled_100ms";
    std::size_t instance_count = 0;
    double instances_per_sec = 0;
    double processed_area_mpx = 0;
    double elapsed_min = 0;
    double mpx_per_min = 0;  // processed_area_mpx / elapsed_min
    std::size_t tiles_processed = 0;
    int workers = 1;
    std::string baseline_name;
    std::map<std::string, double> normalized_ratios;
};

// Time-like metrics: baseline / this. Throughput-like: this / baseline.
// Equal values give exactly 1; a zero denominator leaves the ratio out.
std::map<std::string, double> normalized_ratios(const BenchReport& report, const BenchReport& baseline);

// Tile latency over one 512 x 512 tile (prediction plus extraction), then one
// end-to-end slide run including export.
BenchReport run_bench(const SlideReader& slide, const PipelineConfig& config, Predictor& predictor,
                      const std::optional<BenchReport>& baseline = std::nullopt, const BenchOptions& options = {});
BenchReport run_bench(const SlideReader& slide, const PipelineConfig& config,
                      const std::optional<BenchReport>& baseline = std::nullopt, const BenchOptions& options = {});

std::string bench_to_json(const BenchReport& report);
BenchReport bench_from_json(const std::string& text);

struct LinearFit {
    double slope = 0;
    double intercept = 0;
    double r_squared = 0;
};
LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace hvseg
