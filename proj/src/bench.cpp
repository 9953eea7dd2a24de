#include "hvseg/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "hvseg/error.hpp"
#include "hvseg/export.hpp"
#include "hvseg/io.hpp"

namespace hvseg {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

long current_rss_kb() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmRSS:", 0) == 0) {
            std::istringstream ss(line.substr(6));
            long kb = 0;
            ss >> kb;
            return kb;
        }
    }
    return 0;
}

RssSampler::RssSampler(int period_ms) {
    peak_kb_ = current_rss_kb();
    thread_ = std::thread([this, period_ms] {
        while (running_) {
            const long kb = current_rss_kb();
            long prev = peak_kb_.load();
            while (kb > prev && !peak_kb_.compare_exchange_weak(prev, kb)) {
            }
            for (int waited = 0; waited < period_ms && running_; waited += 5)
                std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    });
}

void RssSampler::stop() {
    running_ = false;
    if (thread_.joinable()) thread_.join();
}

RssSampler::~RssSampler() { stop(); }

std::map<std::string, double> normalized_ratios(const BenchReport& r, const BenchReport& b) {
    std::map<std::string, double> out;
    auto ratio = [&](const char* name, double num, double den) {
        if (den == 0.0 || num == 0.0) return;
        out[name] = num == den ? 1.0 : num / den;
    };
    ratio("tile_latency_ms", b.tile_latency_ms_mean, r.tile_latency_ms_mean);
    ratio("slide_time_min", b.slide_time_min, r.slide_time_min);
    ratio("peak_memory_mb", b.peak_memory_mb, r.peak_memory_mb);
    ratio("instances_per_sec", r.instances_per_sec, b.instances_per_sec);
    ratio("mpx_per_min", r.mpx_per_min, b.mpx_per_min);
    return out;
}

BenchReport run_bench(const SlideReader& slide, const PipelineConfig& config, Predictor& predictor,
                      const std::optional<BenchReport>& baseline, const BenchOptions& options) {
    config.validate();
    require(options.warmup_runs >= 0 && options.timed_runs >= 1, "need at least one timed run");
    BenchReport report;
    report.name = options.name;
    report.warmup_runs = options.warmup_runs;
    report.timed_runs = options.timed_runs;

    // Single-tile latency on the grid tile closest to the slide center.
    const SlideMeta meta = slide.meta();
    const auto grid = build_tile_grid(meta.width_px, meta.height_px, config.tile_size, config.overlap);
    const TileRef* center = &grid.tiles.front();
    double best = 1e300;
    for (const auto& t : grid.tiles) {
        const double d = std::hypot(t.x + t.width / 2.0 - meta.width_px / 2.0, t.y + t.height / 2.0 - meta.height_px / 2.0);
        if (d < best) {
            best = d;
            center = &t;
        }
    }
    TileBatch batch;
    batch.tiles.push_back(read_tile_input(slide, *center, config.tile_size));
    auto one_run = [&] {
        auto sets = predictor.predict(batch);
        auto labels = extract_tile(sets.at(0), config.extraction);
        return labels.size();
    };
    for (int i = 0; i < options.warmup_runs; ++i) one_run();
    for (int i = 0; i < options.timed_runs; ++i) {
        const auto t0 = Clock::now();
        one_run();
        report.tile_latency_samples_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    }
    const auto& s = report.tile_latency_samples_ms;
    report.tile_latency_ms_mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    double var = 0;
    for (double v : s) var += (v - report.tile_latency_ms_mean) * (v - report.tile_latency_ms_mean);
    report.tile_latency_ms_sd = s.size() > 1 ? std::sqrt(var / static_cast<double>(s.size() - 1)) : 0.0;

    // End-to-end slide run, from ingestion to written export.
    RssSampler rss(100);
    const auto t0 = Clock::now();
    const auto collection = run_slide(slide, config, predictor);
    const auto doc = export_collection(collection, ExportFormat::geojson);
    if (options.export_path) io::write_file_atomic(*options.export_path, doc);
    const double elapsed_s = std::chrono::duration<double>(Clock::now() - t0).count();
    rss.stop();

    report.peak_memory_mb = rss.peak_mb();
    report.instance_count = collection.instances.size();
    report.elapsed_min = elapsed_s / 60.0;
    report.slide_time_min = report.elapsed_min;
    report.instances_per_sec = elapsed_s > 0 ? static_cast<double>(report.instance_count) / elapsed_s : 0.0;
    report.processed_area_mpx = collection.provenance.processed_area_px / 1e6;
    report.mpx_per_min = report.elapsed_min > 0 ? report.processed_area_mpx / report.elapsed_min : 0.0;
    report.tiles_processed = collection.provenance.tiles_processed;
    report.workers = collection.provenance.workers;
    if (baseline) {
        report.baseline_name = baseline->name;
        report.normalized_ratios = normalized_ratios(report, *baseline);
    }
    return report;
}

BenchReport run_bench(const SlideReader& slide, const PipelineConfig& config,
                      const std::optional<BenchReport>& baseline, const BenchOptions& options) {
    PredictorSpec spec = config.predictor;
    spec.heads = expand_heads(config.heads);
    auto predictor = make_predictor(spec, slide);
    return run_bench(slide, config, *predictor, baseline, options);
}

std::string bench_to_json(const BenchReport& r) {
    json j;
    j["name"] = r.name;
    j["warmup_runs"] = r.warmup_runs;
    j["timed_runs"] = r.timed_runs;
    j["tile_latency_samples_ms"] = r.tile_latency_samples_ms;
    j["tile_latency_ms"] = {{"mean", r.tile_latency_ms_mean}, {"sd", r.tile_latency_ms_sd}};
    j["slide_time_min"] = r.slide_time_min;
    j["peak_memory_mb"] = r.peak_memory_mb;
    j["memory_probe"] = r.memory_probe;
    j["instance_count"] = r.instance_count;
    j["instances_per_sec"] = r.instances_per_sec;
    j["processed_area_mpx"] = r.processed_area_mpx;
    j["elapsed_min"] = r.elapsed_min;
    j["mpx_per_min"] = r.mpx_per_min;
    j["tiles_processed"] = r.tiles_processed;
    j["workers"] = r.workers;
    if (!r.baseline_name.empty()) {
        j["baseline"] = r.baseline_name;
        j["normalized_ratios"] = r.normalized_ratios;
    }
    return j.dump(2) + "\n";
}

BenchReport bench_from_json(const std::string& text) {
    BenchReport r;
    try {
        const json j = json::parse(text);
        r.name = j.value("name", std::string("baseline"));
        r.warmup_runs = j.value("warmup_runs", 0);
        r.timed_runs = j.value("timed_runs", 0);
        r.tile_latency_samples_ms = j.value("tile_latency_samples_ms", std::vector<double>{});
        r.tile_latency_ms_mean = j.at("tile_latency_ms").at("mean").get<double>();
        r.tile_latency_ms_sd = j.at("tile_latency_ms").value("sd", 0.0);
        r.slide_time_min = j.at("slide_time_min").get<double>();
        r.peak_memory_mb = j.at("peak_memory_mb").get<double>();
        r.memory_probe = j.value("memory_probe", r.memory_probe);
        r.instance_count = j.value("instance_count", std::size_t{0});
        r.instances_per_sec = j.at("instances_per_sec").get<double>();
        r.processed_area_mpx = j.value("processed_area_mpx", 0.0);
        r.elapsed_min = j.value("elapsed_min", 0.0);
        r.mpx_per_min = j.at("mpx_per_min").get<double>();
        r.tiles_processed = j.value("tiles_processed", std::size_t{0});
        r.workers = j.value("workers", 1);
        r.baseline_name = j.value("baseline", std::string());
        if (j.contains("normalized_ratios"))
            r.normalized_ratios = j.at("normalized_ratios").get<std::map<std::string, double>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("malformed bench report: ") + e.what());
    }
    return r;
}

LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    require(xs.size() == ys.size() && xs.size() >= 2, "need at least two points for a line fit");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    require(sxx > 0, "line fit needs distinct x values");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

}  // namespace hvseg
