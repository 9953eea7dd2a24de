#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hvseg/bench.hpp"
#include "hvseg/contours.hpp"
#include "hvseg/error.hpp"
#include "hvseg/export.hpp"
#include "hvseg/hv.hpp"
#include "hvseg/io.hpp"
#include "hvseg/labeling.hpp"
#include "hvseg/metrics.hpp"
#include "hvseg/pipeline.hpp"
#include "hvseg/service.hpp"
#include "hvseg/slide.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hvseg;

namespace {

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return 2;
        case ErrorCode::not_found: return 3;
        case ErrorCode::io: return 4;
        case ErrorCode::predictor: return 5;
        default: return 1;
    }
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

struct SegmentArgs {
    std::string slide;
    std::string heads = "nuclei";
    int tile = 512;
    int overlap = 64;
    double target_mpp = 0;
    std::string predictor = "synthetic";
    std::string predictor_dir;
    std::string out;
    bool no_tissue_filter = false;
    std::uint64_t seed = 0;
    int workers = 1;
    int batch = 8;
    double prob_noise = 0, hv_noise = 0;
    int jitter = 0;
    bool labels = false;
};

PipelineConfig pipeline_config(const SegmentArgs& a, Modality modality) {
    PipelineConfig cfg;
    cfg.tile_size = a.tile;
    cfg.overlap = a.overlap;
    if (a.target_mpp > 0) cfg.target_mpp = a.target_mpp;
    cfg.heads = heads_for(modality, split_csv(a.heads));
    cfg.tissue_filter = !a.no_tissue_filter;
    cfg.workers = a.workers;
    cfg.predictor.kind = predictor_kind_from_string(a.predictor);
    cfg.predictor.seed = a.seed;
    cfg.predictor.batch_size = a.batch;
    cfg.predictor.noise = {a.prob_noise, a.hv_noise, a.jitter};
    cfg.predictor.source_dir = a.predictor_dir;
    return cfg;
}

void add_segment_options(CLI::App* cmd, SegmentArgs& a) {
    cmd->add_option("--slide", a.slide, "slide file (png/tif/*.synth.json)")->required();
    cmd->add_option("--heads", a.heads, "comma list: nuclei,cells");
    cmd->add_option("--tile", a.tile, "tile size in working pixels");
    cmd->add_option("--overlap", a.overlap, "tile overlap");
    cmd->add_option("--target-mpp", a.target_mpp, "working resolution (0 = native)");
    cmd->add_option("--predictor", a.predictor, "synthetic|files");
    cmd->add_option("--predictor-dir", a.predictor_dir, "directory of .f32 tile predictions");
    cmd->add_flag("--no-tissue-filter", a.no_tissue_filter);
    cmd->add_option("--seed", a.seed);
    cmd->add_option("--workers", a.workers, "extraction threads (0 = all cores)");
    cmd->add_option("--batch", a.batch, "predictor batch size");
    cmd->add_option("--prob-noise", a.prob_noise);
    cmd->add_option("--hv-noise", a.hv_noise);
    cmd->add_option("--jitter", a.jitter, "oracle boundary jitter in pixels");
}

int cmd_hvgen(const std::string& labels_path, const std::string& out) {
    const LabelMap labels = io::read_label_map(labels_path);
    const HVField hv = generate_hv_maps(labels);
    io::write_float_raster(out, {hv.h, hv.v});
    const HVStats s = hv_stats(hv, labels);
    json j = {{"width", labels.width()},  {"height", labels.height()}, {"instance_count", s.instance_count},
              {"h_min", s.h_min},         {"h_max", s.h_max},          {"v_min", s.v_min},
              {"v_max", s.v_max},         {"out", out}};
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_segment(const SegmentArgs& a) {
    const auto slide = open_slide(a.slide);
    const PipelineConfig cfg = pipeline_config(a, slide->meta().modality);
    auto last = std::chrono::steady_clock::now() - std::chrono::seconds(1);
    const auto collection = run_slide(*slide, cfg, [&](std::size_t done, std::size_t total) {
        const auto now = std::chrono::steady_clock::now();
        if (done == total || now - last > std::chrono::milliseconds(250)) {
            std::cerr << "\r" << done << "/" << total << std::flush;
            last = now;
        }
    });
    std::cerr << "\n";
    const fs::path out(a.out);
    fs::create_directories(out);
    io::write_file_atomic(out / "instances.geojson", export_collection(collection, ExportFormat::geojson));
    io::write_file_atomic(out / "instances.json", export_collection(collection, ExportFormat::json));
    io::write_file_atomic(out / "instances.csv", export_collection(collection, ExportFormat::table));
    if (a.labels) {
        const auto& m = collection.slide;
        for (Head h : collection.heads)
            io::write_label_map(out / (to_string(h) + "_labels.tif"), rasterize_instances(collection, h, m.width_px, m.height_px));
    }
    const auto& p = collection.provenance;
    json counts = json::object();
    for (Head h : collection.heads) counts[to_string(h)] = collection.count(h);
    json summary = {{"config_hash", p.config_hash},
                    {"counts", counts},
                    {"tiles_total", p.tiles_total},
                    {"tiles_scheduled", p.tiles_scheduled},
                    {"tiles_processed", p.tiles_processed},
                    {"failed_tiles", p.failures.size()},
                    {"peak_resident_tiles", p.peak_resident_tiles},
                    {"scale", p.scale},
                    {"missing_mpp", p.missing_mpp},
                    {"total_s", p.total_s}};
    std::cout << summary.dump() << "\n";
    if (p.missing_mpp) std::cerr << "warning: slide has no mpp; processed at native resolution\n";
    return p.failures.empty() ? 0 : 6;
}

int cmd_predict(const SegmentArgs& a) {
    const auto slide = open_slide(a.slide);
    PipelineConfig cfg = pipeline_config(a, slide->meta().modality);
    cfg.predictor.kind = PredictorKind::synthetic_oracle;
    cfg.predictor.heads = expand_heads(cfg.heads);
    auto predictor = make_predictor(cfg.predictor, *slide);
    const SlideMeta m = slide->meta();
    const ScaleFactor sf = cfg.target_mpp ? virtual_scale_factor(m.mpp, *cfg.target_mpp) : ScaleFactor{};
    const int w = std::max(1, static_cast<int>(std::lround(m.width_px * sf.scale)));
    const int h = std::max(1, static_cast<int>(std::lround(m.height_px * sf.scale)));
    const TileGrid grid = build_tile_grid(w, h, cfg.tile_size, cfg.overlap);
    fs::create_directories(a.out);
    std::size_t n = 0;
    for (const auto& t : grid.tiles) {
        TileBatch b;
        b.tiles.push_back(read_tile_input(*slide, t, cfg.tile_size, sf.scale));
        const auto preds = predictor->predict(b);
        for (const auto& pred : preds.at(0)) write_prediction(a.out, t, pred);
        std::cerr << "\r" << ++n << "/" << grid.tiles.size() << std::flush;
    }
    std::cerr << "\n";
    std::cout << json{{"tiles", grid.tiles.size()}, {"out", a.out}}.dump() << "\n";
    return 0;
}

bool is_geojson(const std::string& path) {
    const auto ext = fs::path(path).extension().string();
    return ext == ".geojson" || ext == ".json";
}

// Label maps are read as is; GeoJSON features of one head are rasterized.
LabelMap load_instances(const std::string& path, const std::string& head, int width, int height) {
    if (!is_geojson(path)) return io::read_label_map(path);
    require(width > 0 && height > 0, "GeoJSON input needs --width/--height or a label map on the other side");
    const auto collection = parse_geojson(io::read_text_file(path));
    LabelMap out(width, height, 0);
    const Head want = head.empty() ? Head::he_nuclei : head_from_string(head);
    for (const auto& inst : collection.instances)
        if (inst.head == want) rasterize_polygon(inst.polygon, out, inst.id);
    return out;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, double iou, const std::string& head, int width,
             int height) {
    for (const auto& p : {pred_path, gt_path}) {
        if (!is_geojson(p) && (width <= 0 || height <= 0)) {
            const LabelMap l = io::read_label_map(p);
            width = l.width();
            height = l.height();
        }
    }
    const LabelMap pred = load_instances(pred_path, head, width, height);
    const LabelMap gt = load_instances(gt_path, head, width, height);
    require_same_shape(pred, gt, "eval");
    const auto report = match_instances(pred, gt, iou);
    const auto d = dice(foreground_of(pred), foreground_of(gt));
    json j = {{"pq", panoptic_quality(report)},
              {"dice", d.value},
              {"tp", report.tp_pairs.size()},
              {"fp", report.fp_ids.size()},
              {"fn", report.fn_ids.size()},
              {"iou_threshold", iou}};
    if (d.both_empty) j["dice_both_empty"] = true;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_bench(const SegmentArgs& a, const std::string& baseline, const std::string& out, const std::string& export_path,
              int warmup, int runs, const std::string& name) {
    const auto slide = open_slide(a.slide);
    const PipelineConfig cfg = pipeline_config(a, slide->meta().modality);
    std::optional<BenchReport> base;
    if (!baseline.empty()) base = bench_from_json(io::read_text_file(baseline));
    BenchOptions opt;
    opt.warmup_runs = warmup;
    opt.timed_runs = runs;
    opt.name = name;
    if (!export_path.empty()) opt.export_path = export_path;
    const auto report = run_bench(*slide, cfg, base, opt);
    const auto text = bench_to_json(report);
    if (!out.empty()) io::write_file_atomic(out, text);
    std::cout << text;
    return 0;
}

int cmd_rank(const std::string& table) {
    const RankTable t = parse_rank_csv(io::read_text_file(table));
    std::cout << format_rank_csv(rank_models(t.models, t.scores));
    return 0;
}

int cmd_serve(ServiceConfig cfg, const std::string& host, bool demo) {
    Service svc(cfg);
    if (demo) {
        const auto png = write_demo_slide(cfg.data_dir / "demo");
        const auto e = svc.register_slide(png);
        std::cerr << "demo slide " << e.slide_id << "\n";
    }
    std::cerr << "listening on " << host << ":" << cfg.port << "\n";
    svc.listen(host, cfg.port);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hvseg: nucleus and cell instance segmentation from HV maps"};
    app.require_subcommand(1);

    std::string labels_path, hv_out;
    auto* hvgen = app.add_subcommand("hvgen", "HV target maps from a label map");
    hvgen->add_option("--labels", labels_path)->required();
    hvgen->add_option("--out", hv_out, ".f32 output (channels h, v)")->required();

    SegmentArgs seg;
    auto* segment = app.add_subcommand("segment", "segment a slide");
    add_segment_options(segment, seg);
    segment->add_option("--out", seg.out, "output directory")->required();
    segment->add_flag("--labels", seg.labels, "also write per-head label maps");

    SegmentArgs pred_args;
    auto* predict = app.add_subcommand("predict", "write oracle predictions as .f32 tiles");
    add_segment_options(predict, pred_args);
    predict->add_option("--out", pred_args.out, "output directory")->required();

    std::string pred_path, gt_path;
    double iou = 0.5;
    auto* eval = app.add_subcommand("eval", "PQ and Dice between label maps");
    eval->add_option("--pred", pred_path)->required();
    eval->add_option("--gt", gt_path)->required();
    eval->add_option("--iou", iou);
    std::string eval_head;
    int eval_w = 0, eval_h = 0;
    eval->add_option("--head", eval_head, "head to compare for GeoJSON inputs (default he_nuclei)");
    eval->add_option("--width", eval_w);
    eval->add_option("--height", eval_h);

    SegmentArgs bench_args;
    std::string baseline, bench_out, bench_export, bench_name = "hvseg";
    int warmup = 3, runs = 10;
    auto* bench = app.add_subcommand("bench", "tile latency and end-to-end throughput");
    add_segment_options(bench, bench_args);
    bench->add_option("--baseline", baseline, "earlier report to normalize against");
    bench->add_option("--out", bench_out, "write the report here");
    bench->add_option("--export", bench_export, "write the GeoJSON here");
    bench->add_option("--warmup", warmup);
    bench->add_option("--runs", runs);
    bench->add_option("--name", bench_name);

    std::string table;
    auto* rank = app.add_subcommand("rank", "top-1/2/3 counts from a score table");
    rank->add_option("--table", table)->required();

    ServiceConfig scfg;
    std::string host = "0.0.0.0";
    bool demo = false;
    auto* serve = app.add_subcommand("serve", "HTTP service");
    std::string data_dir, predictor_dir;
    serve->add_option("--port", scfg.port);
    serve->add_option("--data-dir", data_dir);
    serve->add_option("--workers", scfg.workers);
    serve->add_option("--predictor-dir", predictor_dir);
    serve->add_option("--host", host);
    serve->add_flag("--demo", demo, "write and register a demo slide");

    std::string demo_dir;
    int demo_size = 1024;
    std::uint64_t demo_seed = 7;
    auto* demo_cmd = app.add_subcommand("demo", "write the demo slide with truth");
    demo_cmd->add_option("--out", demo_dir)->required();
    demo_cmd->add_option("--size", demo_size);
    demo_cmd->add_option("--seed", demo_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*hvgen) return cmd_hvgen(labels_path, hv_out);
        if (*segment) return cmd_segment(seg);
        if (*predict) return cmd_predict(pred_args);
        if (*eval) return cmd_eval(pred_path, gt_path, iou, eval_head, eval_w, eval_h);
        if (*bench) return cmd_bench(bench_args, baseline, bench_out, bench_export, warmup, runs, bench_name);
        if (*rank) return cmd_rank(table);
        if (*serve) {
            ServiceConfig env = ServiceConfig::from_env();
            if (serve->count("--port") == 0) scfg.port = env.port;
            if (serve->count("--workers") == 0) scfg.workers = env.workers;
            scfg.data_dir = data_dir.empty() ? env.data_dir : fs::path(data_dir);
            scfg.predictor_dir = predictor_dir.empty() ? env.predictor_dir : fs::path(predictor_dir);
            return cmd_serve(scfg, host, demo);
        }
        if (*demo_cmd) {
            std::cout << write_demo_slide(demo_dir, demo_size, demo_seed).string() << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
