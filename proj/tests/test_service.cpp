#include <gtest/gtest.h>

#include "httplib.h"
#include "json.hpp"

#include "hvseg/error.hpp"
#include "hvseg/io.hpp"
#include "hvseg/service.hpp"
#include "support/oracles.hpp"

using namespace hvseg;
using nlohmann::json;

namespace {

ServiceConfig config_in(const std::string& name, int workers = 1) {
    ServiceConfig c;
    c.data_dir = oracle::temp_dir(name) / "data";
    c.workers = workers;
    return c;
}

std::filesystem::path demo(const std::string& name, int size = 512) {
    return write_demo_slide(oracle::temp_dir(name + "-slide"), size, 7);
}

JobRequest request_for(const std::string& slide_id) {
    JobRequest r;
    r.slide_id = slide_id;
    r.tile_size = 256;
    r.overlap = 32;
    return r;
}

}  // namespace

TEST(Pyramid, Levels) {
    EXPECT_EQ(pyramid_levels(1024, 1024), (std::vector<int>{1}));
    EXPECT_EQ(pyramid_levels(2048, 2048), (std::vector<int>{1, 2}));
    EXPECT_EQ(pyramid_levels(2049, 100), (std::vector<int>{1, 2, 4}));
    EXPECT_EQ(pyramid_levels(100, 10000), (std::vector<int>{1, 2, 4, 8, 16}));
}

TEST(Service, RegistryAndTiles) {
    const auto dir = oracle::temp_dir("svc-tiles");
    synthetic::SlideSpec spec;
    spec.width = spec.height = 2048;
    const synthetic::ProceduralSlide src(spec);
    const Image full = src.render(0, 0, 2048, 2048);
    io::write_image(dir / "big.png", full);

    Service svc(config_in("svc-tiles-data"));
    const auto e = svc.register_slide(dir / "big.png");
    EXPECT_EQ(e.levels, (std::vector<int>{1, 2}));
    EXPECT_EQ(e.meta.width_px, 2048);
    EXPECT_EQ(svc.register_slide(dir / "big.png").slide_id, e.slide_id);
    EXPECT_EQ(svc.slides().size(), 1u);

    // Level 1: plain crop.
    const Image t = svc.tile_image(e.slide_id, 1, 3, 2);
    ASSERT_EQ(t.width, 256);
    for (int y = 0; y < 256; y += 17)
        for (int x = 0; x < 256; x += 13)
            ASSERT_TRUE(std::equal(t.at(x, y), t.at(x, y) + 3, full.at(768 + x, 512 + y)));
    // Level 2: rounded 2x2 box average.
    const Image t2 = svc.tile_image(e.slide_id, 2, 1, 3);
    ASSERT_EQ(t2.width, 256);
    for (int y = 0; y < 256; y += 11)
        for (int x = 0; x < 256; x += 7)
            for (int k = 0; k < 3; ++k) {
                const int sx = 512 + 2 * x, sy = 1536 + 2 * y;
                const unsigned sum = full.at(sx, sy)[k] + full.at(sx + 1, sy)[k] + full.at(sx, sy + 1)[k] +
                                     full.at(sx + 1, sy + 1)[k];
                ASSERT_EQ(t2.at(x, y)[k], (sum + 2) / 4);
            }
    const auto png = svc.tile_png(e.slide_id, 1, 0, 0);
    EXPECT_EQ(io::decode_image(png).pixels, svc.tile_image(e.slide_id, 1, 0, 0).pixels);
    EXPECT_THROW(svc.tile_image(e.slide_id, 1, 8, 0), Error);
    EXPECT_THROW(svc.tile_image(e.slide_id, 4, 0, 0), Error);
    EXPECT_THROW(svc.slide("nope"), Error);
    EXPECT_THROW(svc.register_slide(dir / "missing.png"), Error);
}

TEST(Service, EdgeTilesAreCropped) {
    const auto dir = oracle::temp_dir("svc-edge");
    io::write_image(dir / "odd.png", Image(300, 270, 3, 128));
    Service svc(config_in("svc-edge-data"));
    const auto e = svc.register_slide(dir / "odd.png");
    const Image t = svc.tile_image(e.slide_id, 1, 1, 1);
    EXPECT_EQ(t.width, 44);
    EXPECT_EQ(t.height, 14);
}

TEST(Service, JobLifecycle) {
    Service svc(config_in("svc-life"));
    const auto e = svc.register_slide(demo("svc-life"));
    auto req = request_for(e.slide_id);
    req.heads = {"nuclei", "cells"};
    const auto id = svc.submit(req);
    EXPECT_EQ(id, "job-000001");
    const auto v = svc.wait(id, 120);
    ASSERT_EQ(v.status, JobStatus::succeeded) << v.error.value_or("");
    EXPECT_EQ(v.history, (std::vector<JobStatus>{JobStatus::queued, JobStatus::running, JobStatus::succeeded}));
    EXPECT_EQ(v.progress, 1.0);

    // Same numbers as a direct engine run.
    const auto slide = open_slide(e.path);
    PipelineConfig cfg;
    cfg.tile_size = 256;
    cfg.overlap = 32;
    cfg.heads = {Head::he_nuclei, Head::he_cells};
    const auto direct = run_slide(*slide, cfg);
    EXPECT_EQ(v.instance_count, direct.instances.size());
    EXPECT_EQ(svc.result(id, ExportFormat::geojson), export_collection(direct, ExportFormat::geojson));
    EXPECT_EQ(svc.result(id, ExportFormat::table).rfind(kTableHeader, 0), 0u);

    const auto again = svc.wait(svc.submit(req), 120);
    EXPECT_EQ(svc.result(again.job_id, ExportFormat::geojson), svc.result(id, ExportFormat::geojson));
    EXPECT_EQ(svc.jobs().size(), 2u);
    svc.remove_job(id);
    EXPECT_THROW(svc.job(id), Error);
}

TEST(Service, RoiResultsUseSlideCoordinates) {
    Service svc(config_in("svc-roi"));
    const auto e = svc.register_slide(demo("svc-roi"));
    auto req = request_for(e.slide_id);
    req.roi = Rect{128, 64, 256, 256};
    const auto v = svc.wait(svc.submit(req), 120);
    ASSERT_EQ(v.status, JobStatus::succeeded);
    const auto parsed = parse_geojson(svc.result(v.job_id, ExportFormat::geojson));
    ASSERT_GT(parsed.instances.size(), 0u);
    for (const auto& inst : parsed.instances) {
        const auto& b = inst.morph.bbox;
        EXPECT_GE(b.x0, 127.5);
        EXPECT_LE(b.x1, 384.5);
        EXPECT_GE(b.y0, 63.5);
        EXPECT_LE(b.y1, 320.5);
    }
    req.roi = Rect{400, 400, 256, 256};
    try {
        svc.submit(req);
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::invalid_argument);
    }
}

TEST(Service, FailedJobsReportErrors) {
    auto cfg = config_in("svc-fail");
    cfg.predictor_dir = oracle::temp_dir("svc-fail-empty-preds");
    Service svc(cfg);
    const auto e = svc.register_slide(demo("svc-fail"));
    auto req = request_for(e.slide_id);
    req.predictor.kind = PredictorKind::file_backed;
    const auto v = svc.wait(svc.submit(req), 120);
    EXPECT_EQ(v.status, JobStatus::failed);
    ASSERT_TRUE(v.error.has_value());
    EXPECT_NE(v.error->find("tile(s) failed"), std::string::npos);
    EXPECT_EQ(v.failed_tiles, 9u);
    try {
        svc.result(v.job_id, ExportFormat::geojson);
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::conflict);
    }
    req.heads = {"organelles"};
    EXPECT_THROW(svc.submit(req), Error);
    req.heads = {"nuclei"};
    req.overlap = 256;
    EXPECT_THROW(svc.submit(req), Error);
}

TEST(Service, ConcurrentJobs) {
    Service svc(config_in("svc-conc", 2));
    const auto e = svc.register_slide(demo("svc-conc"));
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) {
        auto req = request_for(e.slide_id);
        req.predictor.seed = static_cast<std::uint64_t>(i % 2);
        req.predictor.noise.prob_sigma = 0.05;
        ids.push_back(svc.submit(req));
    }
    std::vector<std::string> docs;
    for (const auto& id : ids) {
        ASSERT_EQ(svc.wait(id, 300).status, JobStatus::succeeded);
        docs.push_back(svc.result(id, ExportFormat::geojson));
    }
    EXPECT_EQ(docs[0], docs[2]);
    EXPECT_EQ(docs[1], docs[3]);
}

TEST(Service, RestartKeepsStateAndFailsInterruptedJobs) {
    const auto cfg = config_in("svc-restart");
    std::string slide_id, done;
    {
        Service svc(cfg);
        slide_id = svc.register_slide(demo("svc-restart")).slide_id;
        done = svc.submit(request_for(slide_id));
        ASSERT_EQ(svc.wait(done, 120).status, JobStatus::succeeded);
    }
    // Fake a job that was running when the process died.
    auto j = json::parse(io::read_text_file(cfg.data_dir / "jobs" / done / "job.json"));
    j["job_id"] = "job-000099";
    j["status"] = "running";
    j["history"] = {"queued", "running"};
    std::filesystem::create_directories(cfg.data_dir / "jobs" / "job-000099");
    io::write_file_atomic(cfg.data_dir / "jobs" / "job-000099" / "job.json", j.dump());

    Service svc(cfg);
    EXPECT_EQ(svc.slide(slide_id).slide_id, slide_id);
    EXPECT_EQ(svc.job(done).status, JobStatus::succeeded);
    EXPECT_FALSE(svc.result(done, ExportFormat::geojson).empty());
    const auto interrupted = svc.job("job-000099");
    EXPECT_EQ(interrupted.status, JobStatus::failed);
    EXPECT_EQ(interrupted.error, "interrupted");
    EXPECT_EQ(svc.submit(request_for(slide_id)), "job-000002");
}

TEST(ServiceHttp, EndToEnd) {
    Service svc(config_in("svc-http"));
    const int port = svc.start();
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(60);

    const auto png = demo("svc-http");
    auto r = cli.Post("/slides", json{{"path", png.string()}}.dump(), "application/json");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 201);
    const auto slide_id = json::parse(r->body).at("slide_id").get<std::string>();

    // Raw upload of the same bytes gives its own stored copy.
    const auto bytes = io::read_text_file(png);
    r = cli.Post("/slides?filename=up.png", bytes, "application/octet-stream");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 201);

    r = cli.Get("/slides");
    ASSERT_TRUE(r);
    EXPECT_EQ(json::parse(r->body).at("slides").size(), 2u);
    r = cli.Get("/slides/" + slide_id);
    EXPECT_EQ(json::parse(r->body).at("meta").at("width"), 512);
    r = cli.Get("/slides/" + slide_id + "/tiles/1/1/1.png");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(io::decode_image(std::vector<std::uint8_t>(r->body.begin(), r->body.end())).width, 256);
    EXPECT_EQ(cli.Get("/slides/" + slide_id + "/tiles/1/5/0")->status, 404);
    EXPECT_EQ(cli.Get("/slides/nope")->status, 404);

    r = cli.Post("/jobs", json{{"slide_id", slide_id}, {"tile_size", 256}, {"overlap", 32}}.dump(),
                 "application/json");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 202);
    const auto job_id = json::parse(r->body).at("job_id").get<std::string>();
    const auto early = cli.Get("/jobs/" + job_id + "/result");
    EXPECT_TRUE(early->status == 409 || early->status == 200);

    svc.wait(job_id, 120);
    r = cli.Get("/jobs/" + job_id);
    const auto view = json::parse(r->body);
    EXPECT_EQ(view.at("status"), "succeeded");
    EXPECT_EQ(view.at("history"), (json{"queued", "running", "succeeded"}));
    r = cli.Get("/jobs/" + job_id + "/result");
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body).at("features").size(), view.at("instance_count").get<std::size_t>());
    r = cli.Get("/jobs/" + job_id + "/result?format=csv");
    EXPECT_EQ(r->body.rfind(kTableHeader, 0), 0u);
    EXPECT_EQ(cli.Get("/jobs/" + job_id + "/result?format=parquet")->status, 400);
    EXPECT_EQ(json::parse(cli.Get("/jobs")->body).at("jobs").size(), 1u);

    r = cli.Post("/jobs", json{{"slide_id", slide_id}, {"roi", {{"x", 500}, {"y", 0}, {"width", 64}, {"height", 64}}}}.dump(),
                 "application/json");
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(json::parse(r->body).at("code"), "invalid_argument");
    EXPECT_EQ(cli.Post("/jobs", "{broken", "application/json")->status, 400);
    EXPECT_EQ(cli.Post("/jobs", json{{"slide_id", "nope"}}.dump(), "application/json")->status, 404);
    EXPECT_EQ(cli.Get("/jobs/job-999999")->status, 404);
    EXPECT_EQ(cli.Get("/nowhere")->status, 404);

    r = cli.Delete("/jobs/" + job_id);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(cli.Get("/jobs/" + job_id)->status, 404);
    svc.stop();
}

TEST(ServiceConfig, FromEnvironment) {
    ::setenv("PORT", "9123", 1);
    ::setenv("WORKERS", "3", 1);
    ::setenv("DATA_DIR", "/tmp/x", 1);
    const auto c = ServiceConfig::from_env();
    EXPECT_EQ(c.port, 9123);
    EXPECT_EQ(c.workers, 3);
    EXPECT_EQ(c.data_dir, "/tmp/x");
    ::setenv("PORT", "eighty", 1);
    EXPECT_THROW(ServiceConfig::from_env(), Error);
    ::unsetenv("PORT");
    ::unsetenv("WORKERS");
    ::unsetenv("DATA_DIR");
}

TEST(JobRequest, JsonForms) {
    const auto a = job_request_from_json(R"({"slide_id":"s1","predictor":"files"})");
    EXPECT_EQ(a.predictor.kind, PredictorKind::file_backed);
    EXPECT_EQ(a.heads, (std::vector<std::string>{"nuclei"}));
    const auto b = job_request_from_json(
        R"({"slide_id":"s1","heads":["cells"],"predictor":{"kind":"synthetic","seed":4,"prob_sigma":0.1},"target_mpp":0.5})");
    EXPECT_EQ(b.predictor.seed, 4u);
    EXPECT_EQ(b.predictor.noise.prob_sigma, 0.1);
    EXPECT_EQ(b.target_mpp, 0.5);
    EXPECT_THROW(job_request_from_json("{}"), Error);
}
