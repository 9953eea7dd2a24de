#include "hvseg/service.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "hvseg/error.hpp"
#include "hvseg/io.hpp"

namespace hvseg {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<int> pyramid_levels(int width, int height) {
    std::vector<int> levels{1};
    while (std::max(width, height) / static_cast<double>(levels.back()) > 1024.0) levels.push_back(levels.back() * 2);
    return levels;
}

std::string to_string(JobStatus s) {
    switch (s) {
        case JobStatus::queued: return "queued";
        case JobStatus::running: return "running";
        case JobStatus::succeeded: return "succeeded";
        case JobStatus::failed: return "failed";
    }
    return "failed";
}

JobStatus job_status_from_string(const std::string& s) {
    if (s == "queued") return JobStatus::queued;
    if (s == "running") return JobStatus::running;
    if (s == "succeeded") return JobStatus::succeeded;
    if (s == "failed") return JobStatus::failed;
    throw Error(ErrorCode::invalid_argument, "unknown job status '" + s + "'");
}

ServiceConfig ServiceConfig::from_env() {
    ServiceConfig c;
    auto env = [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        if (v && *v) return std::string(v);
        return std::nullopt;
    };
    try {
        if (auto v = env("PORT")) c.port = std::stoi(*v);
        if (auto v = env("WORKERS")) c.workers = std::stoi(*v);
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::invalid_argument, "PORT and WORKERS must be integers");
    }
    if (auto v = env("DATA_DIR")) c.data_dir = *v;
    if (auto v = env("PREDICTOR_DIR")) c.predictor_dir = *v;
    return c;
}

namespace {

json meta_json(const SlideMeta& m) {
    return {{"width", m.width_px},
            {"height", m.height_px},
            {"mpp", m.mpp ? json(*m.mpp) : json(nullptr)},
            {"modality", to_string(m.modality)},
            {"channel_count", m.channel_count}};
}

SlideMeta meta_from_json(const json& j) {
    SlideMeta m;
    m.width_px = j.at("width").get<int>();
    m.height_px = j.at("height").get<int>();
    if (!j.at("mpp").is_null()) m.mpp = j.at("mpp").get<double>();
    m.modality = modality_from_string(j.at("modality").get<std::string>());
    m.channel_count = j.value("channel_count", 3);
    return m;
}

json entry_json(const SlideEntry& e) {
    return {{"slide_id", e.slide_id}, {"path", e.path.string()}, {"meta", meta_json(e.meta)}, {"levels", e.levels}};
}

SlideEntry entry_from_json(const json& j) {
    SlideEntry e;
    e.slide_id = j.at("slide_id").get<std::string>();
    e.path = j.at("path").get<std::string>();
    e.meta = meta_from_json(j.at("meta"));
    e.levels = j.at("levels").get<std::vector<int>>();
    return e;
}

json request_json(const JobRequest& r) {
    json j;
    j["slide_id"] = r.slide_id;
    j["roi"] = r.roi ? json{{"x", r.roi->x}, {"y", r.roi->y}, {"width", r.roi->width}, {"height", r.roi->height}}
                     : json(nullptr);
    j["heads"] = r.heads;
    j["predictor"] = {{"kind", to_string(r.predictor.kind)},
                      {"batch_size", r.predictor.batch_size},
                      {"seed", r.predictor.seed},
                      {"prob_sigma", r.predictor.noise.prob_sigma},
                      {"hv_sigma", r.predictor.noise.hv_sigma},
                      {"boundary_jitter_px", r.predictor.noise.boundary_jitter_px},
                      {"source_dir", r.predictor.source_dir.string()}};
    j["tile_size"] = r.tile_size;
    j["overlap"] = r.overlap;
    j["target_mpp"] = r.target_mpp ? json(*r.target_mpp) : json(nullptr);
    return j;
}

JobRequest request_from(const json& j) {
    JobRequest r;
    r.slide_id = j.at("slide_id").get<std::string>();
    if (j.contains("roi") && !j.at("roi").is_null()) {
        const auto& roi = j.at("roi");
        r.roi = Rect{roi.at("x").get<int>(), roi.at("y").get<int>(), roi.at("width").get<int>(),
                     roi.at("height").get<int>()};
    }
    if (j.contains("heads")) r.heads = j.at("heads").get<std::vector<std::string>>();
    if (j.contains("predictor")) {
        const auto& p = j.at("predictor");
        if (p.is_string()) {
            r.predictor.kind = predictor_kind_from_string(p.get<std::string>());
        } else {
            if (p.contains("kind")) r.predictor.kind = predictor_kind_from_string(p.at("kind").get<std::string>());
            r.predictor.batch_size = p.value("batch_size", r.predictor.batch_size);
            r.predictor.seed = p.value("seed", r.predictor.seed);
            r.predictor.noise.prob_sigma = p.value("prob_sigma", 0.0);
            r.predictor.noise.hv_sigma = p.value("hv_sigma", 0.0);
            r.predictor.noise.boundary_jitter_px = p.value("boundary_jitter_px", 0);
            r.predictor.source_dir = p.value("source_dir", std::string());
        }
    }
    r.tile_size = j.value("tile_size", r.tile_size);
    r.overlap = j.value("overlap", r.overlap);
    if (j.contains("target_mpp") && !j.at("target_mpp").is_null()) r.target_mpp = j.at("target_mpp").get<double>();
    return r;
}

json view_json(const JobView& v) {
    json j;
    j["job_id"] = v.job_id;
    j["slide_id"] = v.request.slide_id;
    j["request"] = request_json(v.request);
    j["status"] = to_string(v.status);
    json hist = json::array();
    for (auto s : v.history) hist.push_back(to_string(s));
    j["history"] = hist;
    j["progress"] = v.progress;
    j["error"] = v.error ? json(*v.error) : json(nullptr);
    j["result_ref"] = v.result_ref ? json(*v.result_ref) : json(nullptr);
    j["instance_count"] = v.instance_count;
    j["failed_tiles"] = v.failed_tiles;
    return j;
}

JobView view_from(const json& j) {
    JobView v;
    v.job_id = j.at("job_id").get<std::string>();
    v.request = request_from(j.at("request"));
    v.status = job_status_from_string(j.at("status").get<std::string>());
    for (const auto& s : j.at("history")) v.history.push_back(job_status_from_string(s.get<std::string>()));
    v.progress = j.value("progress", 0.0);
    if (!j.at("error").is_null()) v.error = j.at("error").get<std::string>();
    if (!j.at("result_ref").is_null()) v.result_ref = j.at("result_ref").get<std::string>();
    v.instance_count = j.value("instance_count", std::size_t{0});
    v.failed_tiles = j.value("failed_tiles", std::size_t{0});
    return v;
}

bool finished(JobStatus s) { return s == JobStatus::succeeded || s == JobStatus::failed; }

const char* result_file(ExportFormat f) {
    switch (f) {
        case ExportFormat::geojson: return "result.geojson";
        case ExportFormat::json: return "result.json";
        case ExportFormat::table: return "result.csv";
    }
    return "result.geojson";
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return 400;
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict: return 409;
        case ErrorCode::unsupported: return 415;
        case ErrorCode::io: return 500;
        case ErrorCode::predictor: return 500;
    }
    return 500;
}

const char* code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::unsupported: return "unsupported";
        case ErrorCode::io: return "io";
        case ErrorCode::predictor: return "predictor";
    }
    return "internal";
}

void shift_instances(InstanceCollection& c, const Rect& roi) {
    for (auto& inst : c.instances) {
        for (auto& v : inst.polygon.exterior) {
            v.x += roi.x;
            v.y += roi.y;
        }
        inst.morph = morphometrics(inst.polygon);
    }
}

}  // namespace

JobRequest job_request_from_json(const std::string& body) {
    try {
        return request_from(json::parse(body));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("malformed job request: ") + e.what());
    }
}

std::string job_view_to_json(const JobView& view) { return view_json(view).dump(); }
std::string slide_entry_to_json(const SlideEntry& entry) { return entry_json(entry).dump(); }

struct Service::Impl {
    ServiceConfig config;
    mutable std::mutex mutex;  // registry, jobs, queue
    mutable std::condition_variable changed;
    std::map<std::string, SlideEntry> slides;
    std::map<std::string, std::shared_ptr<SlideReader>> open;
    std::map<std::string, JobView> jobs;
    std::deque<std::string> queue;
    std::uint64_t next_job = 1;
    bool stopping = false;
    std::vector<std::thread> workers;
    std::unique_ptr<httplib::Server> http;
    std::thread http_thread;

    fs::path registry_path() const { return config.data_dir / "registry.json"; }
    fs::path job_dir(const std::string& id) const { return config.data_dir / "jobs" / id; }

    // Caller holds the mutex.
    void persist_registry() const {
        json j;
        json s = json::array();
        for (const auto& [_, e] : slides) s.push_back(entry_json(e));
        j["slides"] = s;
        j["next_job"] = next_job;
        io::write_file_atomic(registry_path(), j.dump(2) + "\n");
    }

    void persist_job(const JobView& v) const {
        fs::create_directories(job_dir(v.job_id));
        io::write_file_atomic(job_dir(v.job_id) / "job.json", view_json(v).dump(2) + "\n");
    }

    void load() {
        fs::create_directories(config.data_dir / "jobs");
        if (fs::exists(registry_path())) {
            const json j = json::parse(io::read_text_file(registry_path()));
            for (const auto& e : j.at("slides")) {
                auto entry = entry_from_json(e);
                slides[entry.slide_id] = entry;
            }
            next_job = j.value("next_job", std::uint64_t{1});
        }
        for (const auto& d : fs::directory_iterator(config.data_dir / "jobs")) {
            const auto file = d.path() / "job.json";
            if (!fs::exists(file)) continue;
            JobView v = view_from(json::parse(io::read_text_file(file)));
            if (!finished(v.status)) {
                v.status = JobStatus::failed;
                v.history.push_back(JobStatus::failed);
                v.error = "interrupted";
                persist_job(v);
            }
            jobs[v.job_id] = v;
        }
    }

    std::shared_ptr<SlideReader> reader(const std::string& id) {
        std::lock_guard lock(mutex);
        auto it = slides.find(id);
        if (it == slides.end()) throw Error(ErrorCode::not_found, "unknown slide " + id);
        auto o = open.find(id);
        if (o != open.end()) return o->second;
        std::shared_ptr<SlideReader> r = open_slide(it->second.path);
        open[id] = r;
        return r;
    }

    SlideEntry add_slide(const fs::path& path) {
        const auto abs = fs::absolute(path);
        if (!fs::exists(abs)) throw Error(ErrorCode::not_found, "slide not found: " + path.string());
        auto r = open_slide(abs);
        SlideEntry e;
        // Content identity: the file bytes plus any sidecar.
        std::string ident = io::file_content_hash(abs);
        if (fs::exists(sidecar_path(abs))) ident += io::file_content_hash(sidecar_path(abs));
        e.slide_id = "s" + io::fnv1a_hex(ident.data(), ident.size());
        e.path = abs;
        e.meta = r->meta();
        e.levels = pyramid_levels(e.meta.width_px, e.meta.height_px);
        std::lock_guard lock(mutex);
        slides[e.slide_id] = e;
        open[e.slide_id] = std::shared_ptr<SlideReader>(std::move(r));
        persist_registry();
        return e;
    }

    void update(const std::string& id, const std::function<void(JobView&)>& fn) {
        std::lock_guard lock(mutex);
        auto& v = jobs.at(id);
        fn(v);
        persist_job(v);
        changed.notify_all();
    }

    void run_job(const std::string& id) {
        JobRequest req;
        {
            std::lock_guard lock(mutex);
            req = jobs.at(id).request;
        }
        update(id, [](JobView& v) {
            v.status = JobStatus::running;
            v.history.push_back(JobStatus::running);
        });
        try {
            auto base = reader(req.slide_id);
            std::unique_ptr<RegionSlide> region;
            const SlideReader* slide = base.get();
            if (req.roi) {
                region = std::make_unique<RegionSlide>(*base, *req.roi);
                slide = region.get();
            }
            PipelineConfig cfg;
            cfg.tile_size = req.tile_size;
            cfg.overlap = req.overlap;
            cfg.target_mpp = req.target_mpp;
            cfg.heads = heads_for(slide->meta().modality, req.heads);
            cfg.predictor = req.predictor;
            if (cfg.predictor.kind == PredictorKind::file_backed && cfg.predictor.source_dir.empty())
                cfg.predictor.source_dir = config.predictor_dir;
            auto collection = run_slide(*slide, cfg, [&](std::size_t done, std::size_t total) {
                const double p = total == 0 ? 1.0 : static_cast<double>(done) / static_cast<double>(total);
                update(id, [p](JobView& v) { v.progress = std::max(v.progress, std::min(p, 1.0)); });
            });
            if (req.roi) shift_instances(collection, *req.roi);
            const auto& fails = collection.provenance.failures;
            if (!fails.empty()) {
                const std::string msg = std::to_string(fails.size()) + " tile(s) failed; first: " + fails.front().message;
                update(id, [&](JobView& v) {
                    v.status = JobStatus::failed;
                    v.history.push_back(JobStatus::failed);
                    v.error = msg;
                    v.failed_tiles = fails.size();
                });
                return;
            }
            const auto dir = job_dir(id);
            for (auto f : {ExportFormat::geojson, ExportFormat::json, ExportFormat::table})
                io::write_file_atomic(dir / result_file(f), export_collection(collection, f));
            const auto count = collection.instances.size();
            update(id, [&](JobView& v) {
                v.progress = 1.0;
                v.instance_count = count;
                v.result_ref = (dir / result_file(ExportFormat::geojson)).string();
                v.status = JobStatus::succeeded;
                v.history.push_back(JobStatus::succeeded);
            });
        } catch (const std::exception& e) {
            const std::string msg = e.what();
            update(id, [&](JobView& v) {
                v.status = JobStatus::failed;
                v.history.push_back(JobStatus::failed);
                v.error = msg;
            });
        }
    }

    void worker_loop() {
        for (;;) {
            std::string id;
            {
                std::unique_lock lock(mutex);
                changed.wait(lock, [&] { return stopping || !queue.empty(); });
                if (stopping) return;
                id = queue.front();
                queue.pop_front();
            }
            run_job(id);
        }
    }

    void mount(httplib::Server& srv, Service& svc);
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>()) {
    require(config.workers >= 1, "WORKERS must be >= 1");
    impl_->config = std::move(config);
    impl_->load();
    for (int i = 0; i < impl_->config.workers; ++i) impl_->workers.emplace_back([this] { impl_->worker_loop(); });
}

Service::~Service() {
    stop();
    {
        std::lock_guard lock(impl_->mutex);
        impl_->stopping = true;
    }
    impl_->changed.notify_all();
    for (auto& t : impl_->workers) t.join();
}

const ServiceConfig& Service::config() const noexcept { return impl_->config; }

SlideEntry Service::register_slide(const fs::path& path) { return impl_->add_slide(path); }

SlideEntry Service::register_upload(const std::string& bytes, const std::string& filename) {
    require(!bytes.empty(), "empty upload");
    auto ext = fs::path(filename).extension().string();
    require(!ext.empty(), "upload needs a filename with an extension");
    const auto dir = impl_->config.data_dir / "uploads";
    fs::create_directories(dir);
    const auto path = dir / (io::fnv1a_hex(bytes.data(), bytes.size()) + ext);
    if (!fs::exists(path)) io::write_file_atomic(path, bytes);
    return impl_->add_slide(path);
}

std::vector<SlideEntry> Service::slides() const {
    std::lock_guard lock(impl_->mutex);
    std::vector<SlideEntry> out;
    for (const auto& [_, e] : impl_->slides) out.push_back(e);
    return out;
}

SlideEntry Service::slide(const std::string& id) const {
    std::lock_guard lock(impl_->mutex);
    auto it = impl_->slides.find(id);
    if (it == impl_->slides.end()) throw Error(ErrorCode::not_found, "unknown slide " + id);
    return it->second;
}

Image Service::tile_image(const std::string& id, int level, int x, int y) {
    const SlideEntry e = slide(id);
    if (std::find(e.levels.begin(), e.levels.end(), level) == e.levels.end())
        throw Error(ErrorCode::not_found, "no level " + std::to_string(level) + " for slide " + id);
    const int span = 256 * level;
    const int lw = (e.meta.width_px + level - 1) / level, lh = (e.meta.height_px + level - 1) / level;
    const int nx = (lw + 255) / 256, ny = (lh + 255) / 256;
    if (x < 0 || y < 0 || x >= nx || y >= ny)
        throw Error(ErrorCode::not_found, "tile index out of range");
    const int sx = x * span, sy = y * span;
    const int sw = std::min(span, e.meta.width_px - sx), sh = std::min(span, e.meta.height_px - sy);
    const Image src = impl_->reader(id)->read_region(sx, sy, sw, sh);
    const int ow = (sw + level - 1) / level, oh = (sh + level - 1) / level;
    Image out(ow, oh, 3);
    for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
            unsigned sum[3] = {0, 0, 0};
            int n = 0;
            for (int dy = 0; dy < level && r * level + dy < sh; ++dy) {
                for (int dx = 0; dx < level && c * level + dx < sw; ++dx) {
                    const auto* p = src.at(c * level + dx, r * level + dy);
                    for (int k = 0; k < 3; ++k) sum[k] += p[k];
                    ++n;
                }
            }
            auto* d = out.at(c, r);
            for (int k = 0; k < 3; ++k) d[k] = static_cast<std::uint8_t>((sum[k] + n / 2) / n);
        }
    }
    return out;
}

std::vector<std::uint8_t> Service::tile_png(const std::string& id, int level, int x, int y) {
    return io::encode_png(tile_image(id, level, x, y));
}

std::string Service::submit(const JobRequest& request) {
    const SlideEntry e = slide(request.slide_id);
    if (request.roi)
        require(request.roi->within(e.meta.width_px, e.meta.height_px), "roi lies outside the slide");
    require(request.tile_size >= 1 && request.overlap >= 0 && request.overlap < request.tile_size,
            "need 0 <= overlap < tile_size");
    require(!request.heads.empty(), "at least one head is required");
    heads_for(e.meta.modality, request.heads);  // validates names
    request.predictor.validate();
    std::lock_guard lock(impl_->mutex);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "job-%06llu", static_cast<unsigned long long>(impl_->next_job++));
    JobView v;
    v.job_id = buf;
    v.request = request;
    v.status = JobStatus::queued;
    v.history = {JobStatus::queued};
    impl_->jobs[v.job_id] = v;
    impl_->persist_job(v);
    impl_->persist_registry();
    impl_->queue.push_back(v.job_id);
    impl_->changed.notify_all();
    return v.job_id;
}

JobView Service::job(const std::string& id) const {
    std::lock_guard lock(impl_->mutex);
    auto it = impl_->jobs.find(id);
    if (it == impl_->jobs.end()) throw Error(ErrorCode::not_found, "unknown job " + id);
    return it->second;
}

std::vector<JobView> Service::jobs() const {
    std::lock_guard lock(impl_->mutex);
    std::vector<JobView> out;
    for (const auto& [_, v] : impl_->jobs) out.push_back(v);
    return out;
}

JobView Service::wait(const std::string& id, double timeout_s) const {
    std::unique_lock lock(impl_->mutex);
    impl_->changed.wait_for(lock, std::chrono::duration<double>(timeout_s), [&] {
        auto it = impl_->jobs.find(id);
        return it == impl_->jobs.end() || finished(it->second.status);
    });
    auto it = impl_->jobs.find(id);
    if (it == impl_->jobs.end()) throw Error(ErrorCode::not_found, "unknown job " + id);
    return it->second;
}

std::string Service::result(const std::string& id, ExportFormat format) const {
    const JobView v = job(id);
    if (v.status != JobStatus::succeeded) {
        throw Error(ErrorCode::conflict, "job " + id + " is " + to_string(v.status) +
                                             (v.error ? ": " + *v.error : std::string()));
    }
    return io::read_text_file(impl_->job_dir(id) / result_file(format));
}

void Service::remove_job(const std::string& id) {
    std::lock_guard lock(impl_->mutex);
    auto it = impl_->jobs.find(id);
    if (it == impl_->jobs.end()) throw Error(ErrorCode::not_found, "unknown job " + id);
    if (!finished(it->second.status))
        throw Error(ErrorCode::conflict, "job " + id + " is still " + to_string(it->second.status));
    fs::remove_all(impl_->job_dir(id));
    impl_->jobs.erase(it);
}

void Service::Impl::mount(httplib::Server& srv, Service& svc) {
    auto send_json = [](httplib::Response& res, const json& j, int status = 200) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    };
    srv.set_exception_handler([send_json](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_json(res, {{"code", code_name(e.code())}, {"message", e.what()}}, http_status(e.code()));
        } catch (const json::exception& e) {
            send_json(res, {{"code", "invalid_argument"}, {"message", e.what()}}, 400);
        } catch (const std::exception& e) {
            send_json(res, {{"code", "internal"}, {"message", e.what()}}, 500);
        }
    });
    srv.set_error_handler([send_json](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) send_json(res, {{"code", "not_found"}, {"message", "no such endpoint"}}, res.status);
    });

    srv.Post("/slides", [&svc, send_json](const httplib::Request& req, httplib::Response& res) {
        SlideEntry e;
        const auto ct = req.get_header_value("Content-Type");
        if (ct.find("application/json") != std::string::npos) {
            const json body = json::parse(req.body);
            e = svc.register_slide(body.at("path").get<std::string>());
        } else {
            std::string name = req.has_param("filename") ? req.get_param_value("filename") : "upload.png";
            e = svc.register_upload(req.body, name);
        }
        send_json(res, entry_json(e), 201);
    });
    srv.Get("/slides", [&svc, send_json](const httplib::Request&, httplib::Response& res) {
        json arr = json::array();
        for (const auto& e : svc.slides()) arr.push_back(entry_json(e));
        send_json(res, {{"slides", arr}});
    });
    srv.Get(R"(/slides/([^/]+))", [&svc, send_json](const httplib::Request& req, httplib::Response& res) {
        send_json(res, entry_json(svc.slide(req.matches[1])));
    });
    srv.Get(R"(/slides/([^/]+)/tiles/(\d+)/(\d+)/(\d+)(?:\.png)?)",
            [&svc](const httplib::Request& req, httplib::Response& res) {
                const auto png = svc.tile_png(req.matches[1], std::stoi(req.matches[2]), std::stoi(req.matches[3]),
                                              std::stoi(req.matches[4]));
                res.set_content(std::string(png.begin(), png.end()), "image/png");
            });
    srv.Post("/jobs", [&svc, send_json](const httplib::Request& req, httplib::Response& res) {
        const auto id = svc.submit(job_request_from_json(req.body));
        send_json(res, view_json(svc.job(id)), 202);
    });
    srv.Get("/jobs", [&svc, send_json](const httplib::Request&, httplib::Response& res) {
        json arr = json::array();
        for (const auto& v : svc.jobs()) arr.push_back(view_json(v));
        send_json(res, {{"jobs", arr}});
    });
    srv.Get(R"(/jobs/([^/]+))", [&svc, send_json](const httplib::Request& req, httplib::Response& res) {
        send_json(res, view_json(svc.job(req.matches[1])));
    });
    srv.Get(R"(/jobs/([^/]+)/result)", [&svc](const httplib::Request& req, httplib::Response& res) {
        const auto fmt = export_format_from_string(req.has_param("format") ? req.get_param_value("format") : "geojson");
        res.set_content(svc.result(req.matches[1], fmt), content_type(fmt));
    });
    srv.Delete(R"(/jobs/([^/]+))", [&svc, send_json](const httplib::Request& req, httplib::Response& res) {
        svc.remove_job(req.matches[1]);
        send_json(res, {{"deleted", std::string(req.matches[1])}});
    });
}

void Service::listen(const std::string& host, int port) {
    impl_->http = std::make_unique<httplib::Server>();
    impl_->mount(*impl_->http, *this);
    if (!impl_->http->listen(host, port))
        throw Error(ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port));
}

int Service::start(const std::string& host, int port) {
    require(!impl_->http, "service already started");
    impl_->http = std::make_unique<httplib::Server>();
    impl_->mount(*impl_->http, *this);
    int bound = port == 0 ? impl_->http->bind_to_any_port(host) : (impl_->http->bind_to_port(host, port) ? port : -1);
    if (bound <= 0) throw Error(ErrorCode::io, "cannot bind " + host);
    impl_->http_thread = std::thread([this] { impl_->http->listen_after_bind(); });
    impl_->http->wait_until_ready();
    return bound;
}

void Service::stop() {
    if (!impl_ || !impl_->http) return;
    impl_->http->stop();
    if (impl_->http_thread.joinable()) impl_->http_thread.join();
    impl_->http.reset();
}

}  // namespace hvseg
