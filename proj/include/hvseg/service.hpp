#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hvseg/export.hpp"
#include "hvseg/pipeline.hpp"
#include "hvseg/slide.hpp"

namespace hvseg {

struct SlideEntry {
    std::string slide_id;
    std::filesystem::path path;
    SlideMeta meta;
    std::vector<int> levels;  // downsample factors, ascending from 1
};

// Powers of two from 1 until the largest dimension fits in 1024 pixels.
std::vector<int> pyramid_levels(int width, int height);

enum class JobStatus { queued, running, succeeded, failed };
std::string to_string(JobStatus status);
JobStatus job_status_from_string(const std::string& s);

struct JobRequest {
    std::string slide_id;
    std::optional<Rect> roi;
    std::vector<std::string> heads{"nuclei"};
    PredictorSpec predictor;
    int tile_size = 512;
    int overlap = 64;
    std::optional<double> target_mpp;
};

struct JobView {
    std::string job_id;
    JobRequest request;
    JobStatus status = JobStatus::queued;
    std::vector<JobStatus> history;
    double progress = 0;
    std::optional<std::string> error;
    std::optional<std::string> result_ref;
    std::size_t instance_count = 0;
    std::size_t failed_tiles = 0;
};

struct ServiceConfig {
    std::filesystem::path data_dir = "hvseg-data";
    int workers = 1;
    std::filesystem::path predictor_dir;  // default source for file-backed jobs
    int port = 8080;

    // PORT, DATA_DIR, WORKERS, PREDICTOR_DIR override the defaults.
    static ServiceConfig from_env();
};

// Slide registry, viewer tiles and a FIFO job queue, persisted under
// data_dir (registry.json plus one directory per job). Jobs left queued or
// running by a previous process are marked failed ("interrupted") on load.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    SlideEntry register_slide(const std::filesystem::path& path);
    SlideEntry register_upload(const std::string& bytes, const std::string& filename);
    std::vector<SlideEntry> slides() const;
    SlideEntry slide(const std::string& slide_id) const;
    // 256 x 256 PNG at a downsample level (edge tiles cropped).
    std::vector<std::uint8_t> tile_png(const std::string& slide_id, int level, int x, int y);
    Image tile_image(const std::string& slide_id, int level, int x, int y);

    std::string submit(const JobRequest& request);
    JobView job(const std::string& job_id) const;
    std::vector<JobView> jobs() const;
    std::string result(const std::string& job_id, ExportFormat format) const;
    void remove_job(const std::string& job_id);
    // Blocks until the job has finished or the timeout (seconds) passes.
    JobView wait(const std::string& job_id, double timeout_s) const;

    // HTTP front end. listen() blocks; start() serves on a background thread
    // and returns the bound port (0 picks a free one).
    void listen(const std::string& host, int port);
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    const ServiceConfig& config() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

JobRequest job_request_from_json(const std::string& body);
std::string job_view_to_json(const JobView& view);
std::string slide_entry_to_json(const SlideEntry& entry);

}  // namespace hvseg
