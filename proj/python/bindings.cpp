#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hvseg/error.hpp"
#include "hvseg/export.hpp"
#include "hvseg/hv.hpp"
#include "hvseg/labeling.hpp"
#include "hvseg/losses.hpp"
#include "hvseg/metrics.hpp"
#include "hvseg/pipeline.hpp"
#include "hvseg/service.hpp"
#include "hvseg/slide.hpp"

namespace py = pybind11;
using namespace hvseg;

namespace {

template <typename T>
Raster<T> to_raster(const py::array& a, const char* name) {
    auto arr = py::array_t<T, py::array::c_style | py::array::forcecast>::ensure(a);
    if (!arr || arr.ndim() != 2) throw Error(ErrorCode::invalid_argument, std::string(name) + " must be a 2-D array");
    const int h = static_cast<int>(arr.shape(0)), w = static_cast<int>(arr.shape(1));
    return Raster<T>(w, h, std::vector<T>(arr.data(), arr.data() + arr.size()));
}

template <typename T>
py::array_t<T> to_numpy(const Raster<T>& r) {
    py::array_t<T> out({r.height(), r.width()});
    std::copy(r.storage().begin(), r.storage().end(), out.mutable_data());
    return out;
}

Mask to_mask(const py::array& a, const char* name) {
    auto r = to_raster<std::uint8_t>(py::array(py::module_::import("numpy").attr("asarray")(a).attr("astype")("uint8")), name);
    for (auto& v : r.storage()) v = v ? 1 : 0;
    return r;
}

HVField to_hv(const py::array& h, const py::array& v) {
    HVField f;
    f.h = to_raster<float>(h, "h");
    f.v = to_raster<float>(v, "v");
    require_same_shape(f.h, f.v, "hv");
    return f;
}

py::dict report_dict(const MatchReport& r) {
    py::list pairs;
    for (const auto& p : r.tp_pairs) pairs.append(py::make_tuple(p.pred_id, p.gt_id, p.iou));
    py::dict d;
    d["tp"] = r.tp_pairs.size();
    d["fp"] = r.fp_ids.size();
    d["fn"] = r.fn_ids.size();
    d["pairs"] = pairs;
    d["pq"] = panoptic_quality(r);
    return d;
}

}  // namespace

PYBIND11_MODULE(_hvseg, m) {
    m.doc() = "hvseg native core";

    static py::exception<Error> error(m, "HvsegError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::invalid_argument) PyErr_SetString(PyExc_ValueError, e.what());
            else if (e.code() == ErrorCode::not_found) PyErr_SetString(PyExc_FileNotFoundError, e.what());
            else error(e.what());
        }
    });

    m.def("generate_hv_maps", [](const py::array& labels) {
        const HVField f = generate_hv_maps(to_raster<std::uint32_t>(labels, "labels"));
        return py::make_tuple(to_numpy(f.h), to_numpy(f.v));
    }, py::arg("labels"));

    m.def("extract_instances", [](const py::array& prob, const py::array& h, const py::array& v,
                                  double prob_threshold, double grad_threshold, int min_instance_px) {
        DensePrediction p;
        p.seg_prob = to_raster<float>(prob, "prob");
        p.hv = to_hv(h, v);
        ExtractionParams params;
        params.prob_threshold = prob_threshold;
        params.grad_threshold = grad_threshold;
        params.min_instance_px = min_instance_px;
        return to_numpy(extract_instances_hv(p, params));
    }, py::arg("prob"), py::arg("h"), py::arg("v"), py::arg("prob_threshold") = 0.5,
       py::arg("grad_threshold") = 0.4, py::arg("min_instance_px") = 10);

    m.def("match", [](const py::array& pred, const py::array& gt, double iou) {
        return report_dict(match_instances(to_raster<std::uint32_t>(pred, "pred"), to_raster<std::uint32_t>(gt, "gt"), iou));
    }, py::arg("pred"), py::arg("gt"), py::arg("iou") = 0.5);

    m.def("dice", [](const py::array& pred, const py::array& gt) {
        return dice(to_mask(pred, "pred"), to_mask(gt, "gt")).value;
    }, py::arg("pred"), py::arg("gt"));

    m.def("focal_bce", [](const py::array& prob, const py::array& target, double alpha, double gamma) {
        return focal_bce(to_raster<float>(prob, "prob"), to_mask(target, "target"), alpha, gamma);
    }, py::arg("prob"), py::arg("target"), py::arg("alpha") = 1.0, py::arg("gamma") = 2.0);

    m.def("binary_cross_entropy", [](const py::array& prob, const py::array& target) {
        return binary_cross_entropy(to_raster<float>(prob, "prob"), to_mask(target, "target"));
    }, py::arg("prob"), py::arg("target"));

    m.def("rank_models", [](const std::vector<std::string>& models, const std::vector<std::vector<double>>& table) {
        py::list out;
        for (const auto& c : rank_models(models, table)) out.append(py::make_tuple(c.model, c.top1, c.top2, c.top3));
        return out;
    }, py::arg("models"), py::arg("table"));

    m.def("segment", [](const std::filesystem::path& slide_path, const std::vector<std::string>& heads, int tile,
                        int overlap, std::optional<double> target_mpp, const std::string& predictor,
                        std::uint64_t seed, bool tissue_filter, const std::string& format) {
        const auto slide = open_slide(slide_path);
        PipelineConfig cfg;
        cfg.tile_size = tile;
        cfg.overlap = overlap;
        cfg.target_mpp = target_mpp;
        cfg.heads = heads_for(slide->meta().modality, heads);
        cfg.tissue_filter = tissue_filter;
        cfg.predictor.kind = predictor_kind_from_string(predictor);
        cfg.predictor.seed = seed;
        const auto fmt = export_format_from_string(format);
        py::gil_scoped_release release;
        return export_collection(run_slide(*slide, cfg), fmt);
    }, py::arg("slide"), py::arg("heads") = std::vector<std::string>{"nuclei"}, py::arg("tile") = 512,
       py::arg("overlap") = 64, py::arg("target_mpp") = py::none(), py::arg("predictor") = "synthetic",
       py::arg("seed") = 0, py::arg("tissue_filter") = true, py::arg("format") = "geojson");

    m.def("write_demo_slide", &write_demo_slide, py::arg("dir"), py::arg("size") = 1024, py::arg("seed") = 7);

    py::class_<Service>(m, "Service")
        .def(py::init([](const std::filesystem::path& data_dir, int workers) {
            ServiceConfig c;
            c.data_dir = data_dir;
            c.workers = workers;
            return std::make_unique<Service>(c);
        }), py::arg("data_dir"), py::arg("workers") = 1)
        .def("register_slide", [](Service& s, const std::filesystem::path& p) { return s.register_slide(p).slide_id; })
        .def("submit", [](Service& s, const std::string& request_json) {
            return s.submit(job_request_from_json(request_json));
        })
        .def("job", [](const Service& s, const std::string& id) { return job_view_to_json(s.job(id)); })
        .def("wait", [](const Service& s, const std::string& id, double timeout) {
            py::gil_scoped_release release;
            return job_view_to_json(s.wait(id, timeout));
        }, py::arg("job_id"), py::arg("timeout") = 60.0)
        .def("result", [](const Service& s, const std::string& id, const std::string& format) {
            return s.result(id, export_format_from_string(format));
        }, py::arg("job_id"), py::arg("format") = "geojson")
        .def("start", [](Service& s, int port) { return s.start("127.0.0.1", port); }, py::arg("port") = 0)
        .def("stop", &Service::stop);
}
