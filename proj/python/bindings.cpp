// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/io.hpp>
#include <agsplat/metrics.hpp>
#include <agsplat/pipeline.hpp>
#include <agsplat/query.hpp>
#include <agsplat/render.hpp>
#include <agsplat/service.hpp>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace agsplat;

namespace {

py::object
to_python(const Json &j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

Json
from_python(const py::object &o) {
    return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::array_t<double>
to_array(const ImageD &img) {
    std::vector<py::ssize_t> shape{img.height(), img.width()};
    if (img.channels() > 1) shape.push_back(img.channels());
    py::array_t<double> out(shape);
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

py::array_t<std::uint8_t>
to_array(const Mask &mask) {
    py::array_t<std::uint8_t> out({py::ssize_t(mask.height()), py::ssize_t(mask.width())});
    std::copy(mask.data().begin(), mask.data().end(), out.mutable_data());
    return out;
}

Mask
to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> &a) {
    if (a.ndim() != 2) throw Error(ErrorCode::InvalidInput, "masks must be 2-D arrays");
    Mask m(int(a.shape(1)), int(a.shape(0)));
    for (std::size_t i = 0; i < m.data().size(); ++i) m.data()[i] = a.data()[i] != 0;
    return m;
}

RenderMode
parse_mode(const std::string &mode) {
    if (mode == "color") return RenderMode::Color;
    if (mode == "feature") return RenderMode::Feature;
    if (mode == "depth") return RenderMode::Depth;
    if (mode == "instance") return RenderMode::Instance;
    throw Error(ErrorCode::InvalidInput, "mode must be color, feature, depth or instance");
}

py::object
render_py(const Scene &scene, const Camera &camera, const std::string &mode, const std::vector<AnchorId> &anchors) {
    RenderRequest req;
    req.mode             = parse_mode(mode);
    req.instance_anchors = anchors;
    const auto t         = render(scene, camera, req);
    switch (req.mode) {
    case RenderMode::Color: return to_array(t.color);
    case RenderMode::Feature: return to_array(t.feature);
    case RenderMode::Depth: return to_array(t.depth);
    case RenderMode::Instance: return to_array(t.instance);
    }
    return py::none();
}

py::dict
selection_py(const Selection &s) {
    py::dict d;
    d["seeds"] = s.seeds;
    d["grown"] = s.grown;
    return d;
}

PipelineConfig
config_py(const py::object &config) {
    return config.is_none() ? PipelineConfig{} : config_from_json(from_python(config));
}

} // namespace

PYBIND11_MODULE(_agsplat, m) {
    m.doc() = "Anchor-graph Gaussian splatting scene segmentation";

    static py::exception<Error> error(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error &e) {
            py::set_error(error, e.what());
        } catch (const ServiceError &e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    py::class_<Camera>(m, "Camera")
        .def(py::init<>())
        .def_static("look_at", &Camera::look_at, py::arg("eye"), py::arg("target"), py::arg("up"), py::arg("fov_y"),
                    py::arg("width"), py::arg("height"))
        .def_readwrite("fx", &Camera::fx)
        .def_readwrite("fy", &Camera::fy)
        .def_readwrite("cx", &Camera::cx)
        .def_readwrite("cy", &Camera::cy)
        .def_readwrite("width", &Camera::width)
        .def_readwrite("height", &Camera::height)
        .def_readwrite("rotation", &Camera::rotation)
        .def_readwrite("translation", &Camera::translation)
        .def("project", &Camera::project)
        .def("unproject", &Camera::unproject)
        .def("center", &Camera::center);

    py::class_<Scene>(m, "Scene")
        .def_property_readonly("num_anchors", [](const Scene &s) { return s.anchors.size(); })
        .def_property_readonly("num_children", &Scene::num_children)
        .def("features", &Scene::features)
        .def("set_features", &Scene::set_features)
        .def("positions",
             [](const Scene &s) {
                 Eigen::MatrixXd p(Eigen::Index(s.anchors.size()), 3);
                 for (std::size_t a = 0; a < s.anchors.size(); ++a) p.row(Eigen::Index(a)) = s.anchors[a].position.transpose();
                 return p;
             })
        .def("levels",
             [](const Scene &s) {
                 std::vector<int> out;
                 for (const auto &a : s.anchors) out.push_back(a.level);
                 return out;
             })
        .def("check_invariants", &Scene::check_invariants)
        .def("to_json", [](const Scene &s) { return to_python(scene_to_json(s)); })
        .def_static("from_json", [](const py::object &o) { return scene_from_json(from_python(o)); });

    m.def("load_scene", &load_scene, py::arg("path"));
    m.def("save_scene", &save_scene, py::arg("path"), py::arg("scene"));
    m.def("voxelize_points",
          [](const Eigen::MatrixXd &points, const py::object &hyper, std::uint64_t seed) {
              std::vector<Vec3> pts;
              for (Eigen::Index i = 0; i < points.rows(); ++i) pts.push_back(points.row(i).transpose());
              const Hyper h = hyper.is_none() ? Hyper{} : hyper_from_json(from_python(hyper));
              return voxelize_points(pts, h, seed);
          },
          py::arg("points"), py::arg("hyper") = py::none(), py::arg("seed") = 0);

    m.def("render", &render_py, py::arg("scene"), py::arg("camera"), py::arg("mode") = "color",
          py::arg("anchors") = std::vector<AnchorId>{});

    m.def("unproject_click",
          py::overload_cast<const Scene &, const Camera &, double, double>(&unproject_click), py::arg("scene"),
          py::arg("camera"), py::arg("px"), py::arg("py"));
    m.def("click_query",
          [](const Scene &s, const Vec3 &p) { return selection_py(click_query(s, p)); }, py::arg("scene"),
          py::arg("point"));
    m.def("remove_object",
          [](const Scene &s, const std::vector<AnchorId> &sel, const std::vector<Camera> &cams, int replacements) {
              auto r = remove_object(s, sel, cams, replacements);
              py::list masks;
              for (const auto &mask : r.artifact_masks) masks.append(to_array(mask));
              py::dict d;
              d["scene"]               = std::move(r.scene);
              d["artifact_masks"]      = masks;
              d["replacement_anchors"] = r.replacement_anchors;
              d["neighbor_anchors"]    = r.neighbor_anchors;
              return d;
          },
          py::arg("scene"), py::arg("selection"), py::arg("cameras"), py::arg("replacements") = kDefaultReplacementAnchors);
    m.def("export_particles",
          [](const Scene &s, const std::vector<AnchorId> &sel, double alpha_min) {
              std::ostringstream out;
              write_particles(out, export_selection(s, sel, alpha_min));
              return out.str();
          },
          py::arg("scene"), py::arg("selection") = std::vector<AnchorId>{}, py::arg("alpha_min") = 0.02);

    m.def("iou", [](const py::array_t<std::uint8_t> &a, const py::array_t<std::uint8_t> &b) {
        return iou(to_mask(a), to_mask(b));
    });
    m.def("boundary_iou",
          [](const py::array_t<std::uint8_t> &a, const py::array_t<std::uint8_t> &b, std::optional<int> d) {
              const Mask ma = to_mask(a), mb = to_mask(b);
              return d ? boundary_iou(ma, mb, *d) : boundary_iou(ma, mb);
          },
          py::arg("a"), py::arg("b"), py::arg("d") = py::none());

    m.def("benchmark_config", [](std::uint64_t seed) { return to_python(config_to_json(benchmark_config(seed))); },
          py::arg("seed"));

    py::class_<TrainedScene>(m, "TrainedScene")
        .def_readonly("scene", &TrainedScene::scene)
        .def_readonly("stage1", &TrainedScene::stage1)
        .def_readonly("anchor_labels", &TrainedScene::anchor_labels)
        .def_property_readonly("cameras", [](const TrainedScene &t) { return t.data.cameras; })
        .def_property_readonly("num_clusters", [](const TrainedScene &t) { return t.clusters.size(); })
        .def_property_readonly("class_embeddings", [](const TrainedScene &t) { return t.data.class_embeddings; })
        .def("instance_mask",
             [](const TrainedScene &t, std::size_t view, std::size_t instance) {
                 return to_array(t.data.instance_masks.at(view).at(instance));
             })
        .def("evaluate",
             [](const TrainedScene &t, bool graph_growing) {
                 return to_python(report_to_json(
                     evaluate(t, graph_growing ? Segmentation::GraphGrowing : Segmentation::GlobalSimilarity)));
             },
             py::arg("graph_growing") = true);

    m.def("train",
          [](const py::object &config) {
              const PipelineConfig c = config_py(config);
              py::gil_scoped_release release;
              return train(c);
          },
          py::arg("config") = py::none());
    m.def("run_pipeline",
          [](const py::object &config, std::optional<std::filesystem::path> out) {
              const PipelineConfig c = config_py(config);
              EvalReport r;
              {
                  py::gil_scoped_release release;
                  r = run_pipeline(c, out);
              }
              return to_python(report_to_json(r));
          },
          py::arg("config") = py::none(), py::arg("out") = py::none());

    py::class_<QueryService>(m, "QueryService")
        .def(py::init<Scene, std::vector<Camera>>(), py::arg("scene"), py::arg("cameras"))
        .def_property_readonly("revision", &QueryService::revision)
        .def("info", [](const QueryService &s) { return to_python(s.info()); })
        .def("render_png",
             [](const QueryService &s, std::size_t view, const std::string &mode) {
                 return py::bytes(s.render_png(view, mode));
             },
             py::arg("view"), py::arg("mode") = "color")
        .def("click",
             [](const QueryService &s, std::size_t view, double px, double py) {
                 return to_python(s.click(Json{{"view", view}, {"px", px}, {"py", py}}));
             },
             py::arg("view"), py::arg("px"), py::arg("py"))
        .def("text",
             [](const QueryService &s, const std::vector<double> &embedding) {
                 return to_python(s.text(Json{{"embedding", embedding}}));
             },
             py::arg("embedding"))
        .def("remove",
             [](QueryService &s, const std::vector<std::uint64_t> &ids, std::uint64_t revision) {
                 return to_python(s.remove(Json{{"anchor_ids", ids}, {"revision", revision}}));
             },
             py::arg("anchor_ids"), py::arg("revision"))
        .def("export_simulation", &QueryService::export_simulation, py::arg("alpha_min") = 0.02,
             py::arg("anchor_ids") = std::vector<std::uint64_t>{});
}
