// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/io.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace agsplat {

namespace {

Json
vec_json(const Eigen::Ref<const Eigen::VectorXd> &v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd
json_vec(const Json &j, Eigen::Index expected = -1) {
    if (!j.is_array()) throw Error(ErrorCode::InvalidInput, "expected a number list");
    if (expected >= 0 && Eigen::Index(j.size()) != expected)
        throw Error(ErrorCode::InvalidInput, "expected " + std::to_string(expected) + " numbers");
    Eigen::VectorXd v(Eigen::Index(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw Error(ErrorCode::InvalidInput, "non-numeric entry in number list");
        v[Eigen::Index(i)] = j[i].get<double>();
    }
    return v;
}

Vec3
json_vec3(const Json &j) {
    return json_vec(j, 3);
}

void
check_keys(const Json &j, const std::set<std::string> &allowed, const char *what) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidInput, std::string(what) + " must be an object");
    for (const auto &[key, value] : j.items()) {
        if (!allowed.count(key)) throw Error(ErrorCode::InvalidInput, std::string("unknown ") + what + " key: " + key);
    }
}

const char *
primitive_name(Primitive p) {
    switch (p) {
    case Primitive::Box: return "box";
    case Primitive::Sphere: return "sphere";
    case Primitive::Ellipsoid: return "ellipsoid";
    }
    return "sphere";
}

Primitive
primitive_from(const std::string &s) {
    if (s == "box") return Primitive::Box;
    if (s == "sphere") return Primitive::Sphere;
    if (s == "ellipsoid") return Primitive::Ellipsoid;
    throw Error(ErrorCode::InvalidInput, "unknown primitive: " + s);
}

std::string
mask_name(const char *prefix, std::size_t v, std::size_t j) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_v%03zu_%02zu.pgm", prefix, v, j);
    return buf;
}

} // namespace

Json
hyper_to_json(const Hyper &h) {
    return Json{{"lambda_in", h.lambda_in},
                {"lambda_is", h.lambda_is},
                {"lambda_ic", h.lambda_ic},
                {"lambda_d", h.lambda_d},
                {"lambda_prop", h.lambda_prop},
                {"tau", h.tau},
                {"k", h.k},
                {"top_resolution", h.top_resolution},
                {"level_scale", h.level_scale},
                {"grow_weight_threshold", h.grow_weight_threshold},
                {"text_margin", h.text_margin},
                {"sim_opacity_min", h.sim_opacity_min},
                {"densify_grad_percentile", h.densify_grad_percentile},
                {"cluster_weight_threshold", h.cluster_weight_threshold},
                {"language_dim", h.language_dim}};
}

Hyper
hyper_from_json(const Json &j, Hyper h) {
    check_keys(j,
               {"lambda_in", "lambda_is", "lambda_ic", "lambda_d", "lambda_prop", "tau", "k", "top_resolution",
                "level_scale", "grow_weight_threshold", "text_margin", "sim_opacity_min", "densify_grad_percentile",
                "cluster_weight_threshold", "language_dim"},
               "hyper");
    auto rd = [&](const char *key, auto &field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    try {
        rd("lambda_in", h.lambda_in);
        rd("lambda_is", h.lambda_is);
        rd("lambda_ic", h.lambda_ic);
        rd("lambda_d", h.lambda_d);
        rd("lambda_prop", h.lambda_prop);
        rd("tau", h.tau);
        rd("k", h.k);
        rd("top_resolution", h.top_resolution);
        rd("level_scale", h.level_scale);
        rd("grow_weight_threshold", h.grow_weight_threshold);
        rd("text_margin", h.text_margin);
        rd("sim_opacity_min", h.sim_opacity_min);
        rd("densify_grad_percentile", h.densify_grad_percentile);
        rd("cluster_weight_threshold", h.cluster_weight_threshold);
        rd("language_dim", h.language_dim);
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::InvalidInput, std::string("hyper: ") + e.what());
    }
    h.validate();
    return h;
}

Json
camera_to_json(const Camera &c) {
    Json r = Json::array();
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
    }
    return Json{{"fx", c.fx},         {"fy", c.fy},          {"cx", c.cx},
                {"cy", c.cy},         {"width", c.width},    {"height", c.height},
                {"rotation", r},      {"translation", vec_json(c.translation)}};
}

Camera
camera_from_json(const Json &j) {
    check_keys(j, {"fx", "fy", "cx", "cy", "width", "height", "rotation", "translation"}, "camera");
    Camera c;
    try {
        c.fx     = j.at("fx").get<double>();
        c.fy     = j.at("fy").get<double>();
        c.cx     = j.at("cx").get<double>();
        c.cy     = j.at("cy").get<double>();
        c.width  = j.at("width").get<int>();
        c.height = j.at("height").get<int>();
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::InvalidInput, std::string("camera: ") + e.what());
    }
    const Eigen::VectorXd r = json_vec(j.at("rotation"), 9);
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) c.rotation(i, k) = r[i * 3 + k];
    }
    c.translation = json_vec3(j.at("translation"));
    c.validate();
    return c;
}

Json
synthetic_spec_to_json(const SyntheticSpec &s) {
    Json instances = Json::array();
    for (const auto &inst : s.instances) {
        instances.push_back(Json{{"shape", primitive_name(inst.shape)},
                                 {"center", vec_json(inst.center)},
                                 {"half_extent", vec_json(inst.half_extent)},
                                 {"class_id", inst.class_id},
                                 {"color", vec_json(inst.color)}});
    }
    const auto &c = s.cameras;
    return Json{{"instances", instances},
                {"point_spacing", s.point_spacing},
                {"point_radius", s.point_radius},
                {"opacity", s.opacity},
                {"cameras",
                 {{"count", c.count},
                  {"radius", c.radius},
                  {"look_at", vec_json(c.look_at)},
                  {"elevation", c.elevation},
                  {"fov_y", c.fov_y},
                  {"width", c.width},
                  {"height", c.height}}},
                {"feature_noise", s.feature_noise},
                {"oversegment_prob", s.oversegment_prob},
                {"num_classes", s.num_classes},
                {"embedding_dim", s.embedding_dim},
                {"separable", s.separable},
                {"seed", s.seed}};
}

SyntheticSpec
synthetic_spec_from_json(const Json &j, SyntheticSpec s) {
    check_keys(j,
               {"instances", "point_spacing", "point_radius", "opacity", "cameras", "feature_noise",
                "oversegment_prob", "num_classes", "embedding_dim", "separable", "seed"},
               "synthetic");
    try {
        if (j.contains("instances")) {
            s.instances.clear();
            for (const auto &ij : j.at("instances")) {
                check_keys(ij, {"shape", "center", "half_extent", "class_id", "color"}, "instance");
                InstanceSpec inst;
                if (ij.contains("shape")) inst.shape = primitive_from(ij.at("shape").get<std::string>());
                if (ij.contains("center")) inst.center = json_vec3(ij.at("center"));
                if (ij.contains("half_extent")) inst.half_extent = json_vec3(ij.at("half_extent"));
                if (ij.contains("class_id")) inst.class_id = ij.at("class_id").get<int>();
                if (ij.contains("color")) inst.color = json_vec3(ij.at("color"));
                s.instances.push_back(inst);
            }
        }
        auto rd = [&](const Json &src, const char *key, auto &field) {
            if (src.contains(key)) field = src.at(key).get<std::remove_reference_t<decltype(field)>>();
        };
        rd(j, "point_spacing", s.point_spacing);
        rd(j, "point_radius", s.point_radius);
        rd(j, "opacity", s.opacity);
        rd(j, "feature_noise", s.feature_noise);
        rd(j, "oversegment_prob", s.oversegment_prob);
        rd(j, "num_classes", s.num_classes);
        rd(j, "embedding_dim", s.embedding_dim);
        rd(j, "separable", s.separable);
        rd(j, "seed", s.seed);
        if (j.contains("cameras")) {
            const auto &cj = j.at("cameras");
            check_keys(cj, {"count", "radius", "look_at", "elevation", "fov_y", "width", "height"}, "camera ring");
            rd(cj, "count", s.cameras.count);
            rd(cj, "radius", s.cameras.radius);
            if (cj.contains("look_at")) s.cameras.look_at = json_vec3(cj.at("look_at"));
            rd(cj, "elevation", s.cameras.elevation);
            rd(cj, "fov_y", s.cameras.fov_y);
            rd(cj, "width", s.cameras.width);
            rd(cj, "height", s.cameras.height);
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::InvalidInput, std::string("synthetic: ") + e.what());
    }
    return s;
}

Json
scene_to_json(const Scene &scene) {
    Json anchors = Json::array();
    for (const auto &a : scene.anchors) {
        Json children = Json::array();
        for (const auto &c : a.children) {
            children.push_back(Json{{"o", vec_json(c.offset)},
                                    {"s_hat", vec_json(c.rel_scale)},
                                    {"q", vec_json(c.rotation)},
                                    {"alpha", c.opacity},
                                    {"c", vec_json(c.color)}});
        }
        Json aj{{"x", vec_json(a.position)},
                {"l", a.voxel_size},
                {"level", a.level},
                {"f", vec_json(a.feature)},
                {"children", std::move(children)}};
        if (a.language_feature) aj["f_clip"] = vec_json(*a.language_feature);
        anchors.push_back(std::move(aj));
    }
    const auto &b = scene.grid.bounds();
    return Json{{"bounds", {{"min", vec_json(b.min)}, {"max", vec_json(b.max)}}},
                {"hyper", hyper_to_json(scene.hyper)},
                {"seed", scene.seed},
                {"anchors", std::move(anchors)}};
}

Scene
scene_from_json(const Json &j) {
    check_keys(j, {"bounds", "hyper", "seed", "anchors"}, "scene");
    Scene scene;
    try {
        scene.hyper = hyper_from_json(j.at("hyper"));
        if (j.contains("seed")) scene.seed = j.at("seed").get<std::uint64_t>();
        Aabb bounds{json_vec3(j.at("bounds").at("min")), json_vec3(j.at("bounds").at("max"))};
        if ((bounds.max.array() <= bounds.min.array()).any())
            throw Error(ErrorCode::InvalidInput, "scene bounds are empty");
        scene.grid = MultiResGrid(bounds, scene.hyper.top_resolution, scene.hyper.level_scale);
        for (const auto &aj : j.at("anchors")) {
            Anchor a;
            a.position   = json_vec3(aj.at("x"));
            a.voxel_size = aj.at("l").get<double>();
            a.level      = aj.at("level").get<int>();
            a.feature    = json_vec3(aj.at("f"));
            if (aj.contains("f_clip")) a.language_feature = json_vec(aj.at("f_clip"));
            for (const auto &cj : aj.at("children")) {
                ChildGaussian c;
                c.offset    = json_vec3(cj.at("o"));
                c.rel_scale = json_vec3(cj.at("s_hat"));
                c.rotation  = json_vec(cj.at("q"), 4);
                c.opacity   = cj.at("alpha").get<double>();
                c.color     = json_vec3(cj.at("c"));
                a.children.push_back(c);
            }
            scene.anchors.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::InvalidInput, std::string("scene: ") + e.what());
    }
    scene.rebuild_grid();
    scene.check_invariants();
    return scene;
}

Json
read_json_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::InvalidInput, path.string() + ": " + e.what());
    }
}

void
write_json_file(const std::filesystem::path &path, const Json &j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << j.dump(1) << '\n';
}

void
save_scene(const std::filesystem::path &path, const Scene &scene) {
    write_json_file(path, scene_to_json(scene));
}

Scene
load_scene(const std::filesystem::path &path) {
    return scene_from_json(read_json_file(path));
}

void
save_dataset(const std::filesystem::path &dir, const SyntheticSpec &spec, const SyntheticScene &data) {
    std::filesystem::create_directories(dir);
    Json points = Json::array(), colors = Json::array();
    for (std::size_t i = 0; i < data.points.size(); ++i) {
        points.push_back(vec_json(data.points[i]));
        colors.push_back(vec_json(data.colors[i]));
    }
    Json classes = Json::array();
    for (Eigen::Index c = 0; c < data.class_embeddings.rows(); ++c)
        classes.push_back(vec_json(data.class_embeddings.row(c).transpose()));

    Json views = Json::array();
    for (std::size_t v = 0; v < data.cameras.size(); ++v) {
        Json masks = Json::array(), gt = Json::array();
        for (std::size_t j = 0; j < data.masks[v].size(); ++j) {
            const auto name = mask_name("mask", v, j);
            write_pgm(dir / name, data.masks[v][j]);
            masks.push_back(Json{{"file", name},
                                 {"instance", data.mask_instance[v][j]},
                                 {"embedding", vec_json(data.embeddings[v][j])}});
        }
        for (std::size_t i = 0; i < data.instance_masks[v].size(); ++i) {
            const auto name = mask_name("gt", v, i);
            write_pgm(dir / name, data.instance_masks[v][i]);
            gt.push_back(name);
        }
        views.push_back(Json{{"camera", camera_to_json(data.cameras[v])},
                             {"masks", masks},
                             {"gt_instance_masks", gt},
                             {"occluded_instances", data.occluded_instances[v]}});
    }
    write_json_file(dir / "dataset.json",
                    Json{{"spec", synthetic_spec_to_json(spec)},
                         {"points", points},
                         {"labels", data.labels},
                         {"colors", colors},
                         {"class_embeddings", classes},
                         {"views", views}});
}

std::pair<SyntheticSpec, SyntheticScene>
load_dataset(const std::filesystem::path &dir) {
    const Json j = read_json_file(dir / "dataset.json");
    SyntheticSpec spec;
    SyntheticScene data;
    try {
        spec = synthetic_spec_from_json(j.at("spec"));
        for (const auto &p : j.at("points")) data.points.push_back(json_vec3(p));
        for (const auto &c : j.at("colors")) data.colors.push_back(json_vec3(c));
        data.labels = j.at("labels").get<std::vector<int>>();
        if (data.labels.size() != data.points.size() || data.colors.size() != data.points.size())
            throw Error(ErrorCode::InvalidInput, "dataset point arrays differ in length");
        const auto &classes = j.at("class_embeddings");
        if (!classes.empty()) {
            data.class_embeddings.resize(Eigen::Index(classes.size()), Eigen::Index(classes[0].size()));
            for (std::size_t c = 0; c < classes.size(); ++c)
                data.class_embeddings.row(Eigen::Index(c)) =
                    json_vec(classes[c], data.class_embeddings.cols()).transpose();
        }
        for (const auto &vj : j.at("views")) {
            data.cameras.push_back(camera_from_json(vj.at("camera")));
            std::vector<Mask> masks;
            std::vector<int> inst;
            std::vector<Eigen::VectorXd> emb;
            for (const auto &mj : vj.at("masks")) {
                masks.push_back(read_pgm_mask(dir / mj.at("file").get<std::string>()));
                inst.push_back(mj.at("instance").get<int>());
                emb.push_back(json_vec(mj.at("embedding")));
            }
            std::vector<Mask> gt;
            for (const auto &name : vj.at("gt_instance_masks")) gt.push_back(read_pgm_mask(dir / name.get<std::string>()));
            MaskSet set = MaskSet::from(masks);
            if (set.size() != masks.size())
                throw Error(ErrorCode::InvalidInput, "dataset masks contain empty or nested entries");
            data.masks.push_back(std::move(set));
            data.mask_instance.push_back(std::move(inst));
            data.embeddings.push_back(std::move(emb));
            data.instance_masks.push_back(std::move(gt));
            data.occluded_instances.push_back(vj.at("occluded_instances").get<std::vector<int>>());
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::InvalidInput, std::string("dataset: ") + e.what());
    }
    return {spec, data};
}

} // namespace agsplat
