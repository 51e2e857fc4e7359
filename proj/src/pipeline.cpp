// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/metrics.hpp>
#include <agsplat/pipeline.hpp>
#include <agsplat/render.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>

namespace agsplat {

namespace {

using Clock = std::chrono::steady_clock;

double
seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string
optimizer_name(Optimizer o) {
    switch (o) {
    case Optimizer::Adam: return "adam";
    case Optimizer::Momentum: return "momentum";
    case Optimizer::ScaledMomentum: return "scaled_momentum";
    }
    return "adam";
}

Optimizer
parse_optimizer(const std::string &name) {
    if (name == "adam") return Optimizer::Adam;
    if (name == "momentum") return Optimizer::Momentum;
    if (name == "scaled_momentum") return Optimizer::ScaledMomentum;
    throw Error(ErrorCode::InvalidInput, "unknown optimizer: " + name);
}

Json
options_to_json(const OptimizeOptions &o) {
    return Json{{"iterations", o.iterations},
                {"densify_interval", o.densify_interval},
                {"densify", o.densify},
                {"optimize_offsets", o.optimize_offsets},
                {"lr_feature", o.lr_feature},
                {"lr_offset", o.lr_offset},
                {"beta1", o.beta1},
                {"beta2", o.beta2},
                {"epsilon", o.epsilon},
                {"optimizer", optimizer_name(o.optimizer)},
                {"intra_smoothing", o.intra_smoothing},
                {"intra_per_mask_mean", o.intra_per_mask_mean}};
}

OptimizeOptions
options_from_json(const Json &j, OptimizeOptions o) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidInput, "optimizer options must be an object");
    for (const auto &[key, value] : j.items()) {
        if (key == "iterations") o.iterations = value.get<int>();
        else if (key == "densify_interval") o.densify_interval = value.get<int>();
        else if (key == "densify") o.densify = value.get<bool>();
        else if (key == "optimize_offsets") o.optimize_offsets = value.get<bool>();
        else if (key == "lr_feature") o.lr_feature = value.get<double>();
        else if (key == "lr_offset") o.lr_offset = value.get<double>();
        else if (key == "beta1") o.beta1 = value.get<double>();
        else if (key == "beta2") o.beta2 = value.get<double>();
        else if (key == "epsilon") o.epsilon = value.get<double>();
        else if (key == "optimizer") o.optimizer = parse_optimizer(value.get<std::string>());
        else if (key == "intra_smoothing") o.intra_smoothing = value.get<double>();
        else if (key == "intra_per_mask_mean") o.intra_per_mask_mean = value.get<bool>();
        else throw Error(ErrorCode::InvalidInput, "unknown optimizer key: " + key);
    }
    if (o.iterations < 0 || o.densify_interval < 1 || o.lr_feature < 0.0 || o.lr_offset < 0.0 ||
        o.intra_smoothing < 0.0)
        throw Error(ErrorCode::InvalidInput, "optimizer options out of range");
    return o;
}

void
finish_training(TrainedScene &t, const PipelineConfig &config) {
    t.scene = t.stage1;
    t.graph = build_graph(t.scene, 1.0);
    t.stage2_result = {};
    if (config.propagation && config.stage2.iterations > 0) {
        t.stage2_result = optimize_stage2(t.scene, t.graph, t.views, config.stage2);
        t.graph.refresh_weights(t.scene.features());
    }
    t.clusters = cluster(t.graph, t.scene, t.scene.hyper.cluster_weight_threshold);
    attach_language(t.scene, t.clusters, t.views, t.data.embeddings);
    t.anchor_labels = anchor_instance_labels(t.scene, t.data);
}

std::vector<AnchorId>
truth_set(const TrainedScene &t, int instance) {
    std::vector<AnchorId> out;
    for (std::size_t a = 0; a < t.anchor_labels.size(); ++a) {
        if (t.anchor_labels[a] == instance) out.push_back(AnchorId(a));
    }
    return out;
}

void
score(const TrainedScene &t, const Selection &sel, int instance, QueryOutcome &q) {
    const auto truth = truth_set(t, instance);
    q.selected       = sel.grown.size();
    q.truth          = truth.size();
    q.anchors_exact  = sel.grown == truth;
    std::vector<AnchorId> inter;
    std::set_intersection(sel.grown.begin(), sel.grown.end(), truth.begin(), truth.end(), std::back_inserter(inter));
    const std::size_t uni = sel.grown.size() + truth.size() - inter.size();
    q.anchor_iou          = uni == 0 ? 1.0 : double(inter.size()) / double(uni);

    double iou_sum = 0.0, biou_sum = 0.0;
    int n = 0;
    for (std::size_t v = 0; v < t.data.cameras.size(); ++v) {
        const Mask &gt = t.data.instance_masks[v][std::size_t(instance)];
        if (count_set(gt) == 0) continue;
        RenderRequest req;
        req.mode             = RenderMode::Instance;
        req.instance_anchors = sel.grown;
        const auto out       = render(t.scene, t.data.cameras[v], req);
        iou_sum += iou(out.instance, gt);
        biou_sum += boundary_iou(out.instance, gt);
        ++n;
    }
    q.iou  = n ? iou_sum / n : 0.0;
    q.biou = n ? biou_sum / n : 0.0;
}

void
summarize(const std::vector<QueryOutcome> &qs, double &acc, double &miou, double &mbiou) {
    acc = miou = mbiou = 0.0;
    if (qs.empty()) return;
    for (const auto &q : qs) {
        acc += q.anchors_exact ? 1.0 : 0.0;
        miou += q.iou;
        mbiou += q.biou;
    }
    acc /= double(qs.size());
    miou /= double(qs.size());
    mbiou /= double(qs.size());
}

Json
outcome_json(const QueryOutcome &q) {
    return Json{{"kind", q.kind},         {"instance", q.instance},   {"view", q.view},
                {"px", q.px},             {"py", q.py},               {"anchors_exact", q.anchors_exact},
                {"anchor_iou", q.anchor_iou}, {"selected", q.selected}, {"truth", q.truth},
                {"iou", q.iou},           {"biou", q.biou}};
}

} // namespace

PipelineConfig
benchmark_config(std::uint64_t seed) {
    PipelineConfig c;
    c.seed                  = seed;
    c.hyper.top_resolution  = 16;
    c.hyper.level_scale     = 2;
    c.stage1.iterations     = 1000;
    c.stage1.densify_interval = 100;
    c.stage1.intra_smoothing  = 0.01;
    c.stage2.iterations     = 300;
    c.stage2.densify        = false;
    c.stage2.intra_smoothing  = 0.01;
    return c;
}

Json
config_to_json(const PipelineConfig &c) {
    return Json{{"seed", c.seed},
                {"hyper", hyper_to_json(c.hyper)},
                {"synthetic", synthetic_spec_to_json(c.synthetic)},
                {"preset_instances", c.preset_instances},
                {"stage1", options_to_json(c.stage1)},
                {"stage2", options_to_json(c.stage2)},
                {"no_prop", !c.propagation},
                {"no_graphseg", c.segmentation == Segmentation::GlobalSimilarity}};
}

PipelineConfig
config_from_json(const Json &j, PipelineConfig c) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidInput, "config must be an object");
    try {
        for (const auto &[key, value] : j.items()) {
            if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "hyper") c.hyper = hyper_from_json(value, c.hyper);
            else if (key == "synthetic") c.synthetic = synthetic_spec_from_json(value, c.synthetic);
            else if (key == "preset_instances") c.preset_instances = value.get<int>();
            else if (key == "stage1") c.stage1 = options_from_json(value, c.stage1);
            else if (key == "stage2") c.stage2 = options_from_json(value, c.stage2);
            else if (key == "no_prop") c.propagation = !value.get<bool>();
            else if (key == "no_graphseg")
                c.segmentation = value.get<bool>() ? Segmentation::GlobalSimilarity : Segmentation::GraphGrowing;
            else throw Error(ErrorCode::InvalidInput, "unknown config key: " + key);
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::InvalidInput, std::string("config: ") + e.what());
    }
    return c;
}

SyntheticSpec
resolve_spec(const PipelineConfig &config) {
    if (!config.synthetic.instances.empty()) return config.synthetic;
    if (config.preset_instances < 1) throw Error(ErrorCode::SpecViolation, "config has no instances");
    SyntheticSpec spec   = separable_preset(config.seed, config.hyper, config.preset_instances);
    spec.feature_noise    = config.synthetic.feature_noise;
    spec.oversegment_prob = config.synthetic.oversegment_prob;
    spec.embedding_dim    = config.synthetic.embedding_dim;
    return spec;
}

Scene
initialize_scene(const SyntheticSpec &spec, const SyntheticScene &data, const Hyper &hyper, std::uint64_t seed) {
    Scene scene = voxelize_points(data.points, hyper, seed);
    apply_synthetic_appearance(scene, data, spec);
    scene.check_invariants();
    return scene;
}

TrainedScene
train(const PipelineConfig &config) {
    const SyntheticSpec spec = resolve_spec(config);
    return train(config, spec, generate_scene(spec, config.hyper));
}

TrainedScene
train(const PipelineConfig &config, const SyntheticSpec &spec, const SyntheticScene &data) {
    const auto t0 = Clock::now();
    TrainedScene t;
    t.spec    = spec;
    t.data    = data;
    t.views   = data.training_views();
    t.initial = initialize_scene(spec, data, config.hyper, config.seed);
    t.stage1  = t.initial;
    t.stage1_result = optimize_stage1(t.stage1, t.views, config.stage1);
    finish_training(t, config);
    t.seconds = seconds_since(t0);
    return t;
}

TrainedScene
retrain_from_stage1(const TrainedScene &base, const PipelineConfig &config) {
    const auto t0  = Clock::now();
    TrainedScene t = base;
    finish_training(t, config);
    t.seconds = seconds_since(t0);
    return t;
}

std::pair<int, int>
interior_pixel(const Mask &mask) {
    const int w = mask.width(), h = mask.height();
    std::vector<int> dist(std::size_t(w) * std::size_t(h), std::numeric_limits<int>::max());
    std::deque<int> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = y * w + x;
            if (!mask(x, y)) {
                dist[std::size_t(i)] = 0;
                queue.push_back(i);
            } else if (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
                dist[std::size_t(i)] = 1;
                queue.push_back(i);
            }
        }
    }
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        const int x = i % w, y = i / w;
        const int nx[4] = {x - 1, x + 1, x, x}, ny[4] = {y, y, y - 1, y + 1};
        for (int n = 0; n < 4; ++n) {
            if (nx[n] < 0 || ny[n] < 0 || nx[n] >= w || ny[n] >= h) continue;
            const int j = ny[n] * w + nx[n];
            if (dist[std::size_t(j)] > dist[std::size_t(i)] + 1) {
                dist[std::size_t(j)] = dist[std::size_t(i)] + 1;
                queue.push_back(j);
            }
        }
    }
    int best = -1, bx = -1, by = -1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask(x, y) && dist[std::size_t(y * w + x)] > best) {
                best = dist[std::size_t(y * w + x)];
                bx   = x;
                by   = y;
            }
        }
    }
    if (best < 0) throw Error(ErrorCode::InvalidInput, "mask is empty");
    return {bx, by};
}

Selection
select_click(const TrainedScene &t,
             const AnchorGraph &query_graph,
             std::size_t view,
             double px,
             double py,
             Segmentation mode) {
    if (view >= t.data.cameras.size()) throw Error(ErrorCode::InvalidInput, "unknown view");
    const Camera &cam = t.data.cameras[view];
    Selection sel;
    try {
        const Vec3 p = unproject_click(t.scene, cam, px, py);
        sel          = click_query(t.scene, query_graph, p);
    } catch (const Error &e) {
        if (e.code() != ErrorCode::NoGeometryAtPixel) throw;
    }
    sel.click = ClickOrigin{view, px, py};
    if (mode == Segmentation::GlobalSimilarity && !sel.seeds.empty())
        sel.grown = global_similarity_selection(t.scene, sel.seeds, t.scene.hyper.grow_weight_threshold);
    return sel;
}

Selection
select_text(const TrainedScene &t, const AnchorGraph &query_graph, const Eigen::VectorXd &embedding, Segmentation mode) {
    Selection sel = text_query(t.scene, query_graph, t.clusters, embedding);
    if (mode == Segmentation::GlobalSimilarity && !sel.seeds.empty())
        sel.grown = global_similarity_selection(t.scene, sel.seeds, t.scene.hyper.grow_weight_threshold);
    return sel;
}

EvalReport
evaluate(const TrainedScene &t, Segmentation mode) {
    const auto t0 = Clock::now();
    EvalReport r;
    r.anchors                 = t.scene.anchors.size();
    r.train_seconds           = t.seconds;
    const AnchorGraph qgraph  = build_graph(t.scene, kQueryGraphScale);
    const int num_instances   = int(t.spec.instances.size());
    for (int i = 0; i < num_instances; ++i) {
        std::size_t best_view = 0, best_area = 0;
        for (std::size_t v = 0; v < t.data.cameras.size(); ++v) {
            const std::size_t area = count_set(t.data.instance_masks[v][std::size_t(i)]);
            if (area > best_area) {
                best_area = area;
                best_view = v;
            }
        }
        if (best_area > 0) {
            const auto [px, py] = interior_pixel(t.data.instance_masks[best_view][std::size_t(i)]);
            QueryOutcome q;
            q.kind     = "click";
            q.instance = i;
            q.view     = best_view;
            q.px       = px;
            q.py       = py;
            score(t, select_click(t, qgraph, best_view, px, py, mode), i, q);
            r.click.push_back(q);
        }

        QueryOutcome q;
        q.kind     = "text";
        q.instance = i;
        const Eigen::VectorXd emb =
            t.data.class_embeddings.row(t.spec.instances[std::size_t(i)].class_id).transpose();
        Selection sel;
        try {
            sel = select_text(t, qgraph, emb, mode);
        } catch (const Error &e) {
            if (e.code() != ErrorCode::LanguageFeaturesMissing) throw;
        }
        score(t, sel, i, q);
        r.text.push_back(q);
    }
    summarize(r.click, r.click_anchor_accuracy, r.click_miou, r.click_mbiou);
    summarize(r.text, r.text_anchor_accuracy, r.text_miou, r.text_mbiou);
    r.eval_seconds = seconds_since(t0);
    return r;
}

Json
report_to_json(const EvalReport &r) {
    Json click = Json::array(), text = Json::array();
    for (const auto &q : r.click) click.push_back(outcome_json(q));
    for (const auto &q : r.text) text.push_back(outcome_json(q));
    return Json{{"click", click},
                {"text", text},
                {"click_anchor_accuracy", r.click_anchor_accuracy},
                {"click_miou", r.click_miou},
                {"click_mbiou", r.click_mbiou},
                {"text_anchor_accuracy", r.text_anchor_accuracy},
                {"text_miou", r.text_miou},
                {"text_mbiou", r.text_mbiou},
                {"train_seconds", r.train_seconds},
                {"eval_seconds", r.eval_seconds},
                {"anchors", r.anchors}};
}

void
write_artifacts(const std::filesystem::path &out, const TrainedScene &t, const EvalReport *report) {
    namespace fs = std::filesystem;
    fs::create_directories(out / "renders");
    save_scene(out / "scene_stage1.json", t.stage1);
    save_scene(out / "scene.json", t.scene);
    {
        std::ofstream f(out / "loss_stage1.csv");
        write_trajectory_csv(f, t.stage1_result.trajectory);
    }
    {
        std::ofstream f(out / "loss_stage2.csv");
        write_trajectory_csv(f, t.stage2_result.trajectory);
    }
    {
        std::ofstream f(out / "graph.txt");
        write_graph_dump(f, t.graph);
    }
    {
        std::ofstream f(out / "clusters.json");
        f << cluster_report_json(t.clusters) << '\n';
    }
    for (std::size_t v = 0; v < t.data.cameras.size(); ++v) {
        char name[64];
        const auto color   = render(t.scene, t.data.cameras[v], RenderMode::Color);
        const auto feature = render(t.scene, t.data.cameras[v], RenderMode::Feature);
        std::snprintf(name, sizeof name, "view%03zu_color.png", v);
        write_png(out / "renders" / name, color.color);
        std::snprintf(name, sizeof name, "view%03zu_feature.png", v);
        write_png(out / "renders" / name, feature.feature);
        std::snprintf(name, sizeof name, "view%03zu_feature.agfm", v);
        write_feature_map(out / "renders" / name, feature.feature);
    }
    if (report) write_json_file(out / "report.json", report_to_json(*report));
}

EvalReport
run_pipeline(const PipelineConfig &config, const std::optional<std::filesystem::path> &out) {
    const TrainedScene t  = train(config);
    const EvalReport r    = evaluate(t, config.segmentation);
    if (out) {
        write_json_file(*out / "config.json", config_to_json(config));
        save_dataset(*out / "dataset", t.spec, t.data);
        write_artifacts(*out, t, &r);
    }
    return r;
}

AblationRow
run_ablation(const PipelineConfig &config) {
    PipelineConfig full = config;
    full.propagation    = true;
    PipelineConfig noprop = config;
    noprop.propagation    = false;

    AblationRow row;
    row.seed                 = config.seed;
    const TrainedScene with  = train(full);
    const TrainedScene without = retrain_from_stage1(with, noprop);
    row.full        = evaluate(with, Segmentation::GraphGrowing);
    row.no_graphseg = evaluate(with, Segmentation::GlobalSimilarity);
    row.no_prop     = evaluate(without, Segmentation::GraphGrowing);
    row.case1       = evaluate(without, Segmentation::GlobalSimilarity);
    return row;
}

Json
ablation_to_json(const std::vector<AblationRow> &rows) {
    Json out = Json::array();
    for (const auto &row : rows) {
        auto summary = [](const EvalReport &r) {
            return Json{{"click_miou", r.click_miou},
                        {"click_mbiou", r.click_mbiou},
                        {"text_miou", r.text_miou},
                        {"click_anchor_accuracy", r.click_anchor_accuracy}};
        };
        out.push_back(Json{{"seed", row.seed},
                           {"full", summary(row.full)},
                           {"no_prop", summary(row.no_prop)},
                           {"no_graphseg", summary(row.no_graphseg)},
                           {"case1", summary(row.case1)}});
    }
    return out;
}

} // namespace agsplat
