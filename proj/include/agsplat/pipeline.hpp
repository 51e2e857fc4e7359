// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/cluster.hpp>
#include <agsplat/graph.hpp>
#include <agsplat/hyper.hpp>
#include <agsplat/io.hpp>
#include <agsplat/objective.hpp>
#include <agsplat/query.hpp>
#include <agsplat/scene.hpp>
#include <agsplat/synthetic.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace agsplat {

enum class Segmentation { GraphGrowing, GlobalSimilarity };

struct PipelineConfig {
    Hyper hyper;
    /// When no instances are listed, the separable preset for `seed` is used.
    SyntheticSpec synthetic;
    int preset_instances = 3;
    OptimizeOptions stage1;
    OptimizeOptions stage2;
    bool propagation  = true; // stage 2 with the Dirichlet term
    Segmentation segmentation = Segmentation::GraphGrowing;
    std::uint64_t seed = 0;
};

/// Desk-scale settings used by the benchmark suite.
PipelineConfig benchmark_config(std::uint64_t seed);

Json config_to_json(const PipelineConfig &config);
/// Keys: seed, hyper, synthetic, preset_instances, stage1, stage2,
/// no_prop, no_graphseg. Missing keys keep the values of `base`.
PipelineConfig config_from_json(const Json &j, PipelineConfig base = {});

/// The resolved synthetic spec (preset filled in when needed).
SyntheticSpec resolve_spec(const PipelineConfig &config);

struct TrainedScene {
    SyntheticSpec spec;
    SyntheticScene data;
    std::vector<TrainingView> views;
    Scene initial;
    Scene stage1;
    Scene scene; // final features
    AnchorGraph graph;
    std::vector<InstanceCluster> clusters;
    std::vector<int> anchor_labels; // GT instance per anchor
    OptimizeResult stage1_result;
    OptimizeResult stage2_result;
    double seconds = 0.0;
};

/// Scene initialization from a generated dataset: voxelize then place the
/// synthetic appearance.
Scene initialize_scene(const SyntheticSpec &spec, const SyntheticScene &data, const Hyper &hyper, std::uint64_t seed);

/// Runs every training stage: stage 1, graph construction, stage 2 (or a
/// plain copy when propagation is off), clustering and language attachment.
TrainedScene train(const PipelineConfig &config);
TrainedScene train(const PipelineConfig &config, const SyntheticSpec &spec, const SyntheticScene &data);

/// Re-runs the stages after stage 1 with propagation toggled.
TrainedScene retrain_from_stage1(const TrainedScene &base, const PipelineConfig &config);

struct QueryOutcome {
    std::string kind; // "click" or "text"
    int instance = 0;
    std::size_t view = 0;
    double px = 0.0;
    double py = 0.0;
    bool anchors_exact = false;
    double anchor_iou  = 0.0;
    std::size_t selected = 0;
    std::size_t truth    = 0;
    double iou  = 0.0; // mean over views where the instance is visible
    double biou = 0.0;
};

struct EvalReport {
    std::vector<QueryOutcome> click;
    std::vector<QueryOutcome> text;
    double click_anchor_accuracy = 0.0;
    double click_miou  = 0.0;
    double click_mbiou = 0.0;
    double text_anchor_accuracy = 0.0;
    double text_miou  = 0.0;
    double text_mbiou = 0.0;
    double train_seconds = 0.0;
    double eval_seconds  = 0.0;
    std::size_t anchors = 0;
};

Json report_to_json(const EvalReport &report);

/// Pixel of the instance mask farthest from its boundary (lowest row, then
/// column, on ties).
std::pair<int, int> interior_pixel(const Mask &mask);

Selection select_click(const TrainedScene &trained,
                       const AnchorGraph &query_graph,
                       std::size_t view,
                       double px,
                       double py,
                       Segmentation mode);
Selection select_text(const TrainedScene &trained,
                      const AnchorGraph &query_graph,
                      const Eigen::VectorXd &embedding,
                      Segmentation mode);

/// One click and one text query per GT instance, scored against the GT
/// instance masks in every view.
EvalReport evaluate(const TrainedScene &trained, Segmentation mode);

/// train + evaluate, writing artifacts under `out` when given.
EvalReport run_pipeline(const PipelineConfig &config, const std::optional<std::filesystem::path> &out);

void write_artifacts(const std::filesystem::path &out, const TrainedScene &trained, const EvalReport *report);

struct AblationRow {
    std::uint64_t seed = 0;
    EvalReport full;
    EvalReport no_prop;
    EvalReport no_graphseg;
    EvalReport case1; // no_prop and no_graphseg
};

/// Shares stage 1 across the four variants of one seed.
AblationRow run_ablation(const PipelineConfig &config);

Json ablation_to_json(const std::vector<AblationRow> &rows);

} // namespace agsplat
