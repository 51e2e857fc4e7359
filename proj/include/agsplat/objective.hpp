// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/camera.hpp>
#include <agsplat/graph.hpp>
#include <agsplat/image.hpp>
#include <agsplat/render.hpp>
#include <agsplat/scene.hpp>

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace agsplat {

/// Instance masks of one view. Construction drops empty masks and masks that
/// lie entirely inside another mask.
class MaskSet {
  public:
    MaskSet() = default;
    static MaskSet from(std::vector<Mask> masks);

    std::size_t size() const { return mMasks.size(); }
    bool empty() const { return mMasks.empty(); }
    const Mask &operator[](std::size_t j) const { return mMasks[j]; }
    const std::vector<Mask> &masks() const { return mMasks; }
    /// Position of each kept mask in the list passed to from().
    const std::vector<std::size_t> &source_index() const { return mSource; }

  private:
    std::vector<Mask> mMasks;
    std::vector<std::size_t> mSource;
};

struct TrainingView {
    Camera camera;
    MaskSet masks;
};

struct OffsetLoss {
    double value = 0.0;
    std::vector<Vec3> gradient;
};

/// Mean over all offsets of exp(relu(|o|^2 - 1)).
OffsetLoss loss_local_constraint(std::span<const Vec3> offsets);
std::vector<Vec3> collect_offsets(const Scene &scene);

/// Mean over pixels of sum_i sum_{j<i} w_i w_j (z_i - z_j)^2.
double loss_depth_distortion(const BlendRecords &records);

Vec3 mean_mask_feature(const ImageD &features, const Mask &mask);

struct ImageLoss {
    double value = 0.0;
    ImageD gradient; // d loss / d feature map, H x W x 3
};

/// Sum over masks and masked pixels of |F - mean_j|. The means are held
/// constant for the gradient; pass `frozen_means` to evaluate against fixed
/// means instead of recomputing them. A positive `smoothing` e replaces the
/// norm with sqrt(|r|^2 + e^2) - e; `per_mask_mean` divides each mask's sum
/// by its pixel count.
ImageLoss loss_intra_mask(const ImageD &features,
                          const MaskSet &masks,
                          std::optional<std::span<const Vec3>> frozen_means = std::nullopt,
                          double smoothing = 0.0,
                          bool per_mask_mean = false);

struct MeanLoss {
    double value = 0.0;
    std::vector<Vec3> gradient;
};

/// 1/(m(m-1)) sum_{j != k} 1/(|mean_j - mean_k| + 1); zero for fewer than two masks.
MeanLoss loss_inter_mask(std::span<const Vec3> means);

/// Inter-mask loss of a feature map with its gradient chained through the means.
ImageLoss loss_inter_mask_image(const ImageD &features, const MaskSet &masks);

/// Pixels whose accumulated weight is below this are left at zero by the
/// normalized feature map.
inline constexpr double kMinFeatureAlpha = 1e-6;

/// Feature map from records: sum over entries of weight * feature[anchor].
/// With `alpha_normalized` each pixel is divided by its accumulated weight.
ImageD feature_map_from_records(const BlendRecords &records,
                                const FeatureMatrix &features,
                                int k,
                                bool alpha_normalized = false);

/// Chains a feature-map gradient to anchor features (through the normalized
/// map when `alpha_normalized`). When `child_signal` is given, adds
/// |sum_pixels w * dL/dF| per child.
FeatureMatrix backprop_to_anchors(const BlendRecords &records,
                                  const ImageD &image_gradient,
                                  std::size_t num_anchors,
                                  int k,
                                  std::vector<double> *child_signal = nullptr,
                                  bool alpha_normalized = false);

struct LossReport {
    double l_in   = 0.0;
    double l_d    = 0.0;
    double l_is   = 0.0;
    double l_ic   = 0.0;
    double l_prop = 0.0;
    double total  = 0.0;
};

struct TrajectoryPoint {
    int iteration = 0;
    LossReport losses;
};

enum class Optimizer {
    Adam,
    Momentum,       // heavy ball: m = beta1 m + g, p -= lr m
    ScaledMomentum, // Adam-style first moment over one shared RMS of the largest gradient
};

struct OptimizeOptions {
    Optimizer optimizer   = Optimizer::Adam;
    int iterations        = 2000;
    int densify_interval  = 500;
    bool densify          = true;
    bool optimize_offsets = true;
    double lr_feature     = 0.01;
    double lr_offset      = 0.001;
    double beta1          = 0.9;
    double beta2          = 0.999;
    double epsilon        = 1e-8;
    double intra_smoothing = 0.0;
    bool intra_per_mask_mean = true;
};

struct OptimizeResult {
    std::vector<TrajectoryPoint> trajectory; // one point per iteration plus the final state
    std::size_t anchors_added = 0;
};

/// Losses over every view, averaged across views, with no parameter update.
LossReport evaluate_losses(const Scene &scene, std::span<const TrainingView> views, const AnchorGraph *graph = nullptr);

/// Full-batch Adam on anchor features (and offsets) for the stage-1 objective
/// lambda_in L_in + lambda_is L_is + lambda_ic L_ic + lambda_d L_d.
/// Densifies every `densify_interval` iterations.
OptimizeResult optimize_stage1(Scene &scene, std::span<const TrainingView> views, const OptimizeOptions &options);

/// Stage-1 objective plus lambda_prop times the Dirichlet energy over `graph`.
/// The graph's weights are refreshed from the features every iteration.
/// No densification: the graph is tied to the current anchor set.
OptimizeResult optimize_stage2(Scene &scene,
                               AnchorGraph &graph,
                               std::span<const TrainingView> views,
                               const OptimizeOptions &options);

/// "iteration,L_in,L_d,L_is,L_ic,L_prop,total" rows.
void write_trajectory_csv(std::ostream &out, std::span<const TrajectoryPoint> trajectory);

} // namespace agsplat
