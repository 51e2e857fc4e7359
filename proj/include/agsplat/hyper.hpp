// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

namespace agsplat {

inline constexpr int kNumLevels = 3;

/// Scene-wide hyperparameters. Loss weights, graph temperature, voxelization
/// layout and the query/cluster thresholds.
struct Hyper {
    double lambda_in   = 0.5;
    double lambda_is   = 2.5;
    double lambda_ic   = 0.25;
    double lambda_d    = 50.0;
    double lambda_prop = 0.01;

    double tau = 0.05;

    int k              = 5;
    int top_resolution = 200;
    int level_scale    = 4;

    double grow_weight_threshold    = 0.90;
    double text_margin              = 0.1;
    double sim_opacity_min          = 0.02;
    double densify_grad_percentile  = 90.0;
    double cluster_weight_threshold = 0.90;

    int language_dim = 512;

    /// Throws InvalidInput when a field is out of range.
    void validate() const;
};

} // namespace agsplat
