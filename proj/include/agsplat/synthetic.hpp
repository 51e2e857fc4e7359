// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/camera.hpp>
#include <agsplat/hyper.hpp>
#include <agsplat/image.hpp>
#include <agsplat/objective.hpp>
#include <agsplat/scene.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace agsplat {

enum class Primitive { Box, Sphere, Ellipsoid };

struct InstanceSpec {
    Primitive shape   = Primitive::Sphere;
    Vec3 center       = Vec3::Zero();
    Vec3 half_extent  = Vec3::Constant(0.5); // radii for sphere/ellipsoid (sphere uses x)
    int class_id      = 0;
    Vec3 color        = Vec3::Constant(0.5);
};

struct CameraRingSpec {
    int count        = 8;
    double radius    = 5.0;
    Vec3 look_at     = Vec3::Zero();
    double elevation = 0.5; // radians; views alternate between +elevation and -elevation
    double fov_y     = 0.9;
    int width        = 64;
    int height       = 64;
};

struct SyntheticSpec {
    std::vector<InstanceSpec> instances;
    double point_spacing = 0.05; // mean surface distance between samples
    double point_radius  = 0.04; // world std of each rasterized point
    double opacity       = 0.9;
    CameraRingSpec cameras;
    double feature_noise    = 0.0; // std of Gaussian noise added to initial anchor features
    double oversegment_prob = 0.0; // chance a visible mask is split in two
    int num_classes   = 3;
    int embedding_dim = 512;
    bool separable    = true;
    std::uint64_t seed = 0;
};

struct SyntheticScene {
    std::vector<Vec3> points;
    std::vector<int> labels; // instance index per point
    std::vector<Vec3> colors;
    std::vector<Camera> cameras;
    /// Full-resolution GT visibility mask of every instance in every view,
    /// indexed [view][instance]; may be empty when occluded or out of frame.
    std::vector<std::vector<Mask>> instance_masks;
    /// Training masks per view (after splitting and nested-mask removal).
    std::vector<MaskSet> masks;
    /// Instance index of every kept training mask.
    std::vector<std::vector<int>> mask_instance;
    /// Language embedding per kept training mask.
    std::vector<std::vector<Eigen::VectorXd>> embeddings;
    /// Orthonormal rows, one per class.
    Eigen::MatrixXd class_embeddings;
    /// Views in which some instance is fully hidden, per view.
    std::vector<std::vector<int>> occluded_instances;

    std::vector<TrainingView> training_views() const;
};

/// Three-instance (or `instances`-instance) arrangement whose members are
/// separated by at least two top-level voxels for the given hyperparameters.
SyntheticSpec separable_preset(std::uint64_t seed, const Hyper &hyper, int instances = 3);

/// Top-level voxel size the scene's points will produce under `hyper`.
double predicted_top_voxel_size(const SyntheticSpec &spec, const Hyper &hyper);

/// Deterministic for a fixed spec. Throws SpecViolation for zero instances or
/// when a separable spec places instances closer than two top-level voxels.
SyntheticScene generate_scene(const SyntheticSpec &spec, const Hyper &hyper);

/// Stands in for photometric training: places each anchor's children on input
/// points inside its voxel with the rasterization radius, opacity and point
/// color. Anchors without points keep their defaults.
void apply_synthetic_appearance(Scene &scene, const SyntheticScene &data, const SyntheticSpec &spec);

/// Instance index of the nearest point for every anchor.
std::vector<int> anchor_instance_labels(const Scene &scene, const SyntheticScene &data);

} // namespace agsplat
