// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/hyper.hpp>

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace agsplat {

using Vec3  = Eigen::Vector3d;
using Mat3  = Eigen::Matrix3d;
using Quat4 = Eigen::Vector4d; // (w, x, y, z)
using VoxelCoord = Eigen::Matrix<std::int64_t, 3, 1>;

/// Row-per-anchor feature matrix.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

using AnchorId = std::uint32_t;

struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Ones();

    Vec3 extent() const { return max - min; }
    bool contains(const Vec3 &p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
};

/// A Gaussian parameterized relative to the anchor that owns it.
struct ChildGaussian {
    Vec3 offset    = Vec3::Zero(); // in units of the anchor voxel size
    Vec3 rel_scale = Vec3::Zero(); // pre-sigmoid logits
    Quat4 rotation = Quat4(1.0, 0.0, 0.0, 0.0);
    double opacity = 0.1;
    Vec3 color     = Vec3::Constant(0.5);
};

struct Anchor {
    Vec3 position     = Vec3::Zero();
    double voxel_size = 1.0;
    int level         = 0; // 0 is the coarsest layer
    Vec3 feature      = Vec3::Zero();
    std::optional<Eigen::VectorXd> language_feature;
    std::vector<ChildGaussian> children;
};

struct VoxelKey {
    int level = 0;
    VoxelCoord coord = VoxelCoord::Zero();

    bool operator==(const VoxelKey &o) const { return level == o.level && coord == o.coord; }
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey &key) const noexcept;
};

/// Three-level voxel hash. Level 0 voxels have side extent_max / top_resolution;
/// each finer level divides the side by level_scale.
class MultiResGrid {
  public:
    MultiResGrid() = default;
    MultiResGrid(const Aabb &bounds, int top_resolution, int level_scale);

    const Aabb &bounds() const { return mBounds; }
    int top_resolution() const { return mTopResolution; }
    int level_scale() const { return mLevelScale; }

    double voxel_size(int level) const;
    double top_voxel_size() const { return voxel_size(0); }

    /// Voxel index per axis at `level`. Nullopt when the point lies outside
    /// the voxel lattice, which may extend past the bounds on shorter axes.
    std::optional<VoxelCoord> voxel_of(int level, const Vec3 &p) const;
    Vec3 center(int level, const VoxelCoord &coord) const;

    std::optional<AnchorId> find(int level, const VoxelCoord &coord) const;
    bool occupied(int level, const VoxelCoord &coord) const { return find(level, coord).has_value(); }
    /// Returns false if the voxel already holds an anchor.
    bool insert(int level, const VoxelCoord &coord, AnchorId id);
    void clear();

    std::size_t size() const { return mOccupancy.size(); }
    std::size_t size(int level) const;

    const std::unordered_map<VoxelKey, AnchorId, VoxelKeyHash> &occupancy() const { return mOccupancy; }

  private:
    Aabb mBounds;
    int mTopResolution = 1;
    int mLevelScale    = 4;
    std::unordered_map<VoxelKey, AnchorId, VoxelKeyHash> mOccupancy;
};

struct Scene {
    std::vector<Anchor> anchors;
    MultiResGrid grid;
    Hyper hyper;
    std::uint64_t seed = 0;

    std::size_t num_children() const { return anchors.size() * static_cast<std::size_t>(hyper.k); }

    /// Recomputes grid occupancy from anchor positions and levels.
    void rebuild_grid();

    FeatureMatrix features() const;
    void set_features(const FeatureMatrix &features);

    /// Throws SpecViolation when occupancy, child counts or scale confinement
    /// are broken.
    void check_invariants() const;
};

struct GaussianParams {
    Vec3 mean;
    Vec3 scale;
};

double sigmoid(double x);

/// Tight AABB of the points expanded by 5% of the extent on every side.
/// Zero-extent axes are widened to 1e-6 with a warning.
Aabb bounds_for_points(std::span<const Vec3> points);

/// Builds anchors at the centers of all occupied voxels on every level.
Scene voxelize_points(std::span<const Vec3> points, const Hyper &hyper, std::uint64_t seed);
Scene voxelize_points(std::span<const Vec3> points,
                      const Hyper &hyper,
                      std::uint64_t seed,
                      const Aabb &bounds);

/// Default-initialized anchor at the given voxel. The feature is drawn from a
/// stream keyed by (seed, level, coord) so it does not depend on insertion order.
Anchor make_anchor(const MultiResGrid &grid,
                   int level,
                   const VoxelCoord &coord,
                   const Hyper &hyper,
                   std::uint64_t seed);

/// mu = x + o * l, s = sigmoid(s_hat) * l (per axis).
GaussianParams gaussian_params(const Anchor &anchor, int child_index);

/// R(q) diag(s)^2 R(q)^T. Non-unit quaternions are normalized with a warning.
Mat3 covariance_from(const Quat4 &q, const Vec3 &s);

Mat3 rotation_from(const Quat4 &q);

/// Value of the `percentile`-th percentile of the signal (linear interpolation).
double densify_threshold(std::span<const double> grad_signal, double percentile);

/// For every child whose signal exceeds `threshold`, proposes an anchor at each
/// level's voxel containing the child mean; proposals into occupied voxels
/// are cancelled. Returns the number of anchors added.
std::size_t densify(Scene &scene, std::span<const double> grad_signal, double threshold);

} // namespace agsplat
