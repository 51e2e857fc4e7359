// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/scene.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace agsplat {

enum class EdgeKind : std::uint8_t { Intra, Inter };

struct Edge {
    AnchorId i = 0; // i < j
    AnchorId j = 0;
    EdgeKind kind = EdgeKind::Intra;
};

struct Neighbor {
    AnchorId node;
    std::uint32_t edge;
};

/// Sparse undirected anchor graph with a cache of Gaussian-kernel weights.
/// The Laplacian is never materialized.
class AnchorGraph {
  public:
    AnchorGraph() = default;
    AnchorGraph(std::vector<Edge> edges, std::size_t num_nodes, double tau, double voxel_size_scale);

    std::size_t num_nodes() const { return mNumNodes; }
    std::size_t num_edges() const { return mEdges.size(); }
    const std::vector<Edge> &edges() const { return mEdges; }
    const std::vector<double> &weights() const { return mWeights; }
    double tau() const { return mTau; }
    double voxel_size_scale() const { return mVoxelSizeScale; }

    std::span<const Neighbor> neighbors(AnchorId node) const {
        return {mAdjacency.data() + mAdjOffsets[node], mAdjacency.data() + mAdjOffsets[node + 1]};
    }

    /// Cached weight of edge (i, j) in either order; nullopt if not adjacent.
    std::optional<double> weight(AnchorId i, AnchorId j) const;

    /// Recomputes every cached weight from the given features.
    void refresh_weights(const FeatureMatrix &features);

  private:
    std::vector<Edge> mEdges;
    std::vector<double> mWeights;
    std::vector<std::uint32_t> mAdjOffsets;
    std::vector<Neighbor> mAdjacency;
    std::size_t mNumNodes  = 0;
    double mTau            = 0.05;
    double mVoxelSizeScale = 1.0;
};

/// Bins anchors of every level into top-level voxels of side
/// top_voxel_size * voxel_size_scale. Intra edges join anchors sharing a bin,
/// inter edges join anchors in 26-neighboring bins. Weights are computed from
/// the current anchor features.
AnchorGraph build_graph(const Scene &scene, double voxel_size_scale = 1.0);

/// exp(-|fi - fj|^2 / (2 tau^2)).
double edge_weight(const Vec3 &fi, const Vec3 &fj, double tau);

struct DirichletResult {
    double energy = 0.0;
    FeatureMatrix gradient;
};

/// Sum over ordered pairs of w_ij |F_i - F_j|^2 with cached weights held
/// constant; gradient_i = 4 sum_j w_ij (F_i - F_j).
DirichletResult dirichlet_energy(const AnchorGraph &graph, const FeatureMatrix &features);

/// Energy with weights evaluated from `features` instead of the cache.
double dirichlet_energy_live(const AnchorGraph &graph, const FeatureMatrix &features);

struct PropagateResult {
    FeatureMatrix features;
    int iterations     = 0;
    int accepted_steps = 0;
    std::vector<double> energies; // energy before the first step and after each accepted step
};

/// Gradient descent on the Dirichlet energy, re-evaluating the kernel weights
/// from the current features every iteration. Each step halves until the
/// energy (with weights at the trial point) does not increase; stops after
/// `max_iters`, when no step is accepted, or on relative decrease < 1e-8.
PropagateResult propagate(AnchorGraph graph, FeatureMatrix features, int max_iters, double step);

/// One "i j kind w" line per edge.
void write_graph_dump(std::ostream &out, const AnchorGraph &graph);

} // namespace agsplat
