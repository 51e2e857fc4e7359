// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/graph.hpp>
#include <agsplat/objective.hpp>
#include <agsplat/scene.hpp>

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agsplat {

/// Disjoint sets with union by rank and path compression.
class UnionFind {
  public:
    explicit UnionFind(std::size_t n);

    std::size_t find(std::size_t x);
    /// Returns true if the two sets were distinct.
    bool unite(std::size_t a, std::size_t b);
    /// Points every node directly at its root.
    void compress_all();

    std::size_t size() const { return mParent.size(); }
    const std::vector<std::size_t> &parents() const { return mParent; }

  private:
    std::vector<std::size_t> mParent;
    std::vector<std::uint8_t> mRank;
};

struct ClusterMatch {
    std::size_t view = 0;
    std::size_t mask = 0;
    double score     = 0.0;
};

struct InstanceCluster {
    std::vector<AnchorId> anchors; // sorted
    Vec3 mean_feature = Vec3::Zero();
    std::optional<Eigen::VectorXd> language_feature;
    std::vector<ClusterMatch> best_matches; // one per view with a positive score
};

/// Connected components of the edges whose weight is >= threshold, with
/// weights computed from the given features. Singletons included; components
/// are sorted internally and ordered by smallest member.
std::vector<std::vector<AnchorId>> weighted_components(const AnchorGraph &graph,
                                                       const FeatureMatrix &features,
                                                       double threshold);

/// Union-find clustering over `graph` with weights from the scene's current
/// features. Singleton components are dropped.
std::vector<InstanceCluster> cluster(const AnchorGraph &graph, const Scene &scene, double weight_threshold);

/// IoU(instance, mask) * (1 - min(|cluster_mean - mask_mean|_1, 1)). Both maps
/// empty gives 0.
double matching_score(const Mask &instance, const Mask &mask, const Vec3 &cluster_mean, const Vec3 &mask_mean);

struct AttachReport {
    std::vector<bool> attached; // per cluster
    std::vector<std::size_t> invisible_clusters;
};

/// embeddings[v][j] is the language embedding of mask j of view v (aligned with
/// the view's MaskSet). Each cluster gets the S-weighted mean of its best
/// per-view matches, L2-normalized, written to the cluster and all member anchors.
AttachReport attach_language(Scene &scene,
                             std::vector<InstanceCluster> &clusters,
                             std::span<const TrainingView> views,
                             const std::vector<std::vector<Eigen::VectorXd>> &embeddings);

/// Rebuilds cluster language features from the member anchors' stored ones.
void adopt_anchor_language(const Scene &scene, std::vector<InstanceCluster> &clusters);

/// JSON list of {id, size, mean_feature, best_matches, language_attached}.
std::string cluster_report_json(std::span<const InstanceCluster> clusters);

} // namespace agsplat
