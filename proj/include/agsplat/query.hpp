// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/camera.hpp>
#include <agsplat/cluster.hpp>
#include <agsplat/graph.hpp>
#include <agsplat/image.hpp>
#include <agsplat/scene.hpp>

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace agsplat {

/// The query graph doubles the binning voxel size.
inline constexpr double kQueryGraphScale = 2.0;
/// Replacement count that fills every freed top-level voxel.
inline constexpr int kAllFreedVoxels = -1;
inline constexpr int kDefaultReplacementAnchors = kAllFreedVoxels;

struct ClickOrigin {
    std::size_t view = 0;
    double px = 0.0;
    double py = 0.0;
};

struct Selection {
    std::vector<AnchorId> seeds; // sorted
    std::vector<AnchorId> grown; // sorted, superset of seeds
    std::optional<ClickOrigin> click;
    std::optional<Eigen::VectorXd> text;
};

/// World point under pixel (px, py) at the rendered depth. Throws
/// NoGeometryAtPixel when the depth there is zero.
Vec3 unproject_click(const ImageD &depth, const Camera &camera, double px, double py);
Vec3 unproject_click(const Scene &scene, const Camera &camera, double px, double py);

/// Closest anchor by Euclidean distance, lowest id on ties.
AnchorId nearest_anchor(const Scene &scene, const Vec3 &p);

/// Breadth-first closure of `seeds` over edges with cached weight > threshold.
std::vector<AnchorId> grow_region(const AnchorGraph &graph, std::span<const AnchorId> seeds, double threshold);

/// Nearest-anchor seed grown over the query graph (built here at scale 2, or
/// passed in with weights refreshed from the scene's features).
Selection click_query(const Scene &scene, const Vec3 &p);
Selection click_query(const Scene &scene, const AnchorGraph &query_graph, const Vec3 &p);

/// Cosine similarity against every cluster language feature; clusters above
/// (max - text_margin) seed the same growth as click_query. Throws
/// LanguageFeaturesMissing when no cluster carries a language feature.
Selection text_query(const Scene &scene,
                     std::span<const InstanceCluster> clusters,
                     const Eigen::VectorXd &query_embedding);
Selection text_query(const Scene &scene,
                     const AnchorGraph &query_graph,
                     std::span<const InstanceCluster> clusters,
                     const Eigen::VectorXd &query_embedding);

/// Every anchor whose kernel weight to some seed exceeds `threshold`,
/// regardless of connectivity.
std::vector<AnchorId> global_similarity_selection(const Scene &scene,
                                                  std::span<const AnchorId> seeds,
                                                  double threshold);

struct RemovalResult {
    Scene scene;
    std::vector<Mask> artifact_masks;         // one per camera
    std::vector<AnchorId> replacement_anchors; // ids in the edited scene
    std::vector<AnchorId> neighbor_anchors;    // ids in the edited scene
    std::vector<AnchorId> old_to_new;          // kRemovedAnchor for deleted ids
};

inline constexpr AnchorId kRemovedAnchor = ~AnchorId{0};

/// Deletes the selected anchors, seeds up to `replacement_count` default
/// anchors (every one with kAllFreedVoxels) at the freed top-level voxels
/// nearest the removed centroid, and renders the artifact region
/// (replacements plus graph neighbors of the removed set) per camera,
/// dilated by the boundary band width. Throws WholeSceneRemoval when nothing would remain.
RemovalResult remove_object(const Scene &scene,
                            std::span<const AnchorId> selection,
                            std::span<const Camera> cameras,
                            int replacement_count = kDefaultReplacementAnchors);

struct Particle {
    Vec3 position;
    Mat3 covariance;
    double opacity = 0.0;
    Vec3 color;
    bool object = false; // false: sticky boundary
};

/// Children with opacity > alpha_min; members of `selection` are tagged as
/// the object, the remaining scene as boundary.
std::vector<Particle> export_selection(const Scene &scene, std::span<const AnchorId> selection, double alpha_min);

/// "x y z | c00 c01 c02 c11 c12 c22 | alpha | r g b | tag" lines after a
/// commented metadata header with the material parameters.
void write_particles(std::ostream &out, std::span<const Particle> particles);

} // namespace agsplat
