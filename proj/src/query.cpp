// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/metrics.hpp>
#include <agsplat/query.hpp>
#include <agsplat/render.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <set>
#include <tuple>

namespace agsplat {

namespace {

std::vector<AnchorId>
sorted_unique(std::vector<AnchorId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

AnchorGraph
query_graph_for(const Scene &scene) {
    return build_graph(scene, kQueryGraphScale);
}

} // namespace

Vec3
unproject_click(const ImageD &depth, const Camera &camera, double px, double py) {
    const int x = int(std::lround(px));
    const int y = int(std::lround(py));
    if (x < 0 || y < 0 || x >= depth.width() || y >= depth.height()) {
        throw Error(ErrorCode::InvalidInput, "click outside the image");
    }
    const double z = depth(x, y);
    if (!(z > 0)) throw Error(ErrorCode::NoGeometryAtPixel, "no geometry under the clicked pixel");
    return camera.unproject(px, py, z);
}

Vec3
unproject_click(const Scene &scene, const Camera &camera, double px, double py) {
    return unproject_click(render(scene, camera, RenderMode::Depth).depth, camera, px, py);
}

AnchorId
nearest_anchor(const Scene &scene, const Vec3 &p) {
    if (scene.anchors.empty()) throw Error(ErrorCode::InvalidInput, "scene has no anchors");
    AnchorId best  = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < scene.anchors.size(); ++a) {
        const double d2 = (scene.anchors[a].position - p).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best    = AnchorId(a);
        }
    }
    return best;
}

std::vector<AnchorId>
grow_region(const AnchorGraph &graph, std::span<const AnchorId> seeds, double threshold) {
    std::vector<bool> in(graph.num_nodes(), false);
    std::deque<AnchorId> frontier;
    for (auto s : seeds) {
        if (s < in.size() && !in[s]) {
            in[s] = true;
            frontier.push_back(s);
        }
    }
    while (!frontier.empty()) {
        const AnchorId cur = frontier.front();
        frontier.pop_front();
        for (const auto &n : graph.neighbors(cur)) {
            if (!in[n.node] && graph.weights()[n.edge] > threshold) {
                in[n.node] = true;
                frontier.push_back(n.node);
            }
        }
    }
    std::vector<AnchorId> out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i]) out.push_back(AnchorId(i));
    }
    return out;
}

Selection
click_query(const Scene &scene, const Vec3 &p) {
    return click_query(scene, query_graph_for(scene), p);
}

Selection
click_query(const Scene &scene, const AnchorGraph &query_graph, const Vec3 &p) {
    Selection sel;
    sel.seeds = {nearest_anchor(scene, p)};
    sel.grown = grow_region(query_graph, sel.seeds, scene.hyper.grow_weight_threshold);
    return sel;
}

Selection
text_query(const Scene &scene, std::span<const InstanceCluster> clusters, const Eigen::VectorXd &query_embedding) {
    return text_query(scene, query_graph_for(scene), clusters, query_embedding);
}

Selection
text_query(const Scene &scene,
           const AnchorGraph &query_graph,
           std::span<const InstanceCluster> clusters,
           const Eigen::VectorXd &query_embedding) {
    std::vector<std::pair<std::size_t, double>> sims;
    const double qn = query_embedding.norm();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto &lang = clusters[c].language_feature;
        if (!lang) continue;
        if (lang->size() != query_embedding.size()) {
            throw Error(ErrorCode::InvalidInput, "query embedding dimension differs from language features");
        }
        const double denom = lang->norm() * qn;
        sims.emplace_back(c, denom > 0 ? lang->dot(query_embedding) / denom : 0.0);
    }
    if (sims.empty()) throw Error(ErrorCode::LanguageFeaturesMissing, "no cluster carries a language feature");
    double eps = -std::numeric_limits<double>::infinity();
    for (const auto &[c, s] : sims) eps = std::max(eps, s);

    Selection sel;
    sel.text = query_embedding;
    for (const auto &[c, s] : sims) {
        if (s > eps - scene.hyper.text_margin) {
            sel.seeds.insert(sel.seeds.end(), clusters[c].anchors.begin(), clusters[c].anchors.end());
        }
    }
    sel.seeds = sorted_unique(std::move(sel.seeds));
    sel.grown = grow_region(query_graph, sel.seeds, scene.hyper.grow_weight_threshold);
    return sel;
}

std::vector<AnchorId>
global_similarity_selection(const Scene &scene, std::span<const AnchorId> seeds, double threshold) {
    std::vector<AnchorId> out;
    for (std::size_t a = 0; a < scene.anchors.size(); ++a) {
        for (auto s : seeds) {
            if (edge_weight(scene.anchors[a].feature, scene.anchors[s].feature, scene.hyper.tau) > threshold) {
                out.push_back(AnchorId(a));
                break;
            }
        }
    }
    for (auto s : seeds) out.push_back(s);
    return sorted_unique(std::move(out));
}

RemovalResult
remove_object(const Scene &scene,
              std::span<const AnchorId> selection,
              std::span<const Camera> cameras,
              int replacement_count) {
    const auto removed_ids = sorted_unique({selection.begin(), selection.end()});
    if (removed_ids.empty()) throw Error(ErrorCode::InvalidInput, "selection is empty");
    if (removed_ids.back() >= scene.anchors.size()) throw Error(ErrorCode::InvalidInput, "unknown anchor id");
    if (removed_ids.size() == scene.anchors.size()) {
        throw Error(ErrorCode::WholeSceneRemoval, "selection covers the whole scene");
    }
    std::vector<bool> removed(scene.anchors.size(), false);
    for (auto id : removed_ids) removed[id] = true;

    const AnchorGraph graph = build_graph(scene, 1.0);
    std::vector<AnchorId> neighbors_old;
    for (auto id : removed_ids) {
        for (const auto &n : graph.neighbors(id)) {
            if (!removed[n.node]) neighbors_old.push_back(n.node);
        }
    }
    neighbors_old = sorted_unique(std::move(neighbors_old));

    Vec3 centroid = Vec3::Zero();
    std::set<std::tuple<std::int64_t, std::int64_t, std::int64_t>> seen;
    std::vector<VoxelCoord> candidates;
    for (auto id : removed_ids) {
        const auto &a = scene.anchors[id];
        centroid += a.position;
        if (auto c = scene.grid.voxel_of(0, a.position); c && seen.insert({(*c)[0], (*c)[1], (*c)[2]}).second) {
            candidates.push_back(*c);
        }
    }
    centroid /= double(removed_ids.size());
    std::stable_sort(candidates.begin(), candidates.end(), [&](const VoxelCoord &a, const VoxelCoord &b) {
        const double da = (scene.grid.center(0, a) - centroid).squaredNorm();
        const double db = (scene.grid.center(0, b) - centroid).squaredNorm();
        if (da != db) return da < db;
        return std::tie(a[0], a[1], a[2]) < std::tie(b[0], b[1], b[2]);
    });

    RemovalResult result;
    result.scene.hyper = scene.hyper;
    result.scene.seed  = scene.seed;
    result.scene.grid  = MultiResGrid(scene.grid.bounds(), scene.grid.top_resolution(), scene.grid.level_scale());
    result.old_to_new.assign(scene.anchors.size(), kRemovedAnchor);
    for (std::size_t a = 0; a < scene.anchors.size(); ++a) {
        if (removed[a]) continue;
        result.old_to_new[a] = AnchorId(result.scene.anchors.size());
        result.scene.anchors.push_back(scene.anchors[a]);
    }
    result.scene.rebuild_grid();

    for (const auto &c : candidates) {
        if (replacement_count >= 0 && int(result.replacement_anchors.size()) >= replacement_count) break;
        if (result.scene.grid.occupied(0, c)) continue;
        const auto id = AnchorId(result.scene.anchors.size());
        result.scene.grid.insert(0, c, id);
        result.scene.anchors.push_back(make_anchor(result.scene.grid, 0, c, scene.hyper, scene.seed));
        result.replacement_anchors.push_back(id);
    }
    for (auto id : neighbors_old) result.neighbor_anchors.push_back(result.old_to_new[id]);

    RenderRequest request;
    request.mode             = RenderMode::Instance;
    request.instance_anchors = result.replacement_anchors;
    request.instance_anchors.insert(request.instance_anchors.end(),
                                    result.neighbor_anchors.begin(),
                                    result.neighbor_anchors.end());
    for (const auto &cam : cameras) {
        if (request.instance_anchors.empty()) {
            result.artifact_masks.emplace_back(cam.width, cam.height);
            continue;
        }
        result.artifact_masks.push_back(
            dilate(render(result.scene, cam, request).instance, boundary_band_width(cam.width, cam.height)));
    }
    return result;
}

std::vector<Particle>
export_selection(const Scene &scene, std::span<const AnchorId> selection, double alpha_min) {
    std::vector<bool> selected(scene.anchors.size(), false);
    for (auto id : selection) {
        if (id < selected.size()) selected[id] = true;
    }
    std::vector<Particle> out;
    for (std::size_t a = 0; a < scene.anchors.size(); ++a) {
        const auto &anchor = scene.anchors[a];
        for (int c = 0; c < scene.hyper.k; ++c) {
            const auto &g = anchor.children[std::size_t(c)];
            if (!(g.opacity > alpha_min)) continue;
            const auto params = gaussian_params(anchor, c);
            out.push_back({params.mean, covariance_from(g.rotation, params.scale), g.opacity, g.color, selected[a]});
        }
    }
    return out;
}

void
write_particles(std::ostream &out, std::span<const Particle> particles) {
    const auto precision = out.precision(9);
    out << "# agsplat particles v1\n"
        << "# format: x y z | c00 c01 c02 c11 c12 c22 | alpha | r g b | tag\n"
        << "# material object: youngs_modulus=2e8 poisson_ratio=0.4\n"
        << "# material boundary: youngs_modulus=2e6 poisson_ratio=0.3\n";
    for (const auto &p : particles) {
        const auto &c = p.covariance;
        out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << " | " << c(0, 0) << ' '
            << c(0, 1) << ' ' << c(0, 2) << ' ' << c(1, 1) << ' ' << c(1, 2) << ' ' << c(2, 2) << " | "
            << p.opacity << " | " << p.color.x() << ' ' << p.color.y() << ' ' << p.color.z() << " | "
            << (p.object ? "object" : "boundary") << '\n';
    }
    out.precision(precision);
}

} // namespace agsplat
