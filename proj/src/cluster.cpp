// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/cluster.hpp>
#include <agsplat/error.hpp>
#include <agsplat/metrics.hpp>
#include <agsplat/render.hpp>

#include <json.hpp>

#include <algorithm>
#include <map>
#include <numeric>

namespace agsplat {

UnionFind::UnionFind(std::size_t n) : mParent(n), mRank(n, 0) {
    std::iota(mParent.begin(), mParent.end(), std::size_t{0});
}

std::size_t
UnionFind::find(std::size_t x) {
    std::size_t root = x;
    while (mParent[root] != root) root = mParent[root];
    while (mParent[x] != root) {
        const std::size_t next = mParent[x];
        mParent[x]             = root;
        x                      = next;
    }
    return root;
}

bool
UnionFind::unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (mRank[a] < mRank[b]) std::swap(a, b);
    mParent[b] = a;
    if (mRank[a] == mRank[b]) ++mRank[a];
    return true;
}

void
UnionFind::compress_all() {
    for (std::size_t i = 0; i < mParent.size(); ++i) find(i);
}

std::vector<std::vector<AnchorId>>
weighted_components(const AnchorGraph &graph, const FeatureMatrix &features, double threshold) {
    UnionFind uf(graph.num_nodes());
    for (const auto &e : graph.edges()) {
        const double w =
            edge_weight(features.row(e.i).transpose(), features.row(e.j).transpose(), graph.tau());
        if (w >= threshold) uf.unite(e.i, e.j);
    }
    std::map<std::size_t, std::vector<AnchorId>> by_root;
    for (std::size_t i = 0; i < graph.num_nodes(); ++i) by_root[uf.find(i)].push_back(AnchorId(i));
    std::vector<std::vector<AnchorId>> out;
    out.reserve(by_root.size());
    for (auto &[root, members] : by_root) out.push_back(std::move(members));
    std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) { return a.front() < b.front(); });
    return out;
}

std::vector<InstanceCluster>
cluster(const AnchorGraph &graph, const Scene &scene, double weight_threshold) {
    if (graph.num_nodes() != scene.anchors.size()) {
        throw Error(ErrorCode::InvalidInput, "graph was built over a different anchor set");
    }
    std::vector<InstanceCluster> clusters;
    for (auto &members : weighted_components(graph, scene.features(), weight_threshold)) {
        if (members.size() < 2) continue;
        InstanceCluster c;
        for (auto id : members) c.mean_feature += scene.anchors[id].feature;
        c.mean_feature /= double(members.size());
        c.anchors = std::move(members);
        clusters.push_back(std::move(c));
    }
    return clusters;
}

double
matching_score(const Mask &instance, const Mask &mask, const Vec3 &cluster_mean, const Vec3 &mask_mean) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < instance.pixels(); ++p) {
        const bool a = instance.data()[p] != 0;
        const bool b = mask.data()[p] != 0;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    if (uni == 0) return 0.0;
    const double iou_value = double(inter) / double(uni);
    const double l1        = std::min((cluster_mean - mask_mean).lpNorm<1>(), 1.0);
    return iou_value * (1.0 - l1);
}

AttachReport
attach_language(Scene &scene,
                std::vector<InstanceCluster> &clusters,
                std::span<const TrainingView> views,
                const std::vector<std::vector<Eigen::VectorXd>> &embeddings) {
    if (views.empty()) throw Error(ErrorCode::InvalidInput, "language attachment needs at least one view");
    if (embeddings.size() != views.size()) {
        throw Error(ErrorCode::InvalidInput, "one embedding list per view is required");
    }
    const SplatCloud cloud = build_splats(scene);
    Eigen::MatrixXd feature_values(Eigen::Index(cloud.size()), 3);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        feature_values.row(Eigen::Index(i)) = scene.anchors[cloud.anchor_of[i]].feature.transpose();
    }
    std::vector<BlendRecords> records(views.size());
    std::vector<std::vector<Vec3>> mask_means(views.size());
    for (std::size_t v = 0; v < views.size(); ++v) {
        if (embeddings[v].size() != views[v].masks.size()) {
            throw Error(ErrorCode::InvalidInput, "embedding count differs from mask count");
        }
        blend_values(cloud, views[v].camera, feature_values, nullptr, nullptr, &records[v]);
        const ImageD fmap = feature_map_from_records(records[v], scene.features(), scene.hyper.k, true);
        for (const auto &m : views[v].masks.masks()) mask_means[v].push_back(mean_mask_feature(fmap, m));
    }

    AttachReport report;
    report.attached.assign(clusters.size(), false);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        auto &cl = clusters[c];
        cl.best_matches.clear();
        Eigen::VectorXd fused;
        for (std::size_t v = 0; v < views.size(); ++v) {
            const Mask inst =
                binarize(instance_value_from_records(records[v], cl.anchors, scene.anchors.size(), scene.hyper.k));
            ClusterMatch best{v, 0, 0.0};
            for (std::size_t j = 0; j < views[v].masks.size(); ++j) {
                const double s = matching_score(inst, views[v].masks[j], cl.mean_feature, mask_means[v][j]);
                if (s > best.score) best = {v, j, s};
            }
            if (best.score <= 0) continue;
            cl.best_matches.push_back(best);
            const auto &e = embeddings[v][best.mask];
            if (fused.size() == 0) fused = Eigen::VectorXd::Zero(e.size());
            if (e.size() != fused.size()) throw Error(ErrorCode::InvalidInput, "embedding dimensions differ");
            fused += best.score * e;
        }
        if (fused.size() == 0 || fused.norm() == 0) {
            report.invisible_clusters.push_back(c);
            cl.language_feature.reset();
            continue;
        }
        fused.normalize();
        cl.language_feature = fused;
        for (auto id : cl.anchors) scene.anchors[id].language_feature = fused;
        report.attached[c] = true;
    }
    return report;
}

void
adopt_anchor_language(const Scene &scene, std::vector<InstanceCluster> &clusters) {
    for (auto &cl : clusters) {
        cl.language_feature.reset();
        for (auto id : cl.anchors) {
            if (scene.anchors[id].language_feature) {
                cl.language_feature = scene.anchors[id].language_feature;
                break;
            }
        }
    }
}

std::string
cluster_report_json(std::span<const InstanceCluster> clusters) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto &cl = clusters[c];
        nlohmann::json matches = nlohmann::json::array();
        for (const auto &m : cl.best_matches) {
            matches.push_back({{"view", m.view}, {"mask", m.mask}, {"score", m.score}});
        }
        out.push_back({{"id", c},
                       {"size", cl.anchors.size()},
                       {"anchors", cl.anchors},
                       {"mean_feature", {cl.mean_feature.x(), cl.mean_feature.y(), cl.mean_feature.z()}},
                       {"best_matches", matches},
                       {"language_attached", cl.language_feature.has_value()}});
    }
    return out.dump(2);
}

} // namespace agsplat
