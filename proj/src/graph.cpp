// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/graph.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <ostream>
#include <tuple>

namespace agsplat {

namespace {

using BinKey = std::array<std::int64_t, 3>;

} // namespace

AnchorGraph::AnchorGraph(std::vector<Edge> edges, std::size_t num_nodes, double tau, double voxel_size_scale)
    : mEdges(std::move(edges)), mWeights(mEdges.size(), 1.0), mNumNodes(num_nodes), mTau(tau),
      mVoxelSizeScale(voxel_size_scale) {
    if (!(tau > 0)) throw Error(ErrorCode::InvalidInput, "tau must be positive");
    std::vector<std::uint32_t> degree(num_nodes, 0);
    for (auto &e : mEdges) {
        if (e.i == e.j) throw Error(ErrorCode::InvalidInput, "self edge");
        if (e.i > e.j) std::swap(e.i, e.j);
        if (e.j >= num_nodes) throw Error(ErrorCode::InvalidInput, "edge references a missing node");
        ++degree[e.i];
        ++degree[e.j];
    }
    std::sort(mEdges.begin(), mEdges.end(), [](const Edge &a, const Edge &b) {
        return std::tie(a.i, a.j) < std::tie(b.i, b.j);
    });
    for (std::size_t e = 1; e < mEdges.size(); ++e) {
        if (mEdges[e].i == mEdges[e - 1].i && mEdges[e].j == mEdges[e - 1].j) {
            throw Error(ErrorCode::InvalidInput, "duplicate edge");
        }
    }
    mAdjOffsets.assign(num_nodes + 1, 0);
    for (std::size_t n = 0; n < num_nodes; ++n) mAdjOffsets[n + 1] = mAdjOffsets[n] + degree[n];
    mAdjacency.resize(mAdjOffsets.back());
    std::vector<std::uint32_t> fill(mAdjOffsets.begin(), mAdjOffsets.end() - 1);
    for (std::uint32_t e = 0; e < mEdges.size(); ++e) {
        mAdjacency[fill[mEdges[e].i]++] = {mEdges[e].j, e};
        mAdjacency[fill[mEdges[e].j]++] = {mEdges[e].i, e};
    }
}

std::optional<double>
AnchorGraph::weight(AnchorId i, AnchorId j) const {
    if (i >= mNumNodes || j >= mNumNodes) return std::nullopt;
    for (const auto &n : neighbors(i)) {
        if (n.node == j) return mWeights[n.edge];
    }
    return std::nullopt;
}

void
AnchorGraph::refresh_weights(const FeatureMatrix &features) {
    if (std::size_t(features.rows()) != mNumNodes) {
        throw Error(ErrorCode::InvalidInput, "feature rows must match graph nodes");
    }
    for (std::size_t e = 0; e < mEdges.size(); ++e) {
        mWeights[e] = edge_weight(features.row(mEdges[e].i).transpose(), features.row(mEdges[e].j).transpose(), mTau);
    }
}

AnchorGraph
build_graph(const Scene &scene, double voxel_size_scale) {
    if (scene.anchors.empty()) throw Error(ErrorCode::InvalidInput, "graph needs at least one anchor");
    const double side = scene.grid.top_voxel_size() * voxel_size_scale;
    const Vec3 origin = scene.grid.bounds().min;

    std::map<BinKey, std::vector<AnchorId>> bins;
    for (std::size_t a = 0; a < scene.anchors.size(); ++a) {
        const Vec3 rel = (scene.anchors[a].position - origin) / side;
        BinKey key{std::int64_t(std::floor(rel.x())), std::int64_t(std::floor(rel.y())), std::int64_t(std::floor(rel.z()))};
        bins[key].push_back(AnchorId(a));
    }

    std::vector<Edge> edges;
    for (const auto &[key, members] : bins) {
        for (std::size_t u = 0; u < members.size(); ++u) {
            for (std::size_t v = u + 1; v < members.size(); ++v) {
                edges.push_back({members[u], members[v], EdgeKind::Intra});
            }
        }
        // Each unordered bin pair is visited once, from its lexicographically smaller bin.
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    const BinKey offset{dx, dy, dz};
                    if (offset <= BinKey{0, 0, 0}) continue;
                    auto it = bins.find({key[0] + dx, key[1] + dy, key[2] + dz});
                    if (it == bins.end()) continue;
                    for (auto a : members) {
                        for (auto b : it->second) edges.push_back({a, b, EdgeKind::Inter});
                    }
                }
            }
        }
    }
    AnchorGraph graph(std::move(edges), scene.anchors.size(), scene.hyper.tau, voxel_size_scale);
    graph.refresh_weights(scene.features());
    return graph;
}

double
edge_weight(const Vec3 &fi, const Vec3 &fj, double tau) {
    return std::exp(-(fi - fj).squaredNorm() / (2.0 * tau * tau));
}

DirichletResult
dirichlet_energy(const AnchorGraph &graph, const FeatureMatrix &features) {
    if (std::size_t(features.rows()) != graph.num_nodes()) {
        throw Error(ErrorCode::InvalidInput, "feature rows must match graph nodes");
    }
    DirichletResult out;
    out.gradient = FeatureMatrix::Zero(features.rows(), 3);
    const auto &edges   = graph.edges();
    const auto &weights = graph.weights();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto diff = (features.row(edges[e].i) - features.row(edges[e].j)).eval();
        out.energy += 2.0 * weights[e] * diff.squaredNorm();
        out.gradient.row(edges[e].i) += 4.0 * weights[e] * diff;
        out.gradient.row(edges[e].j) -= 4.0 * weights[e] * diff;
    }
    return out;
}

double
dirichlet_energy_live(const AnchorGraph &graph, const FeatureMatrix &features) {
    double energy = 0.0;
    for (const auto &e : graph.edges()) {
        const Vec3 fi = features.row(e.i).transpose();
        const Vec3 fj = features.row(e.j).transpose();
        energy += 2.0 * edge_weight(fi, fj, graph.tau()) * (fi - fj).squaredNorm();
    }
    return energy;
}

PropagateResult
propagate(AnchorGraph graph, FeatureMatrix features, int max_iters, double step) {
    if (!(step > 0)) throw Error(ErrorCode::InvalidInput, "propagation step must be positive");
    constexpr int kMaxHalvings = 50;
    PropagateResult result;
    graph.refresh_weights(features);
    double energy = dirichlet_energy_live(graph, features);
    result.energies.push_back(energy);
    for (int it = 0; it < max_iters; ++it) {
        result.iterations = it + 1;
        graph.refresh_weights(features);
        const auto current = dirichlet_energy(graph, features);
        if (current.gradient.isZero(0.0)) break;
        double trial_step = step;
        bool accepted     = false;
        FeatureMatrix trial;
        double trial_energy = energy;
        for (int h = 0; h < kMaxHalvings; ++h, trial_step *= 0.5) {
            trial        = features - trial_step * current.gradient;
            trial_energy = dirichlet_energy_live(graph, trial);
            if (trial_energy <= energy) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        features = std::move(trial);
        ++result.accepted_steps;
        const double decrease = energy - trial_energy;
        energy                = trial_energy;
        result.energies.push_back(energy);
        if (decrease <= 1e-8 * std::max(std::abs(result.energies[result.energies.size() - 2]), 1e-300)) break;
    }
    result.features = std::move(features);
    return result;
}

void
write_graph_dump(std::ostream &out, const AnchorGraph &graph) {
    const auto precision = out.precision(17);
    for (std::size_t e = 0; e < graph.num_edges(); ++e) {
        const auto &edge = graph.edges()[e];
        out << edge.i << ' ' << edge.j << ' ' << (edge.kind == EdgeKind::Intra ? "intra" : "inter") << ' '
            << graph.weights()[e] << '\n';
    }
    out.precision(precision);
}

} // namespace agsplat
