// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "support/oracles.hpp"

#include <agsplat/error.hpp>
#include <agsplat/graph.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace agsplat;
using namespace agsplat::testing;

namespace {

/// Unit-cube scene with top voxels of side 0.25 and anchors at `positions`.
Scene
positioned_scene(const std::vector<Vec3> &positions) {
    Scene s;
    s.grid = MultiResGrid(Aabb{Vec3::Zero(), Vec3::Ones()}, 4, 2);
    for (const auto &p : positions) {
        Anchor a;
        a.position   = p;
        a.voxel_size = 0.25;
        a.children.resize(std::size_t(s.hyper.k));
        s.anchors.push_back(a);
    }
    return s;
}

std::set<std::pair<AnchorId, AnchorId>>
edge_set(const AnchorGraph &g) {
    std::set<std::pair<AnchorId, AnchorId>> out;
    for (const auto &e : g.edges()) out.insert({e.i, e.j});
    return out;
}

} // namespace

TEST(BuildGraph, SameTopVoxelGivesIntraEdge) {
    const Scene s = positioned_scene({Vec3(0.1, 0.1, 0.1), Vec3(0.2, 0.05, 0.15)});
    const auto g  = build_graph(s, 1.0);
    ASSERT_EQ(g.num_edges(), 1u);
    EXPECT_EQ(g.edges()[0].kind, EdgeKind::Intra);
}

TEST(BuildGraph, FaceAdjacentAndTwoApart) {
    auto g = build_graph(positioned_scene({Vec3(0.1, 0.1, 0.1), Vec3(0.35, 0.1, 0.1)}), 1.0);
    ASSERT_EQ(g.num_edges(), 1u);
    EXPECT_EQ(g.edges()[0].kind, EdgeKind::Inter);
    g = build_graph(positioned_scene({Vec3(0.1, 0.1, 0.1), Vec3(0.6, 0.1, 0.1)}), 1.0);
    EXPECT_EQ(g.num_edges(), 0u);
}

TEST(BuildGraph, MatchesAllPairsBinning) {
    Rng rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Vec3> pos(200);
        for (auto &p : pos) p = Vec3(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
        const Scene s = positioned_scene(pos);
        for (double scale : {1.0, 2.0}) {
            const auto g      = build_graph(s, scale);
            const double side = 0.25 * scale;
            std::set<std::pair<AnchorId, AnchorId>> expect;
            std::size_t intra = 0;
            for (std::size_t i = 0; i < pos.size(); ++i) {
                for (std::size_t j = i + 1; j < pos.size(); ++j) {
                    long cheb = 0;
                    for (int a = 0; a < 3; ++a) {
                        cheb = std::max(cheb, std::abs(long(std::floor(pos[i][a] / side)) - long(std::floor(pos[j][a] / side))));
                    }
                    if (cheb <= 1) expect.insert({AnchorId(i), AnchorId(j)});
                    if (cheb == 0) ++intra;
                }
            }
            EXPECT_EQ(edge_set(g), expect);
            EXPECT_EQ(g.num_edges(), expect.size()) << "duplicate edges";
            std::size_t got_intra = 0;
            for (const auto &e : g.edges()) {
                EXPECT_LT(e.i, e.j);
                got_intra += e.kind == EdgeKind::Intra;
            }
            EXPECT_EQ(got_intra, intra);
        }
    }
}

TEST(BuildGraph, ScaleOneEdgesLieWithinScaleTwoReach) {
    Rng rng(2);
    std::vector<Vec3> pos(150);
    for (auto &p : pos) p = Vec3(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
    const Scene s = positioned_scene(pos);
    for (const auto &e : build_graph(s, 1.0).edges()) {
        EXPECT_LE((pos[e.i] - pos[e.j]).lpNorm<Eigen::Infinity>(), 2 * 0.25 * 2.0);
    }
}

TEST(BuildGraph, SymmetricLookup) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Vec3> pos(20);
        for (auto &p : pos) p = Vec3(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
        Scene s = positioned_scene(pos);
        for (auto &a : s.anchors) a.feature = Vec3(uniform(rng, 0, 0.1), uniform(rng, 0, 0.1), uniform(rng, 0, 0.1));
        const auto g = build_graph(s, 1.0);
        for (const auto &e : g.edges()) {
            ASSERT_EQ(g.weight(e.i, e.j), g.weight(e.j, e.i));
            EXPECT_NE(e.i, e.j);
        }
        for (AnchorId i = 0; i < 20; ++i) {
            for (const auto &nb : g.neighbors(i)) {
                bool back = false;
                for (const auto &r : g.neighbors(nb.node)) back |= r.node == i;
                EXPECT_TRUE(back);
            }
        }
    }
}

TEST(BuildGraph, CachedWeightsMatchKernel) {
    Rng rng(4);
    std::vector<Vec3> pos(60);
    for (auto &p : pos) p = Vec3(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
    Scene s = positioned_scene(pos);
    for (auto &a : s.anchors) a.feature = Vec3(uniform(rng, 0, 0.1), uniform(rng, 0, 0.1), uniform(rng, 0, 0.1));
    const auto g = build_graph(s, 1.0);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        const auto &ed = g.edges()[e];
        EXPECT_NEAR(g.weights()[e], edge_weight(s.anchors[ed.i].feature, s.anchors[ed.j].feature, 0.05), 1e-9);
    }
}

TEST(EdgeWeight, Examples) {
    EXPECT_DOUBLE_EQ(edge_weight(Vec3(0.3, 0.2, 0.1), Vec3(0.3, 0.2, 0.1), 0.05), 1.0);
    EXPECT_NEAR(edge_weight(Vec3::Zero(), Vec3(0.05, 0, 0), 0.05), 0.60653, 1e-5);
}

TEST(EdgeWeight, ThresholdIdentity) {
    const double tau    = 0.05;
    const double radius = std::sqrt(2 * tau * tau * std::log(1 / 0.9));
    EXPECT_NEAR(radius, 0.0229522, 1e-6);
    Rng rng(5);
    for (int t = 0; t < 10000; ++t) {
        const double d = uniform(rng, 0, 0.05);
        if (std::abs(d - radius) < 1e-12) continue;
        EXPECT_EQ(edge_weight(Vec3::Zero(), Vec3(d, 0, 0), tau) > 0.9, d < radius);
    }
}

TEST(Dirichlet, ConstantFeatures) {
    Rng rng(6);
    const auto g = random_graph(rng, 10, 0.5);
    FeatureMatrix f(10, 3);
    f.rowwise() = Eigen::RowVector3d(0.2, 0.5, 0.9);
    const auto r = dirichlet_energy(g, f);
    EXPECT_DOUBLE_EQ(r.energy, 0.0);
    EXPECT_TRUE(r.gradient.isZero(0.0));
}

TEST(Dirichlet, OneEdgeExample) {
    AnchorGraph g({Edge{0, 1, EdgeKind::Intra}}, 2, 0.05, 1.0);
    FeatureMatrix f = FeatureMatrix::Zero(2, 3);
    f(1, 0)         = 0.05;
    g.refresh_weights(f);
    EXPECT_NEAR(*g.weight(0, 1), 0.60653, 1e-5);
    EXPECT_NEAR(dirichlet_energy(g, f).energy, 0.0030327, 1e-6);
}

TEST(Dirichlet, MatchesDenseLaplacian) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + std::size_t(trial % 29);
        auto g              = random_graph(rng, n, 0.4);
        const auto f        = clustered_features(rng, n, 3, 0.03);
        g.refresh_weights(f);
        EXPECT_NEAR(dirichlet_energy(g, f).energy, dense_dirichlet(g, f), 1e-9);
        EXPECT_NEAR(dirichlet_energy_live(g, f), dense_dirichlet(g, f), 1e-9);
    }
}

TEST(Dirichlet, GradientMatchesFiniteDifferences) {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        auto g       = random_graph(rng, 12, 0.5);
        const auto f = clustered_features(rng, 12, 2, 0.04);
        g.refresh_weights(f);
        const auto r = dirichlet_energy(g, f);
        auto fn      = [&](const Eigen::VectorXd &x) { return dirichlet_energy(g, unflatten(x)).energy; };
        EXPECT_LT(relative_error(flatten(r.gradient), central_difference(fn, flatten(f))), 1e-4);
    }
}

TEST(Propagate, ConstantIsFixedPoint) {
    Rng rng(9);
    const auto g = random_graph(rng, 8, 0.6);
    FeatureMatrix f(8, 3);
    f.rowwise()  = Eigen::RowVector3d(0.4, 0.4, 0.4);
    const auto r = propagate(g, f, 100, 0.1);
    EXPECT_EQ(r.accepted_steps, 0);
    EXPECT_EQ(r.features, f);
}

TEST(Propagate, NearbyFeaturesConverge) {
    AnchorGraph g({Edge{0, 1, EdgeKind::Inter}}, 2, 0.05, 1.0);
    FeatureMatrix f = FeatureMatrix::Zero(2, 3);
    f(1, 0)         = 0.02;
    const auto r    = propagate(g, f, 200, 0.1);
    EXPECT_LT(std::abs(r.features(1, 0) - r.features(0, 0)), 0.02 * 0.5);
    for (std::size_t i = 1; i < r.energies.size(); ++i) EXPECT_LE(r.energies[i], r.energies[i - 1]);
}

TEST(Propagate, DistantFeaturesPreserved) {
    AnchorGraph g({Edge{0, 1, EdgeKind::Inter}}, 2, 0.05, 1.0);
    FeatureMatrix f = FeatureMatrix::Zero(2, 3);
    f(1, 0)         = 1.0;
    const auto r    = propagate(g, f, 100, 0.1);
    EXPECT_LT((r.features - f).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Propagate, AcceptedStepsNeverIncreaseEnergy) {
    Rng rng(10);
    int steps = 0;
    for (int trial = 0; trial < 5000 && steps < 1000; ++trial) {
        auto g       = random_graph(rng, 20, 0.3);
        const auto f = clustered_features(rng, 20, 3, 0.03);
        const auto r = propagate(g, f, 200, uniform(rng, 0.01, 1.0));
        for (std::size_t i = 1; i < r.energies.size(); ++i) ASSERT_LE(r.energies[i], r.energies[i - 1]);
        steps += r.accepted_steps;
    }
    EXPECT_GE(steps, 1000);
}

TEST(Propagate, RejectsNonPositiveStep) {
    AnchorGraph g({}, 1, 0.05, 1.0);
    EXPECT_THROW(propagate(g, FeatureMatrix::Zero(1, 3), 1, 0.0), Error);
}

TEST(Graph, DumpFormat) {
    AnchorGraph g({Edge{0, 1, EdgeKind::Intra}, Edge{1, 2, EdgeKind::Inter}}, 3, 0.05, 1.0);
    g.refresh_weights(FeatureMatrix::Zero(3, 3));
    std::ostringstream out;
    write_graph_dump(out, g);
    EXPECT_EQ(out.str(), "0 1 intra 1\n1 2 inter 1\n");
}
