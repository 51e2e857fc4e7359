// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "support/oracles.hpp"

#include <agsplat/error.hpp>
#include <agsplat/metrics.hpp>
#include <agsplat/query.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace agsplat;
using namespace agsplat::testing;

namespace {

const Aabb kUnit{Vec3::Zero(), Vec3::Ones()};

/// Top-level anchors at the given voxels of a 4^3 unit grid.
Scene
top_level_scene(const std::vector<VoxelCoord> &coords, const std::vector<Vec3> &features = {}, int res = 4) {
    Scene s;
    s.grid = MultiResGrid(kUnit, res, 2);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        Anchor a = make_anchor(s.grid, 0, coords[i], s.hyper, 1);
        if (i < features.size()) a.feature = features[i];
        for (auto &c : a.children) c.opacity = 0.9;
        s.grid.insert(0, coords[i], AnchorId(s.anchors.size()));
        s.anchors.push_back(a);
    }
    return s;
}

Camera
overview_camera() {
    return Camera::look_at(Vec3(0.5, 0.5, -2.5), Vec3(0.5, 0.5, 0.5), Vec3(0, -1, 0), 0.8, 48, 48);
}

std::vector<AnchorId>
dfs_grow(const AnchorGraph &g, std::vector<AnchorId> seeds, double threshold) {
    std::vector<bool> in(g.num_nodes(), false);
    std::vector<AnchorId> stack;
    for (auto s : seeds) {
        if (!in[s]) {
            in[s] = true;
            stack.push_back(s);
        }
    }
    while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (const auto &n : g.neighbors(u)) {
            if (!in[n.node] && g.weights()[n.edge] > threshold) {
                in[n.node] = true;
                stack.push_back(n.node);
            }
        }
    }
    std::vector<AnchorId> out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i]) out.push_back(AnchorId(i));
    }
    return out;
}

} // namespace

TEST(Unproject, PrincipalPointIdentityExtrinsics) {
    Camera cam;
    ImageD depth(64, 64, 1, 1.0);
    const Vec3 p = unproject_click(depth, cam, cam.cx, cam.cy);
    EXPECT_NEAR((p - Vec3(0, 0, 1)).norm(), 0, 1e-12);
}

TEST(Unproject, RoundTripWithinHalfPixel) {
    Rng rng(1);
    const Scene s     = random_splat_scene(rng, 40, 5);
    const Camera cam  = test_camera();
    const auto depth  = render(s, cam, RenderMode::Depth).depth;
    int checked       = 0;
    for (int y = 0; y < 64; y += 5) {
        for (int x = 0; x < 64; x += 5) {
            if (depth(x, y) <= 0) continue;
            const Vec3 uvz = cam.project(unproject_click(depth, cam, x, y));
            EXPECT_LT(std::abs(uvz.x() - x), 0.5);
            EXPECT_LT(std::abs(uvz.y() - y), 0.5);
            ++checked;
        }
    }
    EXPECT_GT(checked, 0);
}

TEST(Unproject, BackgroundRaisesNoGeometry) {
    const Scene s = top_level_scene({VoxelCoord(0, 0, 0)});
    try {
        unproject_click(s, overview_camera(), 47, 0);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::NoGeometryAtPixel);
    }
}

TEST(ClickQuery, IsolatedAnchor) {
    const Scene s  = top_level_scene({VoxelCoord(0, 0, 0), VoxelCoord(3, 3, 3)});
    const auto sel = click_query(s, s.anchors[0].position);
    EXPECT_EQ(sel.seeds, std::vector<AnchorId>{0});
    EXPECT_EQ(sel.grown, std::vector<AnchorId>{0});
}

TEST(ClickQuery, AdjacentIdenticalFeaturesBothSelected) {
    const Vec3 f(0.3, 0.3, 0.3);
    const Scene s  = top_level_scene({VoxelCoord(1, 1, 1), VoxelCoord(2, 1, 1)}, {f, f});
    const auto sel = click_query(s, s.anchors[1].position + Vec3(0.01, 0, 0));
    EXPECT_EQ(sel.seeds, std::vector<AnchorId>{1});
    EXPECT_EQ(sel.grown, (std::vector<AnchorId>{0, 1}));
}

TEST(ClickQuery, TiesBrokenByLowestId) {
    const Scene s = top_level_scene({VoxelCoord(1, 1, 1), VoxelCoord(2, 1, 1)});
    EXPECT_EQ(nearest_anchor(s, Vec3(0.5, 0.375, 0.375)), 0u);
}

TEST(ClickQuery, AnchorPositionSeedsThatAnchor) {
    Rng rng(2);
    const Scene s = random_splat_scene(rng, 30, 2);
    for (AnchorId a = 0; a < 30; ++a) EXPECT_EQ(click_query(s, s.anchors[a].position).seeds, std::vector<AnchorId>{a});
}

TEST(GrowRegion, BfsEqualsDfsAndIsClosed) {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        auto g       = random_graph(rng, 40, 0.1);
        const auto f = clustered_features(rng, 40, 3, 0.01);
        g.refresh_weights(f);
        const std::vector<AnchorId> seeds{AnchorId(trial % 40)};
        const auto grown = grow_region(g, seeds, 0.9);
        EXPECT_EQ(grown, dfs_grow(g, seeds, 0.9));
        std::vector<bool> in(40, false);
        for (auto a : grown) in[a] = true;
        for (std::size_t e = 0; e < g.num_edges(); ++e) {
            const auto &ed = g.edges()[e];
            if (g.weights()[e] > 0.9 && (in[ed.i] || in[ed.j])) EXPECT_TRUE(in[ed.i] && in[ed.j]);
        }
        const auto looser = grow_region(g, seeds, 0.5);
        EXPECT_TRUE(std::includes(looser.begin(), looser.end(), grown.begin(), grown.end()));
    }
}

TEST(TextQuery, SingleClusterSelected) {
    const Scene s = top_level_scene({VoxelCoord(0, 0, 0), VoxelCoord(0, 1, 0)});
    InstanceCluster c;
    c.anchors          = {0, 1};
    c.language_feature = Eigen::VectorXd::Unit(4, 2);
    const std::vector<InstanceCluster> clusters{c};
    const auto sel = text_query(s, clusters, Eigen::VectorXd::Unit(4, 0));
    EXPECT_EQ(sel.seeds, (std::vector<AnchorId>{0, 1}));
}

TEST(TextQuery, MarginArithmetic) {
    const Scene s = top_level_scene({VoxelCoord(0, 0, 0), VoxelCoord(3, 0, 0), VoxelCoord(0, 3, 3)});
    std::vector<InstanceCluster> clusters(3);
    const double sims[] = {0.95, 0.90, 0.70};
    for (int i = 0; i < 3; ++i) {
        clusters[std::size_t(i)].anchors = {AnchorId(i)};
        Eigen::VectorXd l(3);
        l << sims[i], std::sqrt(1 - sims[i] * sims[i]), 0.0;
        clusters[std::size_t(i)].language_feature = l;
    }
    const AnchorGraph empty({}, 3, 0.05, 2.0);
    const auto sel = text_query(s, empty, clusters, Eigen::VectorXd::Unit(3, 0));
    EXPECT_EQ(sel.seeds, (std::vector<AnchorId>{0, 1}));
}

TEST(TextQuery, MissingLanguageFeatures) {
    const Scene s = top_level_scene({VoxelCoord(0, 0, 0)});
    std::vector<InstanceCluster> clusters(1);
    clusters[0].anchors = {0};
    try {
        text_query(s, clusters, Eigen::VectorXd::Unit(3, 0));
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::LanguageFeaturesMissing);
    }
}

TEST(GlobalSimilarity, IgnoresConnectivity) {
    const Vec3 f(0.5, 0.5, 0.5);
    const Scene s = top_level_scene({VoxelCoord(0, 0, 0), VoxelCoord(7, 7, 7), VoxelCoord(1, 0, 0)},
                                    {f, f, Vec3(0.9, 0.1, 0.1)}, 8);
    const std::vector<AnchorId> seeds{0};
    EXPECT_EQ(global_similarity_selection(s, seeds, 0.9), (std::vector<AnchorId>{0, 1}));
    EXPECT_EQ(click_query(s, s.anchors[0].position).grown, std::vector<AnchorId>{0});
}

TEST(Remove, IsolatedAnchor) {
    const Scene s = top_level_scene({VoxelCoord(0, 0, 0), VoxelCoord(3, 3, 3)});
    const std::vector<Camera> cams{overview_camera()};
    const std::vector<AnchorId> sel{0};
    const auto r = remove_object(s, sel, cams);
    EXPECT_EQ(r.old_to_new[0], kRemovedAnchor);
    EXPECT_EQ(r.old_to_new[1], 0u);
    EXPECT_TRUE(r.neighbor_anchors.empty());
    ASSERT_EQ(r.replacement_anchors.size(), 1u);
    EXPECT_EQ(r.scene.anchors.size(), 1u + r.replacement_anchors.size());
    RenderRequest req;
    req.mode             = RenderMode::Instance;
    req.instance_anchors = r.replacement_anchors;
    const Camera &cam    = cams[0];
    EXPECT_EQ(r.artifact_masks[0], dilate(render(r.scene, cam, req).instance, boundary_band_width(cam.width, cam.height)));
    r.scene.check_invariants();
}

TEST(Remove, ReplacementCountHonoured) {
    std::vector<VoxelCoord> coords;
    for (int x = 0; x < 3; ++x) {
        for (int y = 0; y < 3; ++y) coords.emplace_back(x, y, 0);
    }
    coords.emplace_back(3, 3, 3);
    const Scene s = top_level_scene(coords);
    std::vector<AnchorId> sel;
    for (AnchorId a = 0; a < 9; ++a) sel.push_back(a);
    const std::vector<Camera> cams{overview_camera()};
    EXPECT_EQ(remove_object(s, sel, cams, 8).replacement_anchors.size(), 8u);
    EXPECT_EQ(remove_object(s, sel, cams).replacement_anchors.size(), 9u);
    const auto r = remove_object(s, sel, cams, 2);
    // The two replacements sit at the freed voxels nearest the removed centroid.
    EXPECT_NEAR((r.scene.anchors[r.replacement_anchors[0]].position - s.anchors[4].position).norm(), 0, 1e-12);
    r.scene.check_invariants();
}

TEST(Remove, NeighborsIncludedInArtifactRegion) {
    const Scene s = top_level_scene({VoxelCoord(1, 1, 1), VoxelCoord(2, 1, 1), VoxelCoord(3, 3, 3)});
    const std::vector<Camera> cams{overview_camera()};
    const std::vector<AnchorId> sel{0};
    const auto r = remove_object(s, sel, cams);
    EXPECT_EQ(r.neighbor_anchors, std::vector<AnchorId>{0});
}

TEST(Remove, WholeSceneRejected) {
    const Scene s = top_level_scene({VoxelCoord(0, 0, 0), VoxelCoord(3, 3, 3)});
    const std::vector<AnchorId> sel{0, 1};
    try {
        remove_object(s, sel, {});
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::WholeSceneRemoval);
    }
    EXPECT_THROW(remove_object(s, std::vector<AnchorId>{}, {}), Error);
}

TEST(Export, OpacityFilter) {
    Scene s = top_level_scene({VoxelCoord(0, 0, 0), VoxelCoord(3, 3, 3)});
    for (auto &c : s.anchors[0].children) c.opacity = 0.01;
    s.anchors[0].children[2].opacity = 0.5;
    const std::vector<AnchorId> sel{0};
    EXPECT_TRUE(export_selection(s, sel, 1.0).empty());
    const auto particles = export_selection(s, sel, 0.02);
    EXPECT_EQ(std::count_if(particles.begin(), particles.end(), [](const Particle &p) { return p.object; }), 1);
    EXPECT_EQ(particles.size(), 1u + 5u);
}

TEST(Export, MatchesBruteForceCount) {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Scene s      = random_splat_scene(rng, 20, 4);
        const double alpha = uniform(rng, 0, 1);
        std::vector<AnchorId> sel;
        for (AnchorId a = 0; a < 20; a += 3) sel.push_back(a);
        std::size_t obj = 0, rest = 0;
        for (AnchorId a = 0; a < 20; ++a) {
            for (const auto &c : s.anchors[a].children) {
                if (c.opacity > alpha) (a % 3 == 0 ? obj : rest) += 1;
            }
        }
        const auto p = export_selection(s, sel, alpha);
        EXPECT_EQ(std::size_t(std::count_if(p.begin(), p.end(), [](const Particle &x) { return x.object; })), obj);
        EXPECT_EQ(p.size(), obj + rest);
    }
}

TEST(Export, ParticleFormatParses) {
    Rng rng(5);
    const Scene s = random_splat_scene(rng, 5, 2);
    const std::vector<AnchorId> sel{1};
    std::ostringstream out;
    write_particles(out, export_selection(s, sel, 0.0));
    std::istringstream in(out.str());
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double v;
        std::string bar, tag;
        for (int i = 0; i < 3; ++i) ASSERT_TRUE(ls >> v);
        ASSERT_TRUE(ls >> bar && bar == "|");
        for (int i = 0; i < 6; ++i) ASSERT_TRUE(ls >> v);
        ASSERT_TRUE(ls >> bar && bar == "|");
        ASSERT_TRUE(ls >> v);
        ASSERT_TRUE(ls >> bar && bar == "|");
        for (int i = 0; i < 3; ++i) ASSERT_TRUE(ls >> v);
        ASSERT_TRUE(ls >> bar && bar == "|");
        ASSERT_TRUE(ls >> tag);
        EXPECT_TRUE(tag == "object" || tag == "boundary");
        ++rows;
    }
    EXPECT_EQ(rows, 10);
}
