// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/pipeline.hpp>
#include <agsplat/synthetic.hpp>

#include <gtest/gtest.h>

using namespace agsplat;

namespace {

SyntheticSpec
small_spec(int instances, std::uint64_t seed) {
    Hyper h = benchmark_config(seed).hyper;
    auto s  = separable_preset(seed, h, instances);
    s.cameras.width = s.cameras.height = 48;
    s.cameras.count = 4;
    return s;
}

} // namespace

TEST(Synthetic, SingleSphereOneMaskPerView) {
    SyntheticSpec spec;
    spec.instances.push_back(InstanceSpec{});
    spec.cameras.width = spec.cameras.height = 48;
    spec.cameras.count = 4;
    const auto data    = generate_scene(spec, Hyper{});
    ASSERT_EQ(data.masks.size(), 4u);
    for (const auto &m : data.masks) {
        ASSERT_EQ(m.size(), 1u);
        EXPECT_GT(count_set(m[0]), 0u);
    }
}

TEST(Synthetic, Deterministic) {
    const auto spec = small_spec(3, 5);
    const Hyper h   = benchmark_config(5).hyper;
    const auto a    = generate_scene(spec, h);
    const auto b    = generate_scene(spec, h);
    EXPECT_EQ(a.points, b.points);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.class_embeddings, b.class_embeddings);
    for (std::size_t v = 0; v < a.masks.size(); ++v) EXPECT_EQ(a.masks[v].masks(), b.masks[v].masks());
}

TEST(Synthetic, ThreeInstancePresetMaskCounts) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto spec = small_spec(3, seed);
        const auto data = generate_scene(spec, benchmark_config(seed).hyper);
        for (std::size_t v = 0; v < data.masks.size(); ++v) {
            EXPECT_LE(data.masks[v].size(), 3u);
            std::size_t visible = 0;
            for (std::size_t i = 0; i < 3; ++i) {
                const bool seen = count_set(data.instance_masks[v][i]) > 0;
                visible += seen;
                const auto &occ = data.occluded_instances[v];
                EXPECT_EQ(!seen, std::find(occ.begin(), occ.end(), int(i)) != occ.end());
            }
            EXPECT_EQ(data.masks[v].size(), visible);
        }
    }
}

TEST(Synthetic, ZeroInstancesRejected) {
    SyntheticSpec spec;
    try {
        generate_scene(spec, Hyper{});
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::SpecViolation);
    }
}

TEST(Synthetic, OverlappingSeparableInstancesRejected) {
    auto spec = small_spec(2, 0);
    spec.instances[1].center = spec.instances[0].center + Vec3(0.3, 0, 0);
    try {
        generate_scene(spec, benchmark_config(0).hyper);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::SpecViolation);
    }
}

TEST(Synthetic, PresetSeparatedByTwoTopVoxels) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Hyper h   = benchmark_config(seed).hyper;
        const auto spec = separable_preset(seed, h);
        const double l0 = predicted_top_voxel_size(spec, h);
        for (std::size_t i = 0; i < spec.instances.size(); ++i) {
            for (std::size_t j = i + 1; j < spec.instances.size(); ++j) {
                const auto &a = spec.instances[i], &b = spec.instances[j];
                const Vec3 gap = ((a.center - b.center).cwiseAbs() - a.half_extent - b.half_extent);
                EXPECT_GE(gap.maxCoeff(), 2 * l0);
            }
        }
    }
}

TEST(Synthetic, ClassEmbeddingsOrthonormal) {
    const auto spec = small_spec(3, 1);
    const auto data = generate_scene(spec, benchmark_config(1).hyper);
    const Eigen::MatrixXd gram = data.class_embeddings * data.class_embeddings.transpose();
    EXPECT_NEAR((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).norm(), 0, 1e-9);
    for (std::size_t v = 0; v < data.embeddings.size(); ++v) {
        for (std::size_t j = 0; j < data.embeddings[v].size(); ++j) {
            const int inst = data.mask_instance[v][j];
            const int cls  = spec.instances[std::size_t(inst)].class_id;
            EXPECT_EQ(data.embeddings[v][j], data.class_embeddings.row(cls).transpose());
        }
    }
}

TEST(Synthetic, OversegmentationSplitsMasks) {
    auto spec             = small_spec(3, 2);
    spec.oversegment_prob = 1.0;
    const auto data       = generate_scene(spec, benchmark_config(2).hyper);
    std::size_t masks = 0, visible = 0;
    for (std::size_t v = 0; v < data.masks.size(); ++v) {
        masks += data.masks[v].size();
        for (const auto &m : data.instance_masks[v]) visible += count_set(m) > 0;
    }
    EXPECT_GT(masks, visible);
}
