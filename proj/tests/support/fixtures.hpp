// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/camera.hpp>
#include <agsplat/scene.hpp>
#include <agsplat/service.hpp>
#include <agsplat/synthetic.hpp>

#include <cstdint>
#include <vector>

namespace agsplat::testing {

/// Synthetic three-instance scene whose anchors carry their instance's
/// feature and class embedding without any training.
struct LabeledScene {
    SyntheticSpec spec;
    SyntheticScene data;
    Scene scene;
    std::vector<int> labels;
};

Vec3 instance_feature(int instance);
LabeledScene labeled_scene(std::uint64_t seed, int image_size = 64);

struct ConcurrencyReport {
    std::size_t requests = 0;
    std::size_t reads    = 0;
    std::size_t mutations = 0;
    std::size_t torn     = 0;   // responses differing from the sequential answer at their revision
    std::size_t failures = 0;   // transport errors or unexpected statuses
    std::uint64_t final_revision = 0;
};

/// Serves `fixture` over HTTP on an ephemeral port and issues `total`
/// requests from `threads` clients: clicks, renders and info reads mixed
/// with removals applied by one client. Every read response is compared
/// with the answer a sequential replay gives at the revision it reports.
ConcurrencyReport run_concurrent_service_check(const LabeledScene &fixture, std::size_t total, int threads);

} // namespace agsplat::testing
