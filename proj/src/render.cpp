// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "parallel.hpp"

#include <agsplat/error.hpp>
#include <agsplat/render.hpp>

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace agsplat {

namespace {

constexpr int kTileSize = 16;

struct Prepared {
    std::uint32_t id;
    Eigen::Vector2d mean;
    double conic_xx, conic_xy, conic_yy;
    double depth;
    double opacity;
    int x0, x1, y0, y1; // inclusive pixel range
};

struct PixelRange {
    int x0, x1, y0, y1;
};

PixelRange
footprint(const Eigen::Vector2d &mean, const Eigen::Matrix2d &cov) {
    const double rx = kFootprintSigma * std::sqrt(cov(0, 0));
    const double ry = kFootprintSigma * std::sqrt(cov(1, 1));
    return {int(std::ceil(mean.x() - rx)),
            int(std::floor(mean.x() + rx)),
            int(std::ceil(mean.y() - ry)),
            int(std::floor(mean.y() + ry))};
}

} // namespace

std::optional<ProjectedGaussian>
project_gaussian(const Camera &camera, const Vec3 &mean, const Mat3 &cov) {
    const Vec3 c = camera.to_camera(mean);
    if (c.z() <= kNearPlane) return std::nullopt;
    const double inv_z = 1.0 / c.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << camera.fx * inv_z, 0.0, -camera.fx * c.x() * inv_z * inv_z,
           0.0, camera.fy * inv_z, -camera.fy * c.y() * inv_z * inv_z;
    const Eigen::Matrix<double, 2, 3> t = jac * camera.rotation;
    ProjectedGaussian out;
    out.cov = t * cov * t.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    out.cov += kCov2dRegularizer * Eigen::Matrix2d::Identity();
    out.mean  = {camera.fx * c.x() * inv_z + camera.cx, camera.fy * c.y() * inv_z + camera.cy};
    out.depth = c.z();
    const auto r = footprint(out.mean, out.cov);
    if (r.x1 < 0 || r.y1 < 0 || r.x0 > camera.width - 1 || r.y0 > camera.height - 1 || r.x0 > r.x1 ||
        r.y0 > r.y1) {
        return std::nullopt;
    }
    return out;
}

SplatCloud
build_splats(const Scene &scene) {
    SplatCloud cloud;
    const std::size_t n = scene.num_children();
    cloud.means.reserve(n);
    cloud.covariances.reserve(n);
    cloud.opacities.reserve(n);
    cloud.colors.reserve(n);
    cloud.anchor_of.reserve(n);
    for (std::size_t a = 0; a < scene.anchors.size(); ++a) {
        const auto &anchor = scene.anchors[a];
        for (int c = 0; c < scene.hyper.k; ++c) {
            const auto params = gaussian_params(anchor, c);
            const auto &g     = anchor.children[std::size_t(c)];
            cloud.means.push_back(params.mean);
            cloud.covariances.push_back(covariance_from(g.rotation, params.scale));
            cloud.opacities.push_back(std::clamp(g.opacity, 0.0, 1.0));
            cloud.colors.push_back(g.color);
            cloud.anchor_of.push_back(static_cast<AnchorId>(a));
        }
    }
    return cloud;
}

ImageD
blend_values(const SplatCloud &cloud,
             const Camera &camera,
             const Eigen::Ref<const Eigen::MatrixXd> &values,
             ImageD *alpha_out,
             ImageD *depth_out,
             BlendRecords *records_out) {
    camera.validate();
    if (std::size_t(values.rows()) != cloud.size()) {
        throw Error(ErrorCode::InvalidInput, "value rows must match the Gaussian count");
    }
    const int width    = camera.width;
    const int height   = camera.height;
    const int channels = int(values.cols());

    std::vector<Prepared> prepared;
    prepared.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto proj = project_gaussian(camera, cloud.means[i], cloud.covariances[i]);
        if (!proj) continue;
        const Eigen::Matrix2d conic = proj->cov.inverse();
        const auto r                = footprint(proj->mean, proj->cov);
        prepared.push_back({std::uint32_t(i),
                            proj->mean,
                            conic(0, 0),
                            0.5 * (conic(0, 1) + conic(1, 0)),
                            conic(1, 1),
                            proj->depth,
                            cloud.opacities[i],
                            std::max(r.x0, 0),
                            std::min(r.x1, width - 1),
                            std::max(r.y0, 0),
                            std::min(r.y1, height - 1)});
    }
    std::sort(prepared.begin(), prepared.end(), [](const Prepared &a, const Prepared &b) {
        return a.depth < b.depth || (a.depth == b.depth && a.id < b.id);
    });

    const int tiles_x = (width + kTileSize - 1) / kTileSize;
    const int tiles_y = (height + kTileSize - 1) / kTileSize;
    std::vector<std::vector<std::uint32_t>> tile_lists(std::size_t(tiles_x * tiles_y));
    for (std::uint32_t p = 0; p < prepared.size(); ++p) {
        const auto &g = prepared[p];
        for (int ty = g.y0 / kTileSize; ty <= g.y1 / kTileSize; ++ty) {
            for (int tx = g.x0 / kTileSize; tx <= g.x1 / kTileSize; ++tx) {
                tile_lists[std::size_t(ty * tiles_x + tx)].push_back(p);
            }
        }
    }

    ImageD out(width, height, channels);
    ImageD alpha(width, height, 1);
    ImageD depth(width, height, 1);
    const bool want_records = records_out != nullptr;
    std::vector<std::vector<BlendEntry>> pixel_entries(want_records ? out.pixels() : 0);

    detail::parallel_for(tile_lists.size(), [&](std::size_t tile) {
        const int tx = int(tile) % tiles_x;
        const int ty = int(tile) / tiles_x;
        const auto &list = tile_lists[tile];
        for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
            for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x) {
                double transmittance = 1.0;
                double weight_sum    = 0.0;
                double depth_sum     = 0.0;
                std::vector<BlendEntry> *entries =
                    want_records ? &pixel_entries[std::size_t(y) * std::size_t(width) + std::size_t(x)] : nullptr;
                for (auto p : list) {
                    const auto &g = prepared[p];
                    if (x < g.x0 || x > g.x1 || y < g.y0 || y > g.y1) continue;
                    const double dx = x - g.mean.x();
                    const double dy = y - g.mean.y();
                    const double d2 = g.conic_xx * dx * dx + 2.0 * g.conic_xy * dx * dy + g.conic_yy * dy * dy;
                    if (d2 > kFootprintSigma * kFootprintSigma) continue;
                    const double t = g.opacity * std::exp(-0.5 * d2);
                    const double w = t * transmittance;
                    for (int c = 0; c < channels; ++c) out(x, y, c) += w * values(g.id, c);
                    weight_sum += w;
                    depth_sum += w * g.depth;
                    if (entries) entries->push_back({g.id, t, w, g.depth});
                    transmittance *= 1.0 - t;
                    if (transmittance < kMinTransmittance) break;
                }
                alpha(x, y)  = weight_sum;
                depth(x, y)  = weight_sum > 0 ? depth_sum / weight_sum : 0.0;
            }
        }
    });

    if (alpha_out) *alpha_out = std::move(alpha);
    if (depth_out) *depth_out = std::move(depth);
    if (records_out) {
        std::vector<std::uint32_t> offsets(pixel_entries.size() + 1, 0);
        for (std::size_t p = 0; p < pixel_entries.size(); ++p) {
            offsets[p + 1] = offsets[p] + std::uint32_t(pixel_entries[p].size());
        }
        std::vector<BlendEntry> flat;
        flat.reserve(offsets.back());
        for (auto &e : pixel_entries) flat.insert(flat.end(), e.begin(), e.end());
        *records_out = BlendRecords(width, height, std::move(offsets), std::move(flat));
    }
    return out;
}

RenderTargets
render(const Scene &scene, const Camera &camera, const RenderRequest &request) {
    if (scene.anchors.empty()) throw Error(ErrorCode::InvalidInput, "cannot render an empty scene");
    const SplatCloud cloud = build_splats(scene);
    const auto n           = Eigen::Index(cloud.size());

    Eigen::MatrixXd values;
    switch (request.mode) {
    case RenderMode::Color:
        values.resize(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) values.row(i) = cloud.colors[std::size_t(i)].transpose();
        break;
    case RenderMode::Feature:
        values.resize(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            values.row(i) = scene.anchors[cloud.anchor_of[std::size_t(i)]].feature.transpose();
        }
        break;
    case RenderMode::Instance: {
        values = Eigen::MatrixXd::Zero(n, 1);
        std::vector<bool> member(scene.anchors.size(), false);
        for (auto id : request.instance_anchors) {
            if (id < member.size()) member[id] = true;
        }
        for (Eigen::Index i = 0; i < n; ++i) values(i, 0) = member[cloud.anchor_of[std::size_t(i)]] ? 1.0 : 0.0;
        break;
    }
    case RenderMode::Depth: values.resize(n, 0); break;
    }

    RenderTargets targets;
    BlendRecords records;
    ImageD depth;
    ImageD blended = blend_values(cloud,
                                  camera,
                                  values,
                                  &targets.alpha,
                                  &depth,
                                  request.want_records ? &records : nullptr);
    switch (request.mode) {
    case RenderMode::Color: targets.color = std::move(blended); break;
    case RenderMode::Feature: targets.feature = std::move(blended); break;
    case RenderMode::Instance:
        targets.instance       = binarize(blended);
        targets.instance_value = std::move(blended);
        break;
    case RenderMode::Depth: targets.depth = std::move(depth); break;
    }
    if (request.want_records) targets.records = std::move(records);
    return targets;
}

RenderTargets
render(const Scene &scene, const Camera &camera, RenderMode mode, bool want_records) {
    RenderRequest request;
    request.mode         = mode;
    request.want_records = want_records;
    return render(scene, camera, request);
}

ImageD
instance_value_from_records(const BlendRecords &records,
                            std::span<const AnchorId> anchors,
                            std::size_t num_anchors,
                            int k) {
    std::vector<bool> member(num_anchors, false);
    for (auto id : anchors) {
        if (id < num_anchors) member[id] = true;
    }
    ImageD value(records.width(), records.height(), 1);
    for (std::size_t p = 0; p < records.pixels(); ++p) {
        double v = 0.0;
        for (const auto &e : records.pixel(p)) {
            if (member[e.gaussian / std::uint32_t(k)]) v += e.weight;
        }
        value.data()[p] = v;
    }
    return value;
}

Mask
binarize(const ImageD &value, double threshold) {
    Mask mask(value.width(), value.height(), 1);
    for (std::size_t p = 0; p < value.pixels(); ++p) {
        mask.data()[p] = value.data()[p * std::size_t(value.channels())] >= threshold ? 1 : 0;
    }
    return mask;
}

void
scale_features(Scene &scene, double factor) {
    for (auto &a : scene.anchors) a.feature *= factor;
}

} // namespace agsplat
