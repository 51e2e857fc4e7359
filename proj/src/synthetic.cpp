// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/render.hpp>
#include <agsplat/synthetic.hpp>

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

namespace agsplat {

namespace {

double
surface_area(const InstanceSpec &inst) {
    const Vec3 &h = inst.half_extent;
    switch (inst.shape) {
    case Primitive::Box: return 8.0 * (h.x() * h.y() + h.y() * h.z() + h.x() * h.z());
    case Primitive::Sphere: return 4.0 * std::numbers::pi * h.x() * h.x();
    case Primitive::Ellipsoid: {
        // Knud Thomsen approximation.
        const double p = 1.6075;
        const double a = std::pow(h.x(), p), b = std::pow(h.y(), p), c = std::pow(h.z(), p);
        return 4.0 * std::numbers::pi * std::pow((a * b + a * c + b * c) / 3.0, 1.0 / p);
    }
    }
    return 0.0;
}

Vec3
instance_half_box(const InstanceSpec &inst) {
    return inst.shape == Primitive::Sphere ? Vec3::Constant(inst.half_extent.x()) : inst.half_extent;
}

Vec3
sample_surface(const InstanceSpec &inst, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const Vec3 &h = inst.half_extent;
    switch (inst.shape) {
    case Primitive::Sphere: {
        Vec3 d(normal(rng), normal(rng), normal(rng));
        while (d.norm() < 1e-12) d = Vec3(normal(rng), normal(rng), normal(rng));
        return inst.center + h.x() * d.normalized();
    }
    case Primitive::Ellipsoid: {
        Vec3 d(normal(rng), normal(rng), normal(rng));
        while (d.norm() < 1e-12) d = Vec3(normal(rng), normal(rng), normal(rng));
        return inst.center + h.cwiseProduct(d.normalized());
    }
    case Primitive::Box: {
        const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
        std::discrete_distribution<int> face({areas[0], areas[0], areas[1], areas[1], areas[2], areas[2]});
        const int f    = face(rng);
        const int axis = f / 2;
        Vec3 p(unit(rng) * h.x(), unit(rng) * h.y(), unit(rng) * h.z());
        p[axis] = (f % 2 == 0 ? -1.0 : 1.0) * h[axis];
        return inst.center + p;
    }
    }
    return inst.center;
}

double
max_axis_gap(const InstanceSpec &a, const InstanceSpec &b) {
    const Vec3 ha = instance_half_box(a), hb = instance_half_box(b);
    double gap = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
        const double g = std::abs(a.center[i] - b.center[i]) - ha[i] - hb[i];
        gap            = std::max(gap, g);
    }
    return gap;
}

Aabb
instance_union_box(const SyntheticSpec &spec) {
    Aabb box{Vec3::Constant(std::numeric_limits<double>::infinity()),
             Vec3::Constant(-std::numeric_limits<double>::infinity())};
    for (const auto &inst : spec.instances) {
        const Vec3 h = instance_half_box(inst);
        box.min      = box.min.cwiseMin(inst.center - h);
        box.max      = box.max.cwiseMax(inst.center + h);
    }
    return box;
}

Mask
threshold_channel(const ImageD &values, int channel) {
    Mask m(values.width(), values.height());
    for (int y = 0; y < values.height(); ++y) {
        for (int x = 0; x < values.width(); ++x) m(x, y) = values(x, y, channel) >= 0.5 ? 1 : 0;
    }
    return m;
}

std::pair<Mask, Mask>
split_mask(const Mask &mask) {
    std::vector<int> xs;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask(x, y)) xs.push_back(x);
        }
    }
    std::nth_element(xs.begin(), xs.begin() + xs.size() / 2, xs.end());
    const int cut = xs[xs.size() / 2];
    Mask left(mask.width(), mask.height()), right(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask(x, y)) continue;
            (x < cut ? left : right)(x, y) = 1;
        }
    }
    return {left, right};
}

double
logit(double p) {
    return std::log(p / (1.0 - p));
}

} // namespace

std::vector<TrainingView>
SyntheticScene::training_views() const {
    std::vector<TrainingView> views;
    views.reserve(cameras.size());
    for (std::size_t v = 0; v < cameras.size(); ++v) views.push_back({cameras[v], masks[v]});
    return views;
}

double
predicted_top_voxel_size(const SyntheticSpec &spec, const Hyper &hyper) {
    if (spec.instances.empty()) throw Error(ErrorCode::SpecViolation, "synthetic spec has no instances");
    const Aabb box = instance_union_box(spec);
    return 1.1 * box.extent().maxCoeff() / double(hyper.top_resolution);
}

SyntheticSpec
separable_preset(std::uint64_t seed, const Hyper &hyper, int instances) {
    if (instances < 1) throw Error(ErrorCode::SpecViolation, "preset needs at least one instance");
    std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);

    const Vec3 palette[] = {{0.85, 0.25, 0.2}, {0.2, 0.6, 0.85}, {0.3, 0.8, 0.3},
                            {0.9, 0.8, 0.2},   {0.7, 0.3, 0.8},  {0.9, 0.5, 0.1}};
    const Primitive shapes[] = {Primitive::Sphere, Primitive::Box, Primitive::Ellipsoid};

    SyntheticSpec spec;
    spec.seed        = seed;
    spec.num_classes = instances;
    const double phase = 0.3 * jitter(rng);
    for (int i = 0; i < instances; ++i) {
        InstanceSpec inst;
        inst.shape    = shapes[(i + seed) % 3];
        inst.class_id = i;
        inst.color    = palette[i % 6];
        const double r = 0.5 * (1.0 + 0.15 * jitter(rng));
        switch (inst.shape) {
        case Primitive::Sphere: inst.half_extent = Vec3::Constant(r); break;
        case Primitive::Box: inst.half_extent = Vec3(r, 0.8 * r, 0.9 * r); break;
        case Primitive::Ellipsoid: inst.half_extent = Vec3(1.1 * r, 0.7 * r, 0.8 * r); break;
        }
        const double angle = phase + 2.0 * std::numbers::pi * (double(i) + 0.25) / double(instances);
        inst.center        = Vec3(std::cos(angle), 0.1 * jitter(rng), std::sin(angle));
        spec.instances.push_back(inst);
    }

    // Push instances outward until every pair is at least 2.5 top voxels apart.
    double ring = instances == 1 ? 0.0 : 0.6;
    for (int iter = 0; iter < 200; ++iter) {
        SyntheticSpec trial = spec;
        for (auto &inst : trial.instances) {
            const Vec3 dir(inst.center.x(), 0.0, inst.center.z());
            inst.center = Vec3(0.0, inst.center.y(), 0.0) + ring * dir.normalized();
        }
        const double l0 = predicted_top_voxel_size(trial, hyper);
        bool ok         = true;
        for (int a = 0; a < instances && ok; ++a) {
            for (int b = a + 1; b < instances && ok; ++b) {
                ok = max_axis_gap(trial.instances[a], trial.instances[b]) >= 2.5 * l0;
            }
        }
        if (ok) {
            spec.instances = trial.instances;
            break;
        }
        ring *= 1.05;
    }

    const Aabb box     = instance_union_box(spec);
    const double l0    = predicted_top_voxel_size(spec, hyper);
    const double lfine = l0 / std::pow(double(hyper.level_scale), kNumLevels - 1);
    spec.point_spacing = lfine / 2.5;
    spec.point_radius  = 0.7 * spec.point_spacing;

    const double half_size = 0.5 * box.extent().norm();
    spec.cameras.look_at   = 0.5 * (box.min + box.max);
    spec.cameras.fov_y     = 0.9;
    spec.cameras.radius    = 1.05 * half_size / std::sin(0.5 * spec.cameras.fov_y);
    spec.cameras.count     = 8;
    spec.cameras.elevation = 0.55;
    spec.cameras.width     = 128;
    spec.cameras.height    = 128;
    return spec;
}

SyntheticScene
generate_scene(const SyntheticSpec &spec, const Hyper &hyper) {
    hyper.validate();
    if (spec.instances.empty()) throw Error(ErrorCode::SpecViolation, "synthetic spec has no instances");
    if (spec.point_spacing <= 0.0 || spec.point_radius <= 0.0)
        throw Error(ErrorCode::InvalidInput, "point spacing and radius must be positive");
    if (spec.opacity <= 0.0 || spec.opacity >= 1.0)
        throw Error(ErrorCode::InvalidInput, "opacity must lie in (0, 1)");
    if (spec.cameras.count < 1) throw Error(ErrorCode::InvalidInput, "need at least one camera");
    if (spec.num_classes < 1 || spec.num_classes > spec.embedding_dim)
        throw Error(ErrorCode::InvalidInput, "class count must lie in [1, embedding_dim]");
    for (const auto &inst : spec.instances) {
        if (inst.class_id < 0 || inst.class_id >= spec.num_classes)
            throw Error(ErrorCode::InvalidInput, "instance class id out of range");
        if ((inst.half_extent.array() <= 0.0).any())
            throw Error(ErrorCode::InvalidInput, "instance extents must be positive");
    }

    SyntheticScene out;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> tint(-0.05, 0.05);
    for (std::size_t i = 0; i < spec.instances.size(); ++i) {
        const auto &inst = spec.instances[i];
        const auto count = std::max<std::size_t>(
            16, std::size_t(std::ceil(surface_area(inst) / (spec.point_spacing * spec.point_spacing))));
        for (std::size_t n = 0; n < count; ++n) {
            out.points.push_back(sample_surface(inst, rng));
            out.labels.push_back(int(i));
            Vec3 c = inst.color + Vec3(tint(rng), tint(rng), tint(rng));
            out.colors.push_back(c.cwiseMax(0.0).cwiseMin(1.0));
        }
    }

    if (spec.separable) {
        const MultiResGrid grid(bounds_for_points(out.points), hyper.top_resolution, hyper.level_scale);
        const double l0 = grid.top_voxel_size();
        for (std::size_t a = 0; a < spec.instances.size(); ++a) {
            for (std::size_t b = a + 1; b < spec.instances.size(); ++b) {
                if (max_axis_gap(spec.instances[a], spec.instances[b]) < 2.0 * l0)
                    throw Error(ErrorCode::SpecViolation,
                                "instances " + std::to_string(a) + " and " + std::to_string(b) +
                                    " are closer than two top-level voxels");
            }
        }
    }

    // Class embeddings: orthonormal rows.
    {
        Eigen::MatrixXd g(spec.embedding_dim, spec.num_classes);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int c = 0; c < spec.num_classes; ++c) {
            for (int d = 0; d < spec.embedding_dim; ++d) g(d, c) = normal(rng);
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        const Eigen::MatrixXd q =
            qr.householderQ() * Eigen::MatrixXd::Identity(spec.embedding_dim, spec.num_classes);
        out.class_embeddings = q.transpose();
    }

    // Cameras.
    const auto &ring = spec.cameras;
    for (int v = 0; v < ring.count; ++v) {
        const double azimuth   = 2.0 * std::numbers::pi * double(v) / double(ring.count);
        const double elevation = (v % 2 == 0 ? 1.0 : -1.0) * ring.elevation;
        const Vec3 eye         = ring.look_at + ring.radius * Vec3(std::cos(elevation) * std::cos(azimuth),
                                                           std::sin(elevation),
                                                           std::cos(elevation) * std::sin(azimuth));
        out.cameras.push_back(
            Camera::look_at(eye, ring.look_at, Vec3(0.0, 1.0, 0.0), ring.fov_y, ring.width, ring.height));
    }

    // GT visibility: rasterize every labeled point as an isotropic Gaussian.
    SplatCloud cloud;
    const Mat3 cov = spec.point_radius * spec.point_radius * Mat3::Identity();
    const auto num_instances = int(spec.instances.size());
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(Eigen::Index(out.points.size()), num_instances);
    for (std::size_t i = 0; i < out.points.size(); ++i) {
        cloud.means.push_back(out.points[i]);
        cloud.covariances.push_back(cov);
        cloud.opacities.push_back(spec.opacity);
        cloud.colors.push_back(out.colors[i]);
        cloud.anchor_of.push_back(AnchorId(i));
        onehot(Eigen::Index(i), out.labels[i]) = 1.0;
    }

    std::bernoulli_distribution split(spec.oversegment_prob);
    for (const auto &cam : out.cameras) {
        const ImageD values = blend_values(cloud, cam, onehot, nullptr, nullptr, nullptr);
        std::vector<Mask> per_instance;
        std::vector<Mask> raw;
        std::vector<int> raw_instance;
        std::vector<int> hidden;
        for (int i = 0; i < num_instances; ++i) {
            Mask m = threshold_channel(values, i);
            if (count_set(m) == 0) {
                hidden.push_back(i);
            } else if (spec.oversegment_prob > 0.0 && count_set(m) >= 2 && split(rng)) {
                auto [a, b] = split_mask(m);
                raw.push_back(a);
                raw_instance.push_back(i);
                raw.push_back(b);
                raw_instance.push_back(i);
            } else {
                raw.push_back(m);
                raw_instance.push_back(i);
            }
            per_instance.push_back(std::move(m));
        }
        MaskSet set = MaskSet::from(raw);
        std::vector<int> kept_instance;
        std::vector<Eigen::VectorXd> kept_embedding;
        for (std::size_t j = 0; j < set.size(); ++j) {
            const int inst = raw_instance[set.source_index()[j]];
            kept_instance.push_back(inst);
            kept_embedding.push_back(out.class_embeddings.row(spec.instances[std::size_t(inst)].class_id).transpose());
        }
        out.instance_masks.push_back(std::move(per_instance));
        out.masks.push_back(std::move(set));
        out.mask_instance.push_back(std::move(kept_instance));
        out.embeddings.push_back(std::move(kept_embedding));
        out.occluded_instances.push_back(std::move(hidden));
    }
    return out;
}

void
apply_synthetic_appearance(Scene &scene, const SyntheticScene &data, const SyntheticSpec &spec) {
    const int k = scene.hyper.k;
    std::vector<std::unordered_map<VoxelKey, std::vector<std::size_t>, VoxelKeyHash>> buckets(kNumLevels);
    for (std::size_t i = 0; i < data.points.size(); ++i) {
        for (int level = 0; level < kNumLevels; ++level) {
            if (auto c = scene.grid.voxel_of(level, data.points[i])) buckets[level][VoxelKey{level, *c}].push_back(i);
        }
    }

    std::mt19937_64 rng(spec.seed ^ 0xfea7u);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto &anchor : scene.anchors) {
        if (spec.feature_noise > 0.0) {
            for (int a = 0; a < 3; ++a) anchor.feature[a] += spec.feature_noise * noise(rng);
        }
        const auto coord = scene.grid.voxel_of(anchor.level, anchor.position);
        if (!coord) continue;
        const auto it = buckets[anchor.level].find(VoxelKey{anchor.level, *coord});
        if (it == buckets[anchor.level].end() || it->second.empty()) continue;
        const auto &pts = it->second;
        const double rel = std::min(spec.point_radius / anchor.voxel_size, 0.999);
        for (int j = 0; j < k; ++j) {
            const std::size_t p = pts[(std::size_t(j) * pts.size()) / std::size_t(k) % pts.size()];
            auto &child         = anchor.children[std::size_t(j)];
            child.offset        = (data.points[p] - anchor.position) / anchor.voxel_size;
            child.rel_scale     = Vec3::Constant(logit(rel));
            child.rotation      = Quat4(1.0, 0.0, 0.0, 0.0);
            child.opacity       = spec.opacity;
            child.color         = data.colors[p];
        }
    }
}

std::vector<int>
anchor_instance_labels(const Scene &scene, const SyntheticScene &data) {
    std::vector<int> labels(scene.anchors.size(), -1);
    for (std::size_t a = 0; a < scene.anchors.size(); ++a) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < data.points.size(); ++i) {
            const double d = (data.points[i] - scene.anchors[a].position).squaredNorm();
            if (d < best) {
                best      = d;
                labels[a] = data.labels[i];
            }
        }
    }
    return labels;
}

} // namespace agsplat
