// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/scene.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

namespace agsplat {

namespace {

std::uint64_t
splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t
voxel_stream_seed(std::uint64_t seed, int level, const VoxelCoord &c) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(level));
    for (int a = 0; a < 3; ++a) {
        h = splitmix64(h ^ static_cast<std::uint64_t>(c[a]));
    }
    return h;
}

bool
coord_less(const VoxelCoord &a, const VoxelCoord &b) {
    return std::tie(a[0], a[1], a[2]) < std::tie(b[0], b[1], b[2]);
}

} // namespace

void
Hyper::validate() const {
    auto fail = [](const std::string &msg) { throw Error(ErrorCode::InvalidInput, msg); };
    if (lambda_in < 0 || lambda_is < 0 || lambda_ic < 0 || lambda_d < 0 || lambda_prop < 0) {
        fail("loss weights must be non-negative");
    }
    if (!(tau > 0)) fail("tau must be positive");
    if (k < 1) fail("k must be at least 1");
    if (top_resolution < 1) fail("top_resolution must be at least 1");
    if (level_scale < 1) fail("level_scale must be at least 1");
    for (double t : {grow_weight_threshold, text_margin, sim_opacity_min, cluster_weight_threshold}) {
        if (!(t > 0 && t < 1)) fail("thresholds must lie in (0, 1)");
    }
    if (!(densify_grad_percentile >= 0 && densify_grad_percentile <= 100)) {
        fail("densify_grad_percentile must lie in [0, 100]");
    }
    if (language_dim < 1) fail("language_dim must be at least 1");
}

std::size_t
VoxelKeyHash::operator()(const VoxelKey &key) const noexcept {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(key.level));
    for (int a = 0; a < 3; ++a) {
        h = splitmix64(h ^ static_cast<std::uint64_t>(key.coord[a]));
    }
    return static_cast<std::size_t>(h);
}

MultiResGrid::MultiResGrid(const Aabb &bounds, int top_resolution, int level_scale)
    : mBounds(bounds), mTopResolution(top_resolution), mLevelScale(level_scale) {
    if (top_resolution < 1 || level_scale < 1) {
        throw Error(ErrorCode::InvalidInput, "grid resolution and level scale must be positive");
    }
    if (!((bounds.max.array() > bounds.min.array()).all())) {
        throw Error(ErrorCode::InvalidInput, "grid bounds must have positive extent");
    }
}

double
MultiResGrid::voxel_size(int level) const {
    return mBounds.extent().maxCoeff() / mTopResolution / std::pow(double(mLevelScale), level);
}

std::optional<VoxelCoord>
MultiResGrid::voxel_of(int level, const Vec3 &p) const {
    const double size = voxel_size(level);
    VoxelCoord c;
    for (int a = 0; a < 3; ++a) {
        const auto count =
            std::max<std::int64_t>(1, std::int64_t(std::ceil(mBounds.extent()[a] / size - 1e-9)));
        const double rel = p[a] - mBounds.min[a];
        if (!(rel >= 0.0) || rel > double(count) * size) return std::nullopt;
        auto idx = std::int64_t(std::floor(rel / size));
        c[a] = std::clamp<std::int64_t>(idx, 0, count - 1);
    }
    return c;
}

Vec3
MultiResGrid::center(int level, const VoxelCoord &coord) const {
    const double size = voxel_size(level);
    return mBounds.min + (coord.cast<double>().array() + 0.5).matrix() * size;
}

std::optional<AnchorId>
MultiResGrid::find(int level, const VoxelCoord &coord) const {
    auto it = mOccupancy.find(VoxelKey{level, coord});
    if (it == mOccupancy.end()) return std::nullopt;
    return it->second;
}

bool
MultiResGrid::insert(int level, const VoxelCoord &coord, AnchorId id) {
    return mOccupancy.emplace(VoxelKey{level, coord}, id).second;
}

void
MultiResGrid::clear() {
    mOccupancy.clear();
}

std::size_t
MultiResGrid::size(int level) const {
    return static_cast<std::size_t>(std::count_if(
        mOccupancy.begin(), mOccupancy.end(), [level](const auto &kv) { return kv.first.level == level; }));
}

void
Scene::rebuild_grid() {
    grid.clear();
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const auto &a = anchors[i];
        auto coord    = grid.voxel_of(a.level, a.position);
        if (!coord || !grid.insert(a.level, *coord, static_cast<AnchorId>(i))) {
            std::ostringstream msg;
            msg << "anchor " << i << " cannot be placed in the grid";
            throw Error(ErrorCode::SpecViolation, msg.str());
        }
    }
}

FeatureMatrix
Scene::features() const {
    FeatureMatrix f(static_cast<Eigen::Index>(anchors.size()), 3);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        f.row(Eigen::Index(i)) = anchors[i].feature.transpose();
    }
    return f;
}

void
Scene::set_features(const FeatureMatrix &f) {
    if (std::size_t(f.rows()) != anchors.size()) {
        throw Error(ErrorCode::InvalidInput, "feature matrix row count differs from anchor count");
    }
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        anchors[i].feature = f.row(Eigen::Index(i)).transpose();
    }
}

void
Scene::check_invariants() const {
    auto fail = [](const std::string &m) { throw Error(ErrorCode::SpecViolation, m); };
    if (grid.size() != anchors.size()) fail("grid occupancy count differs from anchor count");
    for (const auto &[key, id] : grid.occupancy()) {
        if (id >= anchors.size()) fail("grid references a missing anchor");
        const auto &a = anchors[id];
        if (a.level != key.level) fail("grid level differs from anchor level");
        if ((grid.center(key.level, key.coord) - a.position).norm() > 1e-9 * (1 + a.position.norm())) {
            fail("anchor is not at its voxel center");
        }
    }
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const auto &a = anchors[i];
        if (a.children.size() != std::size_t(hyper.k)) fail("anchor child count differs from k");
        if (std::abs(a.voxel_size - grid.voxel_size(a.level)) > 1e-12 * a.voxel_size) {
            fail("anchor voxel size differs from its level");
        }
        for (int c = 0; c < hyper.k; ++c) {
            const auto s = gaussian_params(a, c).scale;
            if (!((s.array() > 0).all() && (s.array() < a.voxel_size).all())) {
                fail("child scale escapes its voxel");
            }
            if (std::abs(a.children[c].rotation.norm() - 1.0) > 1e-6) fail("non-unit quaternion");
        }
    }
}

double
sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

Aabb
bounds_for_points(std::span<const Vec3> points) {
    if (points.empty()) throw Error(ErrorCode::InvalidInput, "empty point list");
    Aabb box{points.front(), points.front()};
    for (const auto &p : points) {
        box.min = box.min.cwiseMin(p);
        box.max = box.max.cwiseMax(p);
    }
    Vec3 extent = box.extent();
    for (int a = 0; a < 3; ++a) {
        if (extent[a] < 1e-6) {
            warn("degenerate point extent on an axis; widening to 1e-6");
            const double mid = 0.5 * (box.min[a] + box.max[a]);
            box.min[a]       = mid - 0.5e-6;
            box.max[a]       = mid + 0.5e-6;
            extent[a]        = 1e-6;
        }
    }
    box.min -= 0.05 * extent;
    box.max += 0.05 * extent;
    return box;
}

Anchor
make_anchor(const MultiResGrid &grid,
            int level,
            const VoxelCoord &coord,
            const Hyper &hyper,
            std::uint64_t seed) {
    Anchor a;
    a.position   = grid.center(level, coord);
    a.voxel_size = grid.voxel_size(level);
    a.level      = level;
    std::mt19937_64 rng(voxel_stream_seed(seed, level, coord));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 3; ++i) a.feature[i] = unit(rng);
    a.children.assign(std::size_t(hyper.k), ChildGaussian{});
    return a;
}

Scene
voxelize_points(std::span<const Vec3> points, const Hyper &hyper, std::uint64_t seed) {
    return voxelize_points(points, hyper, seed, bounds_for_points(points));
}

Scene
voxelize_points(std::span<const Vec3> points,
                const Hyper &hyper,
                std::uint64_t seed,
                const Aabb &bounds) {
    if (points.empty()) throw Error(ErrorCode::InvalidInput, "empty point list");
    hyper.validate();
    Scene scene;
    scene.hyper = hyper;
    scene.seed  = seed;
    scene.grid  = MultiResGrid(bounds, hyper.top_resolution, hyper.level_scale);

    for (int level = 0; level < kNumLevels; ++level) {
        std::vector<VoxelCoord> coords;
        coords.reserve(points.size());
        for (const auto &p : points) {
            if (auto c = scene.grid.voxel_of(level, p)) coords.push_back(*c);
        }
        std::sort(coords.begin(), coords.end(), coord_less);
        coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        for (const auto &c : coords) {
            const auto id = static_cast<AnchorId>(scene.anchors.size());
            scene.grid.insert(level, c, id);
            scene.anchors.push_back(make_anchor(scene.grid, level, c, hyper, seed));
        }
    }
    return scene;
}

GaussianParams
gaussian_params(const Anchor &anchor, int child_index) {
    const auto &g = anchor.children.at(std::size_t(child_index));
    GaussianParams p;
    p.mean = anchor.position + g.offset * anchor.voxel_size;
    for (int a = 0; a < 3; ++a) p.scale[a] = sigmoid(g.rel_scale[a]) * anchor.voxel_size;
    return p;
}

Mat3
rotation_from(const Quat4 &q) {
    Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
    return quat.normalized().toRotationMatrix();
}

Mat3
covariance_from(const Quat4 &q, const Vec3 &s) {
    if (std::abs(q.norm() - 1.0) > 1e-6) warn("non-unit quaternion normalized");
    const Mat3 r = rotation_from(q);
    const Mat3 cov = r * s.array().square().matrix().asDiagonal() * r.transpose();
    return 0.5 * (cov + cov.transpose());
}

double
densify_threshold(std::span<const double> grad_signal, double percentile) {
    if (grad_signal.empty()) return 0.0;
    std::vector<double> v(grad_signal.begin(), grad_signal.end());
    std::sort(v.begin(), v.end());
    const double pos = std::clamp(percentile, 0.0, 100.0) / 100.0 * double(v.size() - 1);
    const auto lo    = std::size_t(std::floor(pos));
    const auto hi    = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

std::size_t
densify(Scene &scene, std::span<const double> grad_signal, double threshold) {
    const int k = scene.hyper.k;
    if (grad_signal.size() != scene.num_children()) {
        throw Error(ErrorCode::InvalidInput, "gradient signal must cover every child Gaussian");
    }
    const std::size_t original = scene.anchors.size();
    std::size_t added          = 0;
    for (std::size_t a = 0; a < original; ++a) {
        for (int c = 0; c < k; ++c) {
            if (!(grad_signal[a * std::size_t(k) + std::size_t(c)] > threshold)) continue;
            const Vec3 mu = gaussian_params(scene.anchors[a], c).mean;
            for (int level = 0; level < kNumLevels; ++level) {
                auto coord = scene.grid.voxel_of(level, mu);
                if (!coord || scene.grid.occupied(level, *coord)) continue;
                const auto id = static_cast<AnchorId>(scene.anchors.size());
                scene.grid.insert(level, *coord, id);
                scene.anchors.push_back(make_anchor(scene.grid, level, *coord, scene.hyper, scene.seed));
                ++added;
            }
        }
    }
    return added;
}

} // namespace agsplat
