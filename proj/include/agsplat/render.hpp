// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/camera.hpp>
#include <agsplat/image.hpp>
#include <agsplat/scene.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace agsplat {

inline constexpr double kNearPlane            = 0.01;
inline constexpr double kCov2dRegularizer     = 0.3;
inline constexpr double kFootprintSigma       = 3.0;
inline constexpr double kMinTransmittance     = 1.0 / 255.0;
inline constexpr double kInstanceBinarization = 0.5;

struct ProjectedGaussian {
    Eigen::Vector2d mean;
    Eigen::Matrix2d cov;
    double depth = 0.0;
};

/// EWA projection: cov2d = J W Sigma W^T J^T + 0.3 I. Nullopt when the mean is
/// in front of the near plane or the 3-sigma footprint misses the viewport.
std::optional<ProjectedGaussian> project_gaussian(const Camera &camera, const Vec3 &mean, const Mat3 &cov);

/// World-space Gaussians flattened from a scene; index = anchor * k + child.
struct SplatCloud {
    std::vector<Vec3> means;
    std::vector<Mat3> covariances;
    std::vector<double> opacities;
    std::vector<Vec3> colors;
    std::vector<AnchorId> anchor_of;

    std::size_t size() const { return means.size(); }
};

SplatCloud build_splats(const Scene &scene);

struct BlendEntry {
    std::uint32_t gaussian = 0;
    double contribution    = 0.0; // t_i
    double weight          = 0.0; // omega_i
    double depth           = 0.0; // z_i
};

/// Per-pixel blend lists in front-to-back order, stored as one CSR array.
class BlendRecords {
  public:
    BlendRecords() = default;
    BlendRecords(int width, int height, std::vector<std::uint32_t> offsets, std::vector<BlendEntry> entries)
        : mWidth(width), mHeight(height), mOffsets(std::move(offsets)), mEntries(std::move(entries)) {}

    int width() const { return mWidth; }
    int height() const { return mHeight; }
    std::span<const BlendEntry> pixel(int x, int y) const {
        const auto p = std::size_t(y) * std::size_t(mWidth) + std::size_t(x);
        return {mEntries.data() + mOffsets[p], mEntries.data() + mOffsets[p + 1]};
    }
    std::span<const BlendEntry> pixel(std::size_t p) const {
        return {mEntries.data() + mOffsets[p], mEntries.data() + mOffsets[p + 1]};
    }
    std::size_t pixels() const { return std::size_t(mWidth) * std::size_t(mHeight); }
    const std::vector<BlendEntry> &entries() const { return mEntries; }

  private:
    int mWidth  = 0;
    int mHeight = 0;
    std::vector<std::uint32_t> mOffsets;
    std::vector<BlendEntry> mEntries;
};

enum class RenderMode { Color, Feature, Instance, Depth };

struct RenderRequest {
    RenderMode mode = RenderMode::Color;
    /// Anchors rendered white in Instance mode; every other Gaussian is black.
    std::vector<AnchorId> instance_anchors;
    bool want_records = false;
};

struct RenderTargets {
    ImageD color;   // H x W x 3, Color mode
    ImageD feature; // H x W x 3, Feature mode
    ImageD depth;   // H x W, Depth mode
    ImageD alpha;   // H x W accumulated weight, always filled
    ImageD instance_value; // blended white/black value, Instance mode
    Mask instance;         // binarized at 0.5, Instance mode
    std::optional<BlendRecords> records;
};

/// Tiled front-to-back splatting with a global mean-depth sort. A Gaussian
/// contributes t = alpha * exp(-d^2 / 2) at pixels whose Mahalanobis distance
/// satisfies d^2 <= 9; a pixel stops once its transmittance drops below 1/255.
RenderTargets render(const Scene &scene, const Camera &camera, const RenderRequest &request);
RenderTargets render(const Scene &scene, const Camera &camera, RenderMode mode, bool want_records = false);

/// Lower-level entry point over an explicit Gaussian set. `values` holds the
/// per-Gaussian payload blended into `out` (channels = values.cols()).
ImageD blend_values(const SplatCloud &cloud,
                    const Camera &camera,
                    const Eigen::Ref<const Eigen::MatrixXd> &values,
                    ImageD *alpha_out,
                    ImageD *depth_out,
                    BlendRecords *records_out);

/// Blended scalar value per pixel of the Gaussians owned by `anchors`, read
/// from precomputed records.
ImageD instance_value_from_records(const BlendRecords &records,
                                   std::span<const AnchorId> anchors,
                                   std::size_t num_anchors,
                                   int k);
Mask binarize(const ImageD &value, double threshold = kInstanceBinarization);

/// Multiplies every anchor feature by `factor`.
void scale_features(Scene &scene, double factor);

} // namespace agsplat
