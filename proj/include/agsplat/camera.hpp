// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/scene.hpp>

#include <Eigen/Core>

namespace agsplat {

/// Pinhole camera. `rotation`/`translation` map world points into the camera
/// frame (x right, y down, z forward). Pixel centers sit at integer coordinates.
struct Camera {
    double fx = 100.0;
    double fy = 100.0;
    double cx = 32.0;
    double cy = 32.0;
    int width  = 64;
    int height = 64;
    Mat3 rotation    = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
    Vec3 to_world(const Vec3 &cam) const { return rotation.transpose() * (cam - translation); }
    Vec3 center() const { return -rotation.transpose() * translation; }

    /// (u, v, z) of a world point; z is the view-space depth.
    Vec3 project(const Vec3 &world) const;
    /// World point at view-space depth `depth` behind pixel (u, v).
    Vec3 unproject(double u, double v, double depth) const;

    /// Throws InvalidInput on non-positive focal lengths, empty images or a
    /// rotation that is not orthonormal within 1e-6.
    void validate() const;

    static Camera look_at(const Vec3 &eye,
                          const Vec3 &target,
                          const Vec3 &up,
                          double fov_y_radians,
                          int width,
                          int height);
};

} // namespace agsplat
