// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/camera.hpp>
#include <agsplat/error.hpp>

#include <Eigen/Geometry>

#include <cmath>

namespace agsplat {

Vec3
Camera::project(const Vec3 &world) const {
    const Vec3 c = to_camera(world);
    return {fx * c.x() / c.z() + cx, fy * c.y() / c.z() + cy, c.z()};
}

Vec3
Camera::unproject(double u, double v, double depth) const {
    const Vec3 c((u - cx) / fx * depth, (v - cy) / fy * depth, depth);
    return to_world(c);
}

void
Camera::validate() const {
    if (!(fx > 0 && fy > 0)) throw Error(ErrorCode::InvalidInput, "focal lengths must be positive");
    if (width < 1 || height < 1) throw Error(ErrorCode::InvalidInput, "image must be non-empty");
    if (!(rotation * rotation.transpose()).isApprox(Mat3::Identity(), 1e-6) ||
        std::abs(rotation.determinant() - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidInput, "camera rotation is not orthonormal");
    }
}

Camera
Camera::look_at(const Vec3 &eye,
                const Vec3 &target,
                const Vec3 &up,
                double fov_y_radians,
                int width,
                int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right         = forward.cross(up);
    if (right.norm() < 1e-9) right = forward.unitOrthogonal();
    right.normalize();
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation     = -cam.rotation * eye;
    cam.width           = width;
    cam.height          = height;
    cam.fy              = 0.5 * height / std::tan(0.5 * fov_y_radians);
    cam.fx              = cam.fy;
    cam.cx              = 0.5 * (width - 1);
    cam.cy              = 0.5 * (height - 1);
    return cam;
}

} // namespace agsplat
