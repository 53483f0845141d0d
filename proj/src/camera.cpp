#include "ffvio/camera.hpp"

#include <stdexcept>

namespace ffvio {

Eigen::Matrix<double, 2, 3> PinholeIntrinsics::projection_jacobian(const Vec3& p) const {
  const double iz = 1.0 / p.z();
  const double iz2 = iz * iz;
  Eigen::Matrix<double, 2, 3> J;
  J << fx * iz, 0.0, -fx * p.x() * iz2,
       0.0, fy * iz, -fy * p.y() * iz2;
  return J;
}

void CameraRig::validate() const {
  for (const auto* cam : {&cam0, &cam1}) {
    if (!(cam->fx > 0.0) || !(cam->fy > 0.0) || cam->width <= 0 || cam->height <= 0) {
      throw std::invalid_argument("CameraRig: focal lengths and image size must be positive");
    }
  }
  if (!(baseline() > 0.0)) throw std::invalid_argument("CameraRig: baseline must be positive");
  if (!T_c0_c1.is_finite() || !T_i_c0.is_finite()) {
    throw std::invalid_argument("CameraRig: non-finite extrinsics");
  }
}

CameraRig CameraRig::euroc_like() {
  CameraRig rig;
  rig.T_c0_c1 = Transform{Quaternion::identity(), Vec3(0.11, 0.0, 0.0)};
  Mat3 R_i_c0;
  // camera x right = body -y, camera y down = body -z, camera z forward = body x
  R_i_c0 << 0.0, 0.0, 1.0,
           -1.0, 0.0, 0.0,
            0.0, -1.0, 0.0;
  rig.T_i_c0 = Transform{Quaternion::from_matrix(R_i_c0), Vec3(0.05, 0.0, 0.0)};
  return rig;
}

std::optional<Vec2> project_point(const PinholeIntrinsics& cam, const Transform& T_w_c,
                                  const Vec3& p_w) {
  const Vec3 p_c = T_w_c.inverse() * p_w;
  if (!(p_c.z() > 1e-9)) return std::nullopt;
  return cam.project(p_c);
}

}  // namespace ffvio
