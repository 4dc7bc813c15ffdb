#include "sical/sensor_models.hpp"

#include <cmath>

namespace sical {

void ImuIntrinsics::Validate() const {
  auto upper = [](const Mat3 &m) {
    return m(1, 0) == 0.0 && m(2, 0) == 0.0 && m(2, 1) == 0.0;
  };
  if (!upper(accel_mapping) || !upper(gyro_mapping)) {
    throw ConfigError("imu mapping matrices must be upper triangular");
  }
  if (accel_mapping.determinant() <= 0.0 || gyro_mapping.determinant() <= 0.0) {
    throw ConfigError("imu mapping matrices must have positive determinant");
  }
  if ((accel_from_gyro * accel_from_gyro.transpose() - Mat3::Identity()).norm() > 1e-6) {
    throw ConfigError("accel_from_gyro must be a rotation matrix");
  }
}

Vec3 ImuIntrinsics::InvertAccel(const Vec3 &a_meas) const {
  return accel_mapping.triangularView<Eigen::Upper>().solve(a_meas - accel_bias);
}

Vec3 ImuIntrinsics::InvertGyro(const Vec3 &w_meas) const {
  return accel_from_gyro.transpose() *
         gyro_mapping.triangularView<Eigen::Upper>().solve(Vec3(w_meas - gyro_bias));
}

std::pair<Vec3, Vec3> ImuForward(const Vec3 &a_ideal, const Vec3 &w_ideal,
                                 const ImuIntrinsics &intr) {
  return {intr.ApplyAccel<double>(a_ideal), intr.ApplyGyro<double>(w_ideal)};
}

double RadarDoppler(const Vec3 &target_in_radar, const Vec3 &target_vel_in_radar) {
  const double norm = target_in_radar.norm();
  if (norm < 1e-9) throw DomainError("radar target at sensor origin");
  return target_in_radar.dot(target_vel_in_radar) / norm;
}

void CameraIntrinsics::Validate() const {
  if (fx <= 0.0 || fy <= 0.0) throw ConfigError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  if (readout_time < 0.0) throw ConfigError("camera readout time must be non-negative");
  const size_t want = model == DistortionModel::kBrown ? 5 : 4;
  if (distortion.size() > want) throw ConfigError("too many distortion coefficients");
}

Vec2 Project(const Vec3 &p_cam, const CameraIntrinsics &intr) {
  if (p_cam.z() <= 1e-6) throw DomainError("projection of point behind camera");
  return intr.ProjectT<double>(p_cam);
}

Vec3 UnprojectRay(const Vec2 &pixel, const CameraIntrinsics &intr) {
  const double xd = (pixel.x() - intr.cx) / intr.fx;
  const double yd = (pixel.y() - intr.cy) / intr.fy;
  double x = xd, y = yd;
  bool converged = false;
  for (int i = 0; i < 20; ++i) {
    double dx, dy;
    intr.Distort<double>(x, y, &dx, &dy);
    const double ex = dx - xd;
    const double ey = dy - yd;
    x -= ex;
    y -= ey;
    if (std::abs(ex) < 1e-10 && std::abs(ey) < 1e-10) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericalError("undistortion fixed point did not converge");
  return {x, y, 1.0};
}

Vec3 Unproject(const Vec2 &pixel, double inverse_depth, const CameraIntrinsics &intr) {
  if (inverse_depth <= 0.0) throw DomainError("inverse depth must be positive");
  return UnprojectRay(pixel, intr) / inverse_depth;
}

double RsRowTime(double t_frame, double row, int height, double readout_time) {
  if (row < 0.0 || row >= static_cast<double>(height)) {
    throw DomainError("rolling shutter row outside image");
  }
  return t_frame + (row / static_cast<double>(height) - 0.5) * readout_time;
}

}  // namespace sical
