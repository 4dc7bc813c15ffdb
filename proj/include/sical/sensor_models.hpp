#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sical/errors.hpp"
#include "sical/lie.hpp"

namespace sical {

inline double ScalarPart(double x) { return x; }
template <typename T>
double ScalarPart(const T &x) {
  return ScalarPart(x.a);  // ceres Jet
}

// ---------------------------------------------------------------------------
// IMU

/// Scale/non-orthogonality mapping matrices, gyro-to-accelerometer
/// misalignment, and constant biases. The body frame coincides with the
/// accelerometer frame.
struct ImuIntrinsics {
  Mat3 accel_mapping = Mat3::Identity();  // M_a, upper triangular
  Mat3 gyro_mapping = Mat3::Identity();   // M_w, upper triangular
  Mat3 accel_from_gyro = Mat3::Identity();
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();

  void Validate() const;

  template <typename T>
  Eigen::Matrix<T, 3, 1> ApplyAccel(const Eigen::Matrix<T, 3, 1> &a_ideal) const {
    return accel_mapping.cast<T>() * a_ideal + accel_bias.cast<T>();
  }
  template <typename T>
  Eigen::Matrix<T, 3, 1> ApplyGyro(const Eigen::Matrix<T, 3, 1> &w_ideal) const {
    return gyro_mapping.cast<T>() * (accel_from_gyro.cast<T>() * w_ideal) + gyro_bias.cast<T>();
  }

  Vec3 InvertAccel(const Vec3 &a_meas) const;
  Vec3 InvertGyro(const Vec3 &w_meas) const;
};

struct ImuMeasurement {
  double t = 0.0;  // sensor clock, seconds
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

/// Forward IMU model (noise-free): a~ = M_a a + b_a, w~ = M_w R_aw w + b_w.
std::pair<Vec3, Vec3> ImuForward(const Vec3 &a_ideal, const Vec3 &w_ideal,
                                 const ImuIntrinsics &intr);

// ---------------------------------------------------------------------------
// Radar

struct RadarTarget {
  double t = 0.0;
  Vec3 position = Vec3::Zero();  // target position in radar frame, m
  double doppler = 0.0;          // radial velocity, m/s
};

/// Radial projection p^T v / |p| of the target velocity relative to the radar.
double RadarDoppler(const Vec3 &target_in_radar, const Vec3 &target_vel_in_radar);

// ---------------------------------------------------------------------------
// LiDAR

struct LidarPoint {
  double t = 0.0;  // per-point stamp, sensor clock
  Vec3 position = Vec3::Zero();
  int scan = 0;
};

// ---------------------------------------------------------------------------
// Camera

enum class DistortionModel { kBrown, kFisheye };

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  DistortionModel model = DistortionModel::kBrown;
  std::vector<double> distortion;  // brown: k1 k2 p1 p2 k3; fisheye: k1..k4
  int width = 0, height = 0;
  double readout_time = 0.0;  // seconds, 0 for global shutter

  void Validate() const;

  template <typename T>
  void Distort(const T &xn, const T &yn, T *dx, T *dy) const {
    if (model == DistortionModel::kBrown) {
      const double k1 = distortion.size() > 0 ? distortion[0] : 0.0;
      const double k2 = distortion.size() > 1 ? distortion[1] : 0.0;
      const double p1 = distortion.size() > 2 ? distortion[2] : 0.0;
      const double p2 = distortion.size() > 3 ? distortion[3] : 0.0;
      const double k3 = distortion.size() > 4 ? distortion[4] : 0.0;
      const T r2 = xn * xn + yn * yn;
      const T radial = T(1) + r2 * (T(k1) + r2 * (T(k2) + r2 * T(k3)));
      *dx = xn * radial + T(2 * p1) * xn * yn + T(p2) * (r2 + T(2) * xn * xn);
      *dy = yn * radial + T(p1) * (r2 + T(2) * yn * yn) + T(2 * p2) * xn * yn;
    } else {
      const double k1 = distortion.size() > 0 ? distortion[0] : 0.0;
      const double k2 = distortion.size() > 1 ? distortion[1] : 0.0;
      const double k3 = distortion.size() > 2 ? distortion[2] : 0.0;
      const double k4 = distortion.size() > 3 ? distortion[3] : 0.0;
      const T r = sqrt(xn * xn + yn * yn + T(1e-18));
      const T theta = atan(r);
      const T t2 = theta * theta;
      const T theta_d = theta * (T(1) + t2 * (T(k1) + t2 * (T(k2) + t2 * (T(k3) + t2 * T(k4)))));
      const T scale = theta_d / r;
      *dx = scale * xn;
      *dy = scale * yn;
    }
  }

  /// Pinhole projection with distortion. Caller ensures positive depth.
  template <typename T>
  Eigen::Matrix<T, 2, 1> ProjectT(const Eigen::Matrix<T, 3, 1> &p_cam) const {
    const T xn = p_cam.x() / p_cam.z();
    const T yn = p_cam.y() / p_cam.z();
    T dx, dy;
    Distort(xn, yn, &dx, &dy);
    return {T(fx) * dx + T(cx), T(fy) * dy + T(cy)};
  }
};

/// Pinhole projection; throws DomainError for non-positive depth.
Vec2 Project(const Vec3 &p_cam, const CameraIntrinsics &intr);

/// Undistorted unit-depth ray for a pixel (fixed-point undistortion,
/// <= 20 iterations, 1e-10 tolerance).
Vec3 UnprojectRay(const Vec2 &pixel, const CameraIntrinsics &intr);

/// Pinhole inverse projection at inverse depth lambda (> 0).
Vec3 Unproject(const Vec2 &pixel, double inverse_depth, const CameraIntrinsics &intr);

/// Row exposure time of a rolling-shutter frame anchored at the middle row:
/// t = t_frame + (v / h - 1/2) * readout.
double RsRowTime(double t_frame, double row, int height, double readout_time);

struct FeatureObservation {
  double t_frame = 0.0;
  std::int64_t landmark_id = 0;
  Vec2 pixel = Vec2::Zero();
};

struct OdomPose {
  double t = 0.0;
  Quat q = Quat::Identity();  // sensor-from-map ... map-frame sensor rotation
  Vec3 p = Vec3::Zero();      // sensor position in map frame
};

}  // namespace sical
