#include "sical/stationary_calib.hpp"

#include <cmath>

#include <Eigen/SVD>
#include <ceres/ceres.h>

#include "sical/errors.hpp"
#include "sical/manifolds.hpp"

namespace sical {

namespace {

struct PieceStats {
  Vec3 accel_mean = Vec3::Zero();
  Vec3 gyro_mean = Vec3::Zero();
  Vec3 accel_stddev = Vec3::Zero();
  Vec3 gyro_stddev = Vec3::Zero();
  int count = 0;
};

PieceStats Summarize(const std::vector<ImuMeasurement> &piece) {
  PieceStats s;
  s.count = static_cast<int>(piece.size());
  for (const auto &m : piece) {
    s.accel_mean += m.accel;
    s.gyro_mean += m.gyro;
  }
  s.accel_mean /= s.count;
  s.gyro_mean /= s.count;
  Vec3 va = Vec3::Zero(), vw = Vec3::Zero();
  for (const auto &m : piece) {
    va += (m.accel - s.accel_mean).cwiseAbs2();
    vw += (m.gyro - s.gyro_mean).cwiseAbs2();
  }
  s.accel_stddev = (va / std::max(1, s.count - 1)).cwiseSqrt();
  s.gyro_stddev = (vw / std::max(1, s.count - 1)).cwiseSqrt();
  return s;
}

struct StationaryAccelRes {
  Vec3 mean;  // per-piece accelerometer sample mean

  template <typename T>
  bool operator()(const T *mapping, const T *bias, const T *f, T *r) const {
    // mapping: upper-triangular M_a (6), bias: b_a (3), f: body specific force (3)
    Eigen::Matrix<T, 3, 1> pred;
    pred(0) = mapping[0] * f[0] + mapping[1] * f[1] + mapping[2] * f[2] + bias[0];
    pred(1) = mapping[3] * f[1] + mapping[4] * f[2] + bias[1];
    pred(2) = mapping[5] * f[2] + bias[2];
    for (int i = 0; i < 3; ++i) r[i] = pred(i) - T(mean(i));
    return true;
  }
};

}  // namespace

StationaryCalibResult CalibrateImuIntrinsicsStationary(
    const std::vector<std::vector<ImuMeasurement>> &pieces,
    const StationaryCalibConfig &config) {
  StationaryCalibResult result;
  std::vector<PieceStats> stats;
  for (size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].empty()) {
      result.rejected_pieces.push_back(static_cast<int>(i));
      continue;
    }
    PieceStats s = Summarize(pieces[i]);
    if (s.accel_stddev.maxCoeff() > config.max_accel_stddev ||
        s.gyro_stddev.maxCoeff() > config.max_gyro_stddev) {
      result.rejected_pieces.push_back(static_cast<int>(i));
      continue;
    }
    stats.push_back(s);
  }
  if (stats.size() < 6) {
    throw UnderConstrainedError("stationary calibration needs at least 6 stationary pieces, got " +
                                std::to_string(stats.size()) + " after rejection");
  }

  // Observability: the gravity directions seen across pieces must span 3D.
  Eigen::MatrixXd dirs(stats.size(), 3);
  for (size_t i = 0; i < stats.size(); ++i) {
    dirs.row(i) = stats[i].accel_mean.normalized().transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(dirs);
  if (svd.singularValues().minCoeff() < config.min_direction_spread) {
    throw DegeneracyError("stationary piece orientations are near-coplanar; "
                          "accelerometer intrinsics unobservable");
  }

  double mapping[6] = {1, 0, 0, 1, 0, 1};
  Vec3 bias = Vec3::Zero();
  result.piece_gravities.resize(stats.size());
  for (size_t i = 0; i < stats.size(); ++i) {
    result.piece_gravities[i] =
        stats[i].accel_mean.normalized() * config.gravity_magnitude;
  }

  ceres::Problem problem;
  ceres::LocalParameterization *sphere = NewSphereParameterization();
  for (size_t i = 0; i < stats.size(); ++i) {
    auto *cost = new ceres::AutoDiffCostFunction<StationaryAccelRes, 3, 6, 3, 3>(
        new StationaryAccelRes{stats[i].accel_mean});
    problem.AddResidualBlock(cost, nullptr, mapping, bias.data(),
                             result.piece_gravities[i].data());
    problem.SetParameterization(result.piece_gravities[i].data(), sphere);
  }

  ceres::Solver::Options options;
  options.max_num_iterations = config.max_iterations;
  options.function_tolerance = 1e-14;
  options.num_threads = 1;
  ceres::Solver::Summary summary;
  ceres::Solve(options, &problem, &summary);
  if (!summary.IsSolutionUsable()) {
    throw NumericalError("stationary calibration failed: " + summary.BriefReport());
  }
  result.final_cost = summary.final_cost;

  result.intrinsics.accel_mapping << mapping[0], mapping[1], mapping[2], 0.0, mapping[3],
      mapping[4], 0.0, 0.0, mapping[5];
  result.intrinsics.accel_bias = bias;

  Vec3 gyro_bias = Vec3::Zero();
  int gyro_count = 0;
  for (const auto &s : stats) {
    gyro_bias += s.gyro_mean * s.count;
    gyro_count += s.count;
  }
  result.intrinsics.gyro_bias = gyro_bias / gyro_count;
  return result;
}

}  // namespace sical
