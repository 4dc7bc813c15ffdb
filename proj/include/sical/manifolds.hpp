#pragma once

#include <ceres/local_parameterization.h>

namespace sical {

/// Eigen-layout (x, y, z, w) unit quaternion parameterization.
ceres::LocalParameterization *NewQuaternionParameterization();

/// Two-DoF tangent step that preserves the vector norm: gravity stays on the
/// sphere of its initial magnitude.
ceres::LocalParameterization *NewSphereParameterization();

}  // namespace sical
