// SPDX-License-Identifier: Apache-2.0
//
// ilcsim: integrated uplink localisation & communication simulator

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ilc {

using cxd = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using Eigen::VectorXi;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cxd jimag{0.0, 1.0};

inline double deg2rad(double d) { return d * pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / pi; }

/// Thrown when a truncated series hits max_terms before meeting its tolerance.
class SeriesNonConvergence : public std::runtime_error {
 public:
  explicit SeriesNonConvergence(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ilc
