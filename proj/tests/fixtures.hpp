#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "formation/controllers.hpp"
#include "formation/graph.hpp"

namespace formation::testing {

// Rectangle with sides 3 and 4 on the complete graph K4.
inline FormationSpec rectangle_spec() {
  return FormationSpec::from_edges(
      4, 2, {{0, 1, 3.0}, {2, 3, 3.0}, {1, 2, 4.0}, {0, 3, 4.0}, {0, 2, 5.0}, {1, 3, 5.0}});
}

inline Configuration rectangle_positions() {
  Configuration p(8);
  p << 0.0, 0.0, 3.0, 0.0, 3.0, 4.0, 0.0, 4.0;
  return p;
}

inline Configuration rectangle_initial_positions() {
  Configuration p(8);
  p << 0.0, 0.0, -1.0, 4.0, 5.0, 3.0, 3.0, 0.0;
  return p;
}

inline Eigen::VectorXd gaussian_vector(Eigen::Index size, std::mt19937_64& rng,
                                       double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Eigen::VectorXd x(size);
  for (Eigen::Index k = 0; k < size; ++k) x[k] = gauss(rng);
  return x;
}

// phi_i = i pi / 3, agents numbered from 1.
inline BodyFrames rectangle_frames() {
  std::vector<double> angles;
  for (int i = 1; i <= 4; ++i) angles.push_back(i * std::numbers::pi / 3.0);
  return BodyFrames::planar(angles);
}

// r_i = 50, rho_i = rho, w_{i,k} = 2 (i - 1) + k, phi_{i,k} = -pi / 2.
inline DistanceOnlyConfig rectangle_dither(double omega = 10.0, double rho = 1.0) {
  DistanceOnlyConfig cfg;
  cfg.damping.assign(4, 50.0);
  cfg.offsets.assign(4, rho);
  cfg.omega = omega;
  cfg.frequencies.resize(4, 2);
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 2; ++k) cfg.frequencies(i, k) = 2 * i + k + 1;
  }
  cfg.phases = Eigen::MatrixXd::Constant(4, 2, -std::numbers::pi / 2.0);
  return cfg;
}

inline Eigen::Matrix2d rotation(double a) {
  Eigen::Matrix2d r;
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

}  // namespace formation::testing
