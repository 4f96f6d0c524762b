#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

#include "hwgp/linsys.hpp"

namespace hwgp::test {

inline Eigen::VectorXd gaussian_vector(Eigen::Index n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  const Eigen::VectorXd v = gaussian_vector(r * c, seed);
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), r, c);
}

inline HWSystem linear_system(const LinearStateSpace& lin, double sigma = 0.0) {
  const Nonlinearity id = nonlinearity_from_name("identity");
  return make_hw_system(lin, id, id, sigma);
}

inline HWSystem sine_system(const LinearStateSpace& lin, double sigma = 0.01) {
  return make_hw_system(lin, nonlinearity_from_name("u+sin(u)"), nonlinearity_from_name("y+sin(y)"), sigma);
}

/// Noise-free linear trajectory with unit Gaussian input.
inline Trajectory linear_trajectory(const LinearStateSpace& lin, Eigen::Index n, std::uint64_t seed) {
  return simulate_hw(linear_system(lin), gaussian_vector(n, seed), Eigen::VectorXd::Zero(lin.state_dim()), seed + 1);
}

inline double min_eigenvalue(const Eigen::MatrixXd& A) {
  const Eigen::MatrixXd S = 0.5 * (A + A.transpose());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace hwgp::test
