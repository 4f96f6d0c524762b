#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hwgp {

using ScalarMap = std::function<double(double)>;

/// Linear block G(q): x_{k+1} = A x_k + B u_k, y_k = C x_k + D u_k.
struct LinearStateSpace {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  Eigen::MatrixXd D;

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
  Eigen::Index output_dim() const { return C.rows(); }

  /// Throws std::invalid_argument on inconsistent or empty dimensions.
  void validate_dimensions() const;
};

double spectral_radius(const Eigen::MatrixXd& A);

/// Solves P = A P A^T + Q by a direct vectorized solve. Requires rho(A) < 1.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

/// sqrt(trace(C P C^T + D D^T)) with P the controllability Gramian.
double h2_norm(const LinearStateSpace& lin);

/// Random stable system with poles in the disk of radius 0.95, standard
/// normal B, C, D, and C, D rescaled so that h2_norm equals `target_h2`.
/// SISO.
LinearStateSpace random_stable_system(int state_dim, std::uint64_t seed, double target_h2 = 10.0);

/// Controllable canonical realization of num(q)/den(q), coefficients in
/// descending powers of q. den must be monic-normalizable and
/// deg(num) <= deg(den).
LinearStateSpace transfer_function(const std::vector<double>& num, const std::vector<double>& den);

/// Static SISO nonlinearity with a known inverse.
struct Nonlinearity {
  std::string name;
  ScalarMap forward;
  ScalarMap inverse;
};

/// "identity", "u+sin(u)" / "y+sin(y)" / "x+sin(x)" (any variable letter).
Nonlinearity nonlinearity_from_name(const std::string& name);

/// Inverse of a continuous nondecreasing map by bracketed bisection.
double invert_monotone(const ScalarMap& f, double value, double tolerance = 1e-13);

struct HWSystem {
  LinearStateSpace lin;
  ScalarMap psi;      // input nonlinearity u -> ubar
  ScalarMap phi_inv;  // output nonlinearity ybar -> y
  ScalarMap phi;      // inverse of phi_inv
  double sigma = 0.0;

  void validate() const;
};

HWSystem make_hw_system(LinearStateSpace lin, const Nonlinearity& input, const Nonlinearity& output,
                        double sigma);

struct Trajectory {
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  Eigen::VectorXd y0;  // noise-free outputs, same states

  Eigen::Index size() const { return u.size(); }
  /// Samples [start, start + length).
  Trajectory segment(Eigen::Index start, Eigen::Index length) const;
};

/// Simulates the SISO Hammerstein-Wiener recursion with output noise
/// e_k ~ N(0, sigma^2) drawn from a generator seeded with `seed`.
Trajectory simulate_hw(const HWSystem& sys, const Eigen::VectorXd& u, const Eigen::VectorXd& x0,
                       std::uint64_t seed);

/// Mutable plant for receding-horizon loops: one noisy step at a time.
class HWPlant {
 public:
  HWPlant(HWSystem sys, Eigen::VectorXd x0, std::uint64_t seed);

  struct Sample {
    double y;
    double y0;
  };
  Sample step(double u);
  const Eigen::VectorXd& state() const { return x_; }

 private:
  HWSystem sys_;
  Eigen::VectorXd x_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};
};

}  // namespace hwgp
