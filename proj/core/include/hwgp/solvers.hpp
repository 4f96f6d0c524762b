#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace hwgp {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }
  bool finite() const { return lower.allFinite() && upper.allFinite(); }
};

// A box-constrained minimization problem. When `gradient` is empty the
// solvers fall back to central differences.
struct OptimProblem {
  Objective objective;
  Gradient gradient;
  Eigen::Index dimension = 0;
  std::optional<Box> bounds;
  std::vector<Eigen::VectorXd> seeds;
  double step_tolerance = 1e-8;
  double objective_tolerance = 1e-10;
  double gradient_tolerance = 1e-7;
  int max_iterations = 500;
  int max_evaluations = 100000;

  void validate() const;
};

enum class OptimStatus { converged, max_iterations, stalled, failed };

const char* to_string(OptimStatus status);

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  OptimStatus status = OptimStatus::failed;
  int iterations = 0;
  int evaluations = 0;
};

/// Central-difference gradient with per-coordinate step
/// `relative_step * (1 + |x_i|)`. Coordinates on an active bound use a
/// one-sided difference pointing into the box.
Eigen::VectorXd central_difference_gradient(const Objective& f,
                                            const Eigen::VectorXd& x,
                                            double relative_step = 1e-6,
                                            const std::optional<Box>& bounds = {});

/// Projected BFGS with Armijo backtracking. Runs from every seed and returns
/// the best result; the returned point is never worse than the best seed.
OptimResult local_minimize(const OptimProblem& problem);

struct SwarmOptions {
  int swarm_size = 50;
  int iterations = 200;
  std::uint64_t seed = 0;
  double inertia = 0.729;
  double cognitive = 1.494;
  double social = 1.494;
  // Stop once the best value improved by less than
  // `stall_tolerance * (1 + |f|)` over this many iterations; 0 disables.
  int stall_iterations = 0;
  double stall_tolerance = 1e-6;
};

/// Global-best particle swarm on a finite box. Seed points of the problem
/// are injected as initial particles.
OptimResult particle_swarm(const OptimProblem& problem, const SwarmOptions& options);

}  // namespace hwgp
