#include "hwgp/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace hwgp {

using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Counts evaluations and maps non-finite values to +inf so that line
// searches treat them as "too far".
class CountingObjective {
 public:
  explicit CountingObjective(const Objective& f) : f_(f) {}

  double operator()(const VectorXd& x) {
    ++count_;
    const double v = f_(x);
    return std::isfinite(v) ? v : kInf;
  }
  int count() const { return count_; }

 private:
  const Objective& f_;
  int count_ = 0;
};

Box unbounded(Eigen::Index n) {
  return Box{VectorXd::Constant(n, -kInf), VectorXd::Constant(n, kInf)};
}

struct RunResult {
  OptimResult result;
  bool usable = false;
};

RunResult bfgs_from(const OptimProblem& problem, const Box& box, const VectorXd& seed,
                    CountingObjective& f) {
  const Eigen::Index n = problem.dimension;
  RunResult out;
  VectorXd x = box.project(seed);
  double fx = f(x);
  out.result.x = x;
  out.result.f = fx;
  if (!std::isfinite(fx)) {
    out.result.status = OptimStatus::failed;
    return out;
  }
  out.usable = true;

  const bool has_bounds = problem.bounds.has_value();
  auto gradient = [&](const VectorXd& at) -> VectorXd {
    if (problem.gradient) return problem.gradient(at);
    Objective wrapped = [&f](const VectorXd& p) { return f(p); };
    return central_difference_gradient(wrapped, at, 1e-6, problem.bounds);
  };

  VectorXd g = gradient(x);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool identity_hessian = true;
  OptimStatus status = OptimStatus::max_iterations;
  int iter = 0;

  for (; iter < problem.max_iterations; ++iter) {
    if (f.count() >= problem.max_evaluations) break;
    if (!g.allFinite()) {
      status = OptimStatus::failed;
      break;
    }
    Eigen::Array<bool, Eigen::Dynamic, 1> free_mask(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lower = has_bounds && x(i) <= box.lower(i) && g(i) > 0.0;
      const bool at_upper = has_bounds && x(i) >= box.upper(i) && g(i) < 0.0;
      free_mask(i) = !(at_lower || at_upper);
    }
    const VectorXd pg = free_mask.select(g, 0.0);
    if (pg.lpNorm<Eigen::Infinity>() <= problem.gradient_tolerance * std::max(1.0, std::abs(fx))) {
      status = OptimStatus::converged;
      break;
    }

    VectorXd d = free_mask.select(-(H * pg), 0.0);
    if (d.dot(g) >= 0.0) {
      H.setIdentity();
      identity_hessian = true;
      d = -pg;
    }
    if (identity_hessian) d /= std::max(1.0, pg.lpNorm<Eigen::Infinity>());

    // Armijo backtracking along the projected path.
    double t = 1.0;
    VectorXd x_new;
    double f_new = kInf;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = box.project(x + t * d);
      f_new = f(x_new);
      if (f_new <= fx + 1e-4 * g.dot(x_new - x) && f_new <= fx) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!identity_hessian) {
        H.setIdentity();
        identity_hessian = true;
        continue;
      }
      status = OptimStatus::stalled;
      break;
    }

    const VectorXd s = x_new - x;
    const VectorXd g_new = gradient(x_new);
    const VectorXd yv = g_new - g;
    const double df = fx - f_new;
    x = x_new;
    fx = f_new;
    g = g_new;

    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (identity_hessian) {
        H *= sy / yv.squaredNorm();
        identity_hessian = false;
      }
      const double rho = 1.0 / sy;
      const VectorXd Hy = H * yv;
      H += (rho * rho * yv.dot(Hy) + rho) * s * s.transpose() -
           rho * (Hy * s.transpose() + s * Hy.transpose());
    }

    if (s.norm() <= problem.step_tolerance * (1.0 + x.norm()) ||
        df <= problem.objective_tolerance * (1.0 + std::abs(fx))) {
      status = OptimStatus::converged;
      ++iter;
      break;
    }
  }

  out.result.x = x;
  out.result.f = fx;
  out.result.status = status;
  out.result.iterations = iter;
  return out;
}

}  // namespace

void OptimProblem::validate() const {
  if (dimension < 1) throw std::invalid_argument("OptimProblem: dimension must be >= 1");
  if (!objective) throw std::invalid_argument("OptimProblem: objective is empty");
  if (bounds) {
    if (bounds->lower.size() != dimension || bounds->upper.size() != dimension)
      throw std::invalid_argument("OptimProblem: bound dimension mismatch");
    if ((bounds->lower.array() > bounds->upper.array()).any())
      throw std::invalid_argument("OptimProblem: lower bound exceeds upper bound");
  }
  for (const auto& s : seeds)
    if (s.size() != dimension) throw std::invalid_argument("OptimProblem: seed dimension mismatch");
}

const char* to_string(OptimStatus status) {
  switch (status) {
    case OptimStatus::converged: return "converged";
    case OptimStatus::max_iterations: return "max_iterations";
    case OptimStatus::stalled: return "stalled";
    case OptimStatus::failed: return "failed";
  }
  return "unknown";
}

VectorXd central_difference_gradient(const Objective& f, const VectorXd& x, double relative_step,
                                     const std::optional<Box>& bounds) {
  VectorXd g(x.size());
  VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = relative_step * (1.0 + std::abs(x(i)));
    const bool up_ok = !bounds || x(i) + h <= bounds->upper(i);
    const bool down_ok = !bounds || x(i) - h >= bounds->lower(i);
    if (up_ok && down_ok) {
      probe(i) = x(i) + h;
      const double fp = f(probe);
      probe(i) = x(i) - h;
      const double fm = f(probe);
      g(i) = (fp - fm) / (2.0 * h);
    } else {
      const double f0 = f(x);
      const double sign = up_ok ? 1.0 : -1.0;
      probe(i) = x(i) + sign * h;
      g(i) = sign * (f(probe) - f0) / h;
    }
    probe(i) = x(i);
  }
  return g;
}

OptimResult local_minimize(const OptimProblem& problem) {
  problem.validate();
  if (problem.seeds.empty()) throw std::invalid_argument("local_minimize: at least one seed required");
  const Box box = problem.bounds.value_or(unbounded(problem.dimension));
  CountingObjective f(problem.objective);

  OptimResult best;
  best.f = kInf;
  bool any_usable = false;
  for (const auto& seed : problem.seeds) {
    RunResult run = bfgs_from(problem, box, seed, f);
    const bool first = &seed == &problem.seeds.front();
    if (run.usable ? (!any_usable || run.result.f < best.f) : (first && !any_usable)) best = run.result;
    any_usable = any_usable || run.usable;
    if (f.count() >= problem.max_evaluations) break;
  }
  best.evaluations = f.count();
  if (!any_usable) best.status = OptimStatus::failed;
  return best;
}

OptimResult particle_swarm(const OptimProblem& problem, const SwarmOptions& options) {
  problem.validate();
  if (!problem.bounds || !problem.bounds->finite())
    throw std::invalid_argument("particle_swarm: finite box bounds required");
  if (options.swarm_size < 1 || options.iterations < 0)
    throw std::invalid_argument("particle_swarm: invalid swarm options");

  const Box& box = *problem.bounds;
  const Eigen::Index n = problem.dimension;
  const int swarm = options.swarm_size;
  const VectorXd range = box.upper - box.lower;
  CountingObjective f(problem.objective);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<VectorXd> pos(swarm), vel(swarm), best_pos(swarm);
  std::vector<double> best_val(swarm);
  for (int p = 0; p < swarm; ++p) {
    pos[p].resize(n);
    vel[p].resize(n);
    if (p < static_cast<int>(problem.seeds.size())) {
      pos[p] = box.project(problem.seeds[p]);
    } else {
      for (Eigen::Index i = 0; i < n; ++i) pos[p](i) = box.lower(i) + unit(rng) * range(i);
    }
    for (Eigen::Index i = 0; i < n; ++i) vel[p](i) = (2.0 * unit(rng) - 1.0) * range(i);
    best_pos[p] = pos[p];
    best_val[p] = f(pos[p]);
  }
  int g_index = static_cast<int>(std::min_element(best_val.begin(), best_val.end()) - best_val.begin());
  VectorXd g_pos = best_pos[g_index];
  double g_val = best_val[g_index];

  // Seeds beyond the swarm size still compete for the initial global best.
  for (std::size_t s = swarm; s < problem.seeds.size(); ++s) {
    const VectorXd p = box.project(problem.seeds[s]);
    const double v = f(p);
    if (v < g_val) {
      g_val = v;
      g_pos = p;
    }
  }

  OptimResult result;
  result.status = OptimStatus::max_iterations;
  double stall_reference = g_val;
  int stall_count = 0;
  int iter = 0;
  for (; iter < options.iterations; ++iter) {
    for (int p = 0; p < swarm; ++p) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double r1 = unit(rng);
        const double r2 = unit(rng);
        double v = options.inertia * vel[p](i) + options.cognitive * r1 * (best_pos[p](i) - pos[p](i)) +
                   options.social * r2 * (g_pos(i) - pos[p](i));
        v = std::clamp(v, -range(i), range(i));
        double x = pos[p](i) + v;
        if (x < box.lower(i)) {
          x = box.lower(i);
          v = 0.0;
        } else if (x > box.upper(i)) {
          x = box.upper(i);
          v = 0.0;
        }
        pos[p](i) = x;
        vel[p](i) = v;
      }
      const double val = f(pos[p]);
      if (val < best_val[p]) {
        best_val[p] = val;
        best_pos[p] = pos[p];
      }
    }
    for (int p = 0; p < swarm; ++p) {
      if (best_val[p] < g_val) {
        g_val = best_val[p];
        g_pos = best_pos[p];
      }
    }
    if (options.stall_iterations > 0) {
      if (stall_reference - g_val > options.stall_tolerance * (1.0 + std::abs(g_val))) {
        stall_reference = g_val;
        stall_count = 0;
      } else if (++stall_count >= options.stall_iterations) {
        result.status = OptimStatus::converged;
        ++iter;
        break;
      }
    }
  }

  result.x = g_pos;
  result.f = g_val;
  result.iterations = iter;
  result.evaluations = f.count();
  return result;
}

}  // namespace hwgp
