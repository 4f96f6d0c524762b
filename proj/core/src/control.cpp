#include "hwgp/control.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hwgp/errors.hpp"
#include "hwgp/linpred.hpp"
#include "hwgp/predict.hpp"

namespace hwgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// --- chi-squared ------------------------------------------------------------

namespace {

// Regularized lower incomplete gamma P(a, x): power series below a + 1,
// Lentz continued fraction for Q(a, x) above.
double regularized_gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return std::min(1.0, sum * std::exp(log_prefix));
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int n = 1; n < 10000; ++n) {
    const double an = -n * (n - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::max(0.0, 1.0 - std::exp(log_prefix) * h);
}

}  // namespace

double chi2_cdf(double x, int dof) {
  if (dof < 1) throw std::invalid_argument("chi2_cdf: dof must be >= 1");
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_quantile(double p, int dof) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_quantile: p must lie in (0, 1)");
  if (dof < 1) throw std::invalid_argument("chi2_quantile: dof must be >= 1");
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(dof));
  while (chi2_cdf(hi, dof) < p) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// --- configuration ----------------------------------------------------------

void ControllerConfig::validate() const {
  const Index n = Q.rows();
  if (n < 1 || Q.cols() != n || R.rows() != n || R.cols() != n)
    throw std::invalid_argument("ControllerConfig: Q and R must be square with the horizon size");
  if (H.cols() != n || H.rows() != q.size())
    throw std::invalid_argument("ControllerConfig: H must be n_c x horizon and q of length n_c");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 || (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("ControllerConfig: Q and R must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eq(Q, Eigen::EigenvaluesOnly), er(R, Eigen::EigenvaluesOnly);
  if (eq.eigenvalues().minCoeff() < -1e-12 || er.eigenvalues().minCoeff() < -1e-12)
    throw std::invalid_argument("ControllerConfig: Q and R must be positive semidefinite");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("ControllerConfig: p must lie in (0, 1)");
  if (!(lipschitz >= 0.0)) throw std::invalid_argument("ControllerConfig: Lipschitz constant must be >= 0");
  if (!(soft_penalty >= 0.0)) throw std::invalid_argument("ControllerConfig: soft penalty must be >= 0");
  if (retighten_iterations < 1 || max_iterations < 1 || swarm_size < 1 || swarm_iterations < 0)
    throw std::invalid_argument("ControllerConfig: iteration counts must be positive");
  if (input_box) {
    if (input_box->lower.size() != n || input_box->upper.size() != n)
      throw std::invalid_argument("ControllerConfig: input box must have the horizon size");
    if ((input_box->lower.array() > input_box->upper.array()).any())
      throw std::invalid_argument("ControllerConfig: input box is empty");
  }
}

ControllerConfig ControllerConfig::tracking(Index horizon, double lower, double upper) {
  if (horizon < 1 || !(lower < upper)) throw std::invalid_argument("ControllerConfig::tracking: bad horizon or bounds");
  ControllerConfig c;
  c.Q = MatrixXd::Identity(horizon, horizon);
  c.R = MatrixXd::Identity(horizon, horizon);
  c.H.resize(2 * horizon, horizon);
  c.H << MatrixXd::Identity(horizon, horizon), -MatrixXd::Identity(horizon, horizon);
  c.q.resize(2 * horizon);
  c.q << VectorXd::Constant(horizon, upper), VectorXd::Constant(horizon, -lower);
  return c;
}

// --- tightening and cost ----------------------------------------------------

Tightening tighten(const ControllerConfig& config, const GaussianPosterior& posterior, const MatrixXd& hat_kp) {
  const int dof = static_cast<int>(hat_kp.rows());
  Tightening t;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrized(hat_kp), Eigen::EigenvaluesOnly);
  t.sigma_p = std::max(es.eigenvalues().maxCoeff(), 0.0);
  t.c_p = config.lipschitz * (std::sqrt(chi2_quantile(config.p, dof) * t.sigma_p) + posterior.mean.norm());
  t.bound = config.q - t.c_p * config.H.rowwise().norm();
  return t;
}

double constraint_excess(const MatrixXd& H, const VectorXd& y, const VectorXd& bound) {
  return (H * y - bound).cwiseMax(0.0).squaredNorm();
}

namespace {

VectorXd window_inputs(const History& h, const VectorXd& u_seq) {
  VectorXd u(h.u.size() + u_seq.size());
  u << h.u, u_seq;
  return u;
}

double quad(const MatrixXd& W, const VectorXd& v) { return v.dot(W * v); }

void check_history(const History& h, Index past, Index horizon, const VectorXd& r_seq) {
  if (h.u.size() != past || h.y.size() != past)
    throw std::invalid_argument("controller: history must hold exactly L0 inputs and outputs");
  if (r_seq.size() != horizon) throw std::invalid_argument("controller: reference must span the horizon");
}

// Drops the first entry and repeats the last one.
VectorXd shifted(const VectorXd& v) {
  VectorXd out(v.size());
  if (v.size() == 0) return out;
  out.head(v.size() - 1) = v.tail(v.size() - 1);
  out(v.size() - 1) = v(v.size() - 1);
  return out;
}

double training_scale(const VectorXd& v) {
  if (v.size() < 2) return 1.0;
  const double s = std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
  return s > 1e-9 ? s : 1.0;
}

}  // namespace

CostTerms expected_cost(const ControllerConfig& config, const ImplicitGPModel& model, const History& history,
                        const VectorXd& u_seq, const VectorXd& y_seq, const VectorXd& phi_r,
                        GaussianPosterior* posterior, MatrixXd* hat_kp) {
  const VectorXd eta = model.make_query(window_inputs(history, u_seq), history.y, y_seq);
  GaussianPosterior post = model.posterior_f(eta);
  MatrixXd kp = model.hat_kp(post);
  CostTerms c;
  c.input = quad(config.R, u_seq);
  c.tracking = quad(config.Q, output_posterior_mean(model, y_seq) + post.mean - phi_r);
  c.variance = (config.Q * kp).trace();
  if (posterior) *posterior = std::move(post);
  if (hat_kp) *hat_kp = std::move(kp);
  return c;
}

// --- implicit GP receding horizon -------------------------------------------

RhcSolution solve_rhc(const ControllerConfig& config, const ImplicitGPModel& model, const History& history,
                      const VectorXd& r_seq, const std::optional<std::pair<VectorXd, VectorXd>>& warm) {
  config.validate();
  const Index n = model.future();
  if (config.horizon() != n) throw std::invalid_argument("solve_rhc: controller horizon differs from the model");
  check_history(history, model.past(), n, r_seq);

  const VectorXd phi_r = output_posterior_mean(model, r_seq);
  auto split = [n](const VectorXd& z) { return std::pair<VectorXd, VectorXd>{z.head(n), z.tail(n)}; };

  VectorXd bound;
  auto objective = [&](const VectorXd& z) {
    try {
      const auto [u, y] = split(z);
      const double v = expected_cost(config, model, history, u, y, phi_r).total() +
                       config.soft_penalty * constraint_excess(config.H, y, bound);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  auto retighten = [&](const VectorXd& z) {
    const auto [u, y] = split(z);
    GaussianPosterior post;
    MatrixXd kp;
    expected_cost(config, model, history, u, y, phi_r, &post, &kp);
    return tighten(config, post, kp);
  };

  VectorXd seed(2 * n);
  seed << VectorXd::Zero(n), subspace_predict(model.hyper().gamma, window_inputs(history, VectorXd::Zero(n)), history.y);
  if (config.input_box) seed.head(n) = config.input_box->project(seed.head(n));
  std::vector<VectorXd> seeds{seed};
  if (warm) {
    if (warm->first.size() != n || warm->second.size() != n)
      throw std::invalid_argument("solve_rhc: warm start has the wrong size");
    VectorXd w(2 * n);
    w << warm->first, warm->second;
    if (config.input_box) w.head(n) = config.input_box->project(w.head(n));
    seeds.push_back(w);
  }

  Box box{VectorXd::Constant(2 * n, -std::numeric_limits<double>::infinity()),
          VectorXd::Constant(2 * n, std::numeric_limits<double>::infinity())};
  if (config.input_box) {
    box.lower.head(n) = config.input_box->lower;
    box.upper.head(n) = config.input_box->upper;
  }
  // Finite box for the swarm restart only.
  const double su = 5.0 * training_scale(model.embedding().u);
  const double sy = 5.0 * training_scale(model.embedding().y);
  Box swarm_box{seed.array() - 0.0, seed.array() + 0.0};
  swarm_box.lower.head(n).array() -= su;
  swarm_box.upper.head(n).array() += su;
  swarm_box.lower.tail(n).array() -= sy;
  swarm_box.upper.tail(n).array() += sy;
  swarm_box.lower = swarm_box.lower.cwiseMax(box.lower);
  swarm_box.upper = swarm_box.upper.cwiseMin(box.upper);

  RhcSolution out;
  Tightening tight = retighten(seed);
  VectorXd z = seed;
  for (int it = 0; it < config.retighten_iterations; ++it) {
    bound = tight.bound;
    OptimProblem problem;
    problem.objective = objective;
    problem.dimension = 2 * n;
    problem.bounds = box;
    problem.seeds = seeds;
    if (it > 0) problem.seeds.push_back(z);
    problem.max_iterations = config.max_iterations;
    OptimResult r = local_minimize(problem);
    if (r.status == OptimStatus::stalled || r.status == OptimStatus::failed) {
      OptimProblem global = problem;
      global.bounds = swarm_box;
      SwarmOptions so;
      so.swarm_size = config.swarm_size;
      so.iterations = config.swarm_iterations;
      so.seed = config.seed + static_cast<std::uint64_t>(it);
      so.stall_iterations = 10;
      const OptimResult g = particle_swarm(global, so);
      problem.seeds = {r.x, g.x};
      const OptimResult polished = local_minimize(problem);
      if (polished.f <= r.f) r = polished;
      out.restarted = true;
      if (r.status == OptimStatus::failed) out.flagged = true;
    }
    z = r.x;
    ++out.retightens;
    const Tightening next = retighten(z);
    const bool settled = (next.bound - tight.bound).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + tight.bound.cwiseAbs().maxCoeff());
    tight = next;
    if (settled) break;
  }

  // Compare with the seed under the final tightening.
  bound = tight.bound;
  out.seed_cost = objective(seed);
  out.cost = objective(z);
  if (!(out.cost <= out.seed_cost)) {
    z = seed;
    out.cost = out.seed_cost;
    tight = retighten(z);
    out.flagged = true;
  }
  const auto [u, y] = split(z);
  out.u = u;
  out.y = y;
  out.tightening = tight;
  expected_cost(config, model, history, u, y, phi_r, &out.posterior, &out.hat_kp);
  return out;
}

// --- black-box MPC ----------------------------------------------------------

double blackbox_cost(const ControllerConfig& config, const NarxModel& model, const History& history,
                     const VectorXd& u_seq, const VectorXd& r_seq, NarxPrediction* prediction, VectorXd* bound) {
  const NarxPrediction pred = narx_predict(model, window_inputs(history, u_seq), history.y);
  const double mu = chi2_quantile(config.p, static_cast<int>(model.future));
  const VectorXd b = config.q - pred.stdev.maxCoeff() * std::sqrt(mu) * config.H.rowwise().norm();
  const double v = quad(config.R, u_seq) + quad(config.Q, pred.mean - r_seq) +
                   config.Q.diagonal().dot(pred.stdev.cwiseAbs2()) +
                   config.soft_penalty * constraint_excess(config.H, pred.mean, b);
  if (prediction) *prediction = pred;
  if (bound) *bound = b;
  return v;
}

BlackBoxSolution solve_rhc_blackbox(const ControllerConfig& config, const NarxModel& model, const History& history,
                                    const VectorXd& r_seq, const std::optional<VectorXd>& warm) {
  config.validate();
  const Index n = model.future;
  if (config.horizon() != n) throw std::invalid_argument("solve_rhc_blackbox: controller horizon differs from the model");
  check_history(history, model.past, n, r_seq);

  auto objective = [&](const VectorXd& u) {
    const double v = blackbox_cost(config, model, history, u, r_seq);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  VectorXd seed = VectorXd::Zero(n);
  if (config.input_box) seed = config.input_box->project(seed);
  OptimProblem problem;
  problem.objective = objective;
  problem.dimension = n;
  problem.seeds = {seed};
  if (warm) {
    if (warm->size() != n) throw std::invalid_argument("solve_rhc_blackbox: warm start has the wrong size");
    problem.seeds.push_back(config.input_box ? config.input_box->project(*warm) : *warm);
  }
  problem.max_iterations = config.max_iterations;
  if (config.input_box) problem.bounds = *config.input_box;

  BlackBoxSolution out;
  OptimResult r = local_minimize(problem);
  if (r.status == OptimStatus::stalled || r.status == OptimStatus::failed) {
    OptimProblem global = problem;
    double su = 1.0;
    if (!model.steps.empty()) su = 5.0 * training_scale(model.steps.front().regressors.row(0).transpose());
    Box b{seed.array() - su, seed.array() + su};
    if (config.input_box) b = Box{b.lower.cwiseMax(config.input_box->lower), b.upper.cwiseMin(config.input_box->upper)};
    global.bounds = b;
    SwarmOptions so;
    so.swarm_size = config.swarm_size;
    so.iterations = config.swarm_iterations;
    so.seed = config.seed;
    so.stall_iterations = 10;
    const OptimResult g = particle_swarm(global, so);
    problem.seeds = {r.x, g.x};
    const OptimResult polished = local_minimize(problem);
    if (polished.f <= r.f) r = polished;
    out.restarted = true;
    if (r.status == OptimStatus::failed) out.flagged = true;
  }
  out.seed_cost = objective(seed);
  out.u = r.f <= out.seed_cost ? r.x : seed;
  NarxPrediction pred;
  out.cost = blackbox_cost(config, model, history, out.u, r_seq, &pred, &out.bound);
  out.y = pred.mean;
  out.stdev = pred.stdev;
  return out;
}

// --- subspace predictive control --------------------------------------------

SpcSolution solve_spc(const ControllerConfig& config, const ARXParams& gamma, const History& history,
                      const VectorXd& r_seq) {
  config.validate();
  const Index n = gamma.future;
  if (config.horizon() != n) throw std::invalid_argument("solve_spc: controller horizon differs from the predictor");
  check_history(history, gamma.past, n, r_seq);

  // y = G u + c with G the future-input block.
  const MatrixXd G = gamma.gamma12();
  const VectorXd c = gamma.gamma11() * history.u + gamma.gamma2 * history.y;
  const MatrixXd& H = config.H;
  auto objective = [&](const VectorXd& u) {
    const VectorXd y = G * u + c;
    return quad(config.R, u) + quad(config.Q, y - r_seq) + config.soft_penalty * constraint_excess(H, y, config.q);
  };
  auto gradient = [&](const VectorXd& u) {
    const VectorXd y = G * u + c;
    const VectorXd excess = (H * y - config.q).cwiseMax(0.0);
    return VectorXd(2.0 * (config.R * u) + 2.0 * G.transpose() * (config.Q * (y - r_seq)) +
                    2.0 * config.soft_penalty * G.transpose() * (H.transpose() * excess));
  };

  // Unconstrained minimizer as the seed.
  const MatrixXd normal = config.R + G.transpose() * config.Q * G;
  VectorXd seed = normal.ldlt().solve(G.transpose() * config.Q * (r_seq - c));
  if (!seed.allFinite()) seed = VectorXd::Zero(n);
  if (config.input_box) seed = config.input_box->project(seed);

  OptimProblem problem;
  problem.objective = objective;
  problem.gradient = gradient;
  problem.dimension = n;
  problem.seeds = {seed};
  problem.max_iterations = std::max(config.max_iterations, 500);
  problem.gradient_tolerance = 1e-10;
  if (config.input_box) problem.bounds = *config.input_box;
  const OptimResult r = local_minimize(problem);

  SpcSolution out;
  out.u = r.x;
  out.y = G * r.x + c;
  out.cost = r.f;
  return out;
}

// --- controllers ------------------------------------------------------------

ImplicitGPController::ImplicitGPController(ControllerConfig config, std::shared_ptr<const ImplicitGPModel> model)
    : config_(std::move(config)), model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("ImplicitGPController: null model");
  config_.validate();
  if (config_.horizon() != model_->future())
    throw std::invalid_argument("ImplicitGPController: controller horizon differs from the model");
  const VectorXd& y = model_->embedding().y;
  const double span = std::max(y.maxCoeff() - y.minCoeff(), 1e-6);
  grid_ = VectorXd::LinSpaced(1601, y.minCoeff() - 0.25 * span, y.maxCoeff() + 0.25 * span);
  phi_grid_ = output_posterior_mean(*model_, grid_);
}

// Root of Phi_hat(y) = target nearest to `anchor`; the closest grid value when
// the target is out of range.
double ImplicitGPController::invert(double target, double anchor) const {
  const Index n = grid_.size();
  Index best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Index i = 0; i + 1 < n; ++i) {
    const double a = phi_grid_(i) - target;
    const double b = phi_grid_(i + 1) - target;
    if (a * b > 0.0) continue;
    const double dist = std::abs(0.5 * (grid_(i) + grid_(i + 1)) - anchor);
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  if (best < 0) {
    Index k = 0;
    (phi_grid_.array() - target).abs().minCoeff(&k);
    return grid_(k);
  }
  double lo = grid_(best), hi = grid_(best + 1);
  double f_lo = phi_grid_(best) - target;
  VectorXd pt(1);
  for (int it = 0; it < 30; ++it) {
    const double mid = 0.5 * (lo + hi);
    pt(0) = mid;
    const double f_mid = output_posterior_mean(*model_, pt)(0) - target;
    if ((f_mid <= 0.0) == (f_lo <= 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

ControlAction ImplicitGPController::act(const History& history, const VectorXd& r_seq) {
  last_ = solve_rhc(config_, *model_, history, r_seq, warm_);
  warm_ = std::make_pair(shifted(last_.u), shifted(last_.y));

  ControlAction a;
  a.u_seq = last_.u;
  a.y_seq = last_.y;
  a.flagged = last_.flagged;
  const double y0 = last_.y(0);
  const double centre = output_posterior_mean(*model_, VectorXd::Constant(1, y0))(0) + last_.posterior.mean(0);
  const double sd = std::sqrt(std::max(last_.hat_kp(0, 0), 0.0));
  a.predicted = invert(centre, y0);
  const double lo = invert(centre - sd, a.predicted);
  const double hi = invert(centre + sd, a.predicted);
  a.lower = std::min({lo, hi, a.predicted});
  a.upper = std::max({lo, hi, a.predicted});
  return a;
}

BlackBoxController::BlackBoxController(ControllerConfig config, NarxModel model)
    : config_(std::move(config)), model_(std::move(model)) {
  config_.validate();
  if (config_.horizon() != model_.future)
    throw std::invalid_argument("BlackBoxController: controller horizon differs from the model");
}

ControlAction BlackBoxController::act(const History& history, const VectorXd& r_seq) {
  const BlackBoxSolution s = solve_rhc_blackbox(config_, model_, history, r_seq, warm_);
  warm_ = shifted(s.u);
  ControlAction a;
  a.u_seq = s.u;
  a.y_seq = s.y;
  a.predicted = s.y(0);
  a.lower = s.y(0) - s.stdev(0);
  a.upper = s.y(0) + s.stdev(0);
  a.flagged = s.flagged;
  return a;
}

SpcController::SpcController(ControllerConfig config, ARXParams gamma)
    : config_(std::move(config)), gamma_(std::move(gamma)) {
  config_.validate();
  if (config_.horizon() != gamma_.future)
    throw std::invalid_argument("SpcController: controller horizon differs from the predictor");
}

ControlAction SpcController::act(const History& history, const VectorXd& r_seq) {
  const SpcSolution s = solve_spc(config_, gamma_, history, r_seq);
  ControlAction a;
  a.u_seq = s.u;
  a.y_seq = s.y;
  a.predicted = s.y(0);
  a.lower = a.upper = s.y(0);
  return a;
}

// --- closed loop ------------------------------------------------------------

double ClosedLoopLog::satisfaction_rate() const {
  if (violation.empty()) return 1.0;
  const auto bad = std::count(violation.begin(), violation.end(), true);
  return 1.0 - static_cast<double>(bad) / static_cast<double>(violation.size());
}

double ClosedLoopLog::tracking_rmse() const {
  if (steps() == 0) return 0.0;
  return std::sqrt((y0 - r).squaredNorm() / static_cast<double>(steps()));
}

double ClosedLoopLog::coverage() const {
  if (steps() == 0) return 0.0;
  Index inside = 0;
  for (Index k = 0; k < steps(); ++k)
    if (y0(k) >= lower(k) && y0(k) <= upper(k)) ++inside;
  return static_cast<double>(inside) / static_cast<double>(steps());
}

ClosedLoopLog closed_loop(const HWSystem& sys, Controller& controller, const ControllerConfig& config,
                          const ReferenceFn& reference, Index steps, std::uint64_t seed) {
  sys.validate();
  config.validate();
  if (steps < 1) throw std::invalid_argument("closed_loop: steps must be >= 1");
  if (!reference) throw std::invalid_argument("closed_loop: missing reference");
  const Index past = controller.past();
  const Index n = controller.horizon();
  if (config.horizon() != n) throw std::invalid_argument("closed_loop: config horizon differs from the controller");

  // Constraint rows that only involve the first horizon step.
  std::vector<Index> first_rows;
  for (Index i = 0; i < config.H.rows(); ++i)
    if (n == 1 || config.H.row(i).tail(n - 1).cwiseAbs().maxCoeff() == 0.0) first_rows.push_back(i);

  HWPlant plant(sys, VectorXd::Zero(sys.lin.state_dim()), seed);
  History hist{VectorXd::Zero(past), VectorXd::Zero(past)};
  for (Index k = 0; k < past; ++k) hist.y(k) = plant.step(0.0).y;

  ClosedLoopLog log;
  log.controller = controller.name();
  log.u.resize(steps);
  log.y.resize(steps);
  log.y0.resize(steps);
  log.r.resize(steps);
  log.predicted.resize(steps);
  log.lower.resize(steps);
  log.upper.resize(steps);
  log.solve_seconds.resize(steps);
  log.violation.assign(static_cast<std::size_t>(steps), false);
  log.flagged.assign(static_cast<std::size_t>(steps), false);

  VectorXd r_seq(n);
  for (Index k = 0; k < steps; ++k) {
    for (Index j = 0; j < n; ++j) r_seq(j) = reference(k + j);
    const auto t0 = std::chrono::steady_clock::now();
    const ControlAction a = controller.act(hist, r_seq);
    const auto t1 = std::chrono::steady_clock::now();
    const double u = a.u_seq(0);
    const HWPlant::Sample s = plant.step(u);

    log.u(k) = u;
    log.y(k) = s.y;
    log.y0(k) = s.y0;
    log.r(k) = r_seq(0);
    log.predicted(k) = a.predicted;
    log.lower(k) = a.lower;
    log.upper(k) = a.upper;
    log.solve_seconds(k) = std::chrono::duration<double>(t1 - t0).count();
    log.flagged[static_cast<std::size_t>(k)] = a.flagged;
    for (Index i : first_rows)
      if (config.H(i, 0) * s.y0 > config.q(i)) log.violation[static_cast<std::size_t>(k)] = true;

    if (past > 0) {
      std::rotate(hist.u.data(), hist.u.data() + 1, hist.u.data() + past);
      std::rotate(hist.y.data(), hist.y.data() + 1, hist.y.data() + past);
      hist.u(past - 1) = u;
      hist.y(past - 1) = s.y;
    }
  }
  return log;
}

}  // namespace hwgp
