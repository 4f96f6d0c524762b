#include "hwgp/predict.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hwgp/errors.hpp"

namespace hwgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::ml:
      return "ml";
    case Criterion::mmse:
      return "mmse";
    case Criterion::mvu_trace:
      return "mvu";
  }
  return "?";
}

Criterion criterion_from_name(const std::string& name) {
  std::string k;
  for (char c : name) k += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (k == "ml") return Criterion::ml;
  if (k == "mmse") return Criterion::mmse;
  if (k == "mvu" || k == "mvu-trace" || k == "mvu_trace") return Criterion::mvu_trace;
  throw std::invalid_argument("unknown prediction criterion '" + name + "'");
}

double criterion_value(const ImplicitGPModel& model, const GaussianPosterior& posterior, Criterion criterion,
                       double mvu_weight) {
  const VectorXd& m = posterior.mean;
  switch (criterion) {
    case Criterion::ml: {
      const JitteredCholesky chol(posterior.cov);
      return chol.log_determinant() + m.dot(chol.solve(m).col(0));
    }
    case Criterion::mmse:
      return model.hat_kp(posterior).trace() + m.squaredNorm();
    case Criterion::mvu_trace:
      return model.hat_kp(posterior).trace() + mvu_weight * m.squaredNorm();
  }
  return std::numeric_limits<double>::infinity();
}

namespace {

double sample_stdev(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

double training_output_scale(const DataEmbedding& e) {
  const VectorXd y = e.y.size() > 1 ? e.y : VectorXd(e.Hy.reshaped());
  return std::max(sample_stdev(y), 1e-6);
}

}  // namespace

Prediction predict(const ImplicitGPModel& model, const VectorXd& u, const VectorXd& y_past,
                   const PredictOptions& options) {
  if (u.size() != model.depth() || y_past.size() != model.past())
    throw std::invalid_argument("predict: window lengths do not match the model");
  const Index n = model.future();
  const VectorXd seed = subspace_predict(model.hyper().gamma, u, y_past);

  double weight = options.criterion == Criterion::mvu_trace ? options.mvu_initial_weight : 0.0;
  auto objective_at = [&](const VectorXd& yf) {
    try {
      const double v = criterion_value(model, model.posterior_f(model.make_query(u, y_past, yf)),
                                       options.criterion, weight);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const double half_width = options.box_scale * training_output_scale(model.embedding());
  Box box{seed.array() - half_width, seed.array() + half_width};

  Prediction out;
  bool flagged = false;
  VectorXd x = seed;
  const int stages = options.criterion == Criterion::mvu_trace ? 64 : 1;
  for (int stage = 0; stage < stages; ++stage) {
    OptimProblem problem;
    problem.objective = objective_at;
    problem.dimension = n;
    problem.bounds = box;
    problem.seeds = {x};
    if (stage > 0) problem.seeds.push_back(seed);
    problem.max_iterations = options.polish_iterations;
    if (stage == 0) out.seed_objective = objective_at(seed);

    if (options.global_search && stage == 0) {
      SwarmOptions so;
      so.swarm_size = options.swarm_size;
      so.iterations = options.swarm_iterations;
      so.stall_iterations = options.stall_iterations;
      so.seed = options.seed;
      const OptimResult g = particle_swarm(problem, so);
      if (std::isfinite(g.f) && g.f < objective_at(x)) problem.seeds.push_back(g.x);
    }
    const OptimResult r = local_minimize(problem);
    if (r.status == OptimStatus::failed) flagged = true;
    x = r.x;
    if (options.criterion != Criterion::mvu_trace) break;

    const GaussianPosterior post = model.posterior_f(model.make_query(u, y_past, x));
    if (post.mean.norm() <= options.mvu_tolerance) break;
    if (weight * 10.0 > options.mvu_max_weight * (1.0 + 1e-12)) {
      flagged = true;
      break;
    }
    weight *= 10.0;
  }

  out.y_f = x;
  out.posterior = model.posterior_f(model.make_query(u, y_past, x));
  out.hat_kp = model.hat_kp(out.posterior);
  out.objective = criterion_value(model, out.posterior, options.criterion, weight);
  if (options.criterion == Criterion::mvu_trace) {
    // Both values under the final penalty weight.
    out.seed_objective = objective_at(seed);
    if (out.posterior.mean.norm() > options.mvu_tolerance) flagged = true;
  }
  out.flagged = flagged;
  return out;
}

VectorXd predict_hammerstein(const ImplicitGPModel& model, const VectorXd& u, const VectorXd& y_past) {
  if (model.structure().output_kernel || !model.structure().identity_output_mean())
    throw std::invalid_argument("predict_hammerstein: model has an output nonlinearity prior");
  if (u.size() != model.depth() || y_past.size() != model.past())
    throw std::invalid_argument("predict_hammerstein: window lengths do not match the model");
  const ARXParams& g = model.hyper().gamma;
  // Without k_y the cross-covariance does not depend on y_f.
  const MatrixXd k = model.cross_cov(model.make_query(u, y_past, VectorXd::Zero(model.future())));
  return g.gamma1 * model.structure().apply_input_mean(u) + g.gamma2 * y_past - k.transpose() * model.weights();
}

namespace {

// kappa = (I kron A) k(vec(H), points): (M rows(A)) x points.
MatrixXd kappa(const KernelSpec& spec, const MatrixXd& windows, const MatrixXd& A, const VectorXd& points) {
  const Index M = windows.cols();
  const Index L = windows.rows();
  const Index r = A.rows();
  if (spec.family == KernelFamily::zero) return MatrixXd::Zero(M * r, points.size());
  const MatrixXd g = kernel_block(spec, windows.reshaped(), points);
  MatrixXd out(M * r, points.size());
  for (Index j = 0; j < M; ++j) out.middleRows(j * r, r).noalias() = A * g.middleRows(j * L, L);
  return out;
}

PointwisePosterior pointwise(const ImplicitGPModel& model, const KernelSpec& spec, const MatrixXd& kap,
                             const VectorXd& prior_mean, const VectorXd& points) {
  PointwisePosterior p;
  p.mean = prior_mean - kap.transpose() * model.weights();
  const MatrixXd V = model.lambda_factor().half_solve(kap);
  p.stdev.resize(points.size());
  for (Index i = 0; i < points.size(); ++i) {
    const double prior_var = spec.family == KernelFamily::zero ? 0.0 : kernel_eval(spec, points(i), points(i));
    p.stdev(i) = std::sqrt(std::max(prior_var - V.col(i).squaredNorm(), 0.0));
  }
  return p;
}

}  // namespace

PointwisePosterior input_nonlinearity_posterior(const ImplicitGPModel& model, const VectorXd& points) {
  const KernelSpec spec = model.structure().input_spec(model.hyper().length_u);
  const MatrixXd kap = kappa(spec, model.embedding().Hu, model.hyper().gamma.gamma1, points);
  return pointwise(model, spec, kap, model.structure().apply_input_mean(points), points);
}

PointwisePosterior output_nonlinearity_posterior(const ImplicitGPModel& model, const VectorXd& points) {
  const KernelSpec spec = model.structure().output_spec(model.hyper().length_y);
  const MatrixXd kap = kappa(spec, model.embedding().Hy, output_operator(model.hyper().gamma), points);
  return pointwise(model, spec, kap, model.structure().apply_output_mean(points), points);
}

VectorXd output_posterior_mean(const ImplicitGPModel& model, const VectorXd& points) {
  const KernelSpec spec = model.structure().output_spec(model.hyper().length_y);
  const MatrixXd kap = kappa(spec, model.embedding().Hy, output_operator(model.hyper().gamma), points);
  return model.structure().apply_output_mean(points) - kap.transpose() * model.weights();
}

Recovery recover_nonlinearities(const ImplicitGPModel& model, const VectorXd& u_grid, const VectorXd& y_grid) {
  if (u_grid.size() == 0 || y_grid.size() == 0) throw std::invalid_argument("recover_nonlinearities: empty grid");
  return {input_nonlinearity_posterior(model, u_grid), output_nonlinearity_posterior(model, y_grid)};
}

double scaled_rmse(const VectorXd& estimate, const VectorXd& truth, double* scale) {
  if (estimate.size() != truth.size() || estimate.size() == 0)
    throw std::invalid_argument("scaled_rmse: vectors must be nonempty and of equal length");
  const double ee = estimate.squaredNorm();
  const double c = ee > 0.0 ? estimate.dot(truth) / ee : 0.0;
  if (scale) *scale = c;
  return std::sqrt((c * estimate - truth).squaredNorm() / static_cast<double>(truth.size()));
}

}  // namespace hwgp
