#include "hwgp/gpcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hwgp/errors.hpp"
#include "hwgp/hankel.hpp"
#include "hwgp/solvers.hpp"

namespace hwgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void KernelSpec::validate() const {
  switch (family) {
    case KernelFamily::squared_exponential:
      if (!(length_scale > 0.0) || !std::isfinite(length_scale))
        throw std::invalid_argument("KernelSpec: SE length scale must be > 0");
      break;
    case KernelFamily::tc:
      if (!(lambda >= 0.0)) throw std::invalid_argument("KernelSpec: TC lambda must be >= 0");
      if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("KernelSpec: TC alpha must be in [0, 1)");
      break;
    case KernelFamily::zero:
      break;
  }
}

double kernel_eval(const KernelSpec& spec, double a, double b) {
  spec.validate();
  switch (spec.family) {
    case KernelFamily::squared_exponential: {
      const double d = (a - b) / spec.length_scale;
      return std::exp(-0.5 * d * d);
    }
    case KernelFamily::tc:
      return spec.lambda * std::pow(spec.alpha, std::max(a, b));
    case KernelFamily::zero:
      return 0.0;
  }
  return 0.0;
}

MatrixXd kernel_block(const KernelSpec& spec, const VectorXd& xs, const VectorXd& ys) {
  spec.validate();
  if (spec.family == KernelFamily::zero) return MatrixXd::Zero(xs.size(), ys.size());
  MatrixXd K(xs.size(), ys.size());
  if (spec.family == KernelFamily::squared_exponential) {
    const double scale = -0.5 / (spec.length_scale * spec.length_scale);
    for (Eigen::Index j = 0; j < ys.size(); ++j)
      K.col(j) = ((xs.array() - ys(j)).square() * scale).exp();
    return K;
  }
  for (Eigen::Index j = 0; j < ys.size(); ++j)
    for (Eigen::Index i = 0; i < xs.size(); ++i) K(i, j) = kernel_eval(spec, xs(i), ys(j));
  return K;
}

MatrixXd symmetrized(const MatrixXd& A) { return 0.5 * (A + A.transpose()); }

JitteredCholesky::JitteredCholesky(const MatrixXd& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("JitteredCholesky: matrix must be square");
  if (!A.allFinite()) throw NumericalError("JitteredCholesky: matrix has non-finite entries");
  const Eigen::Index n = A.rows();
  double scale = n > 0 ? A.diagonal().mean() : 1.0;
  if (!(scale > 0.0)) scale = 1.0;
  for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
    jitter_ = rel * scale;
    MatrixXd shifted = A;
    shifted.diagonal().array() += jitter_;
    llt_.compute(shifted);
    if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > 0.0) return;
  }
  throw NumericalError("JitteredCholesky: matrix not positive definite after jitter escalation");
}

MatrixXd JitteredCholesky::half_solve(const MatrixXd& b) const { return llt_.matrixL().solve(b); }

double JitteredCholesky::log_determinant() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

MatrixXd JitteredCholesky::inverse() const {
  const Eigen::Index n = size();
  MatrixXd Linv = llt_.matrixL().solve(MatrixXd::Identity(n, n));
  MatrixXd inv = MatrixXd::Zero(n, n);
  inv.selfadjointView<Eigen::Lower>().rankUpdate(Linv.transpose());
  return inv.selfadjointView<Eigen::Lower>();
}

GaussianPosterior gp_posterior(const VectorXd& prior_mean_query, const VectorXd& prior_mean_data,
                               const MatrixXd& k_qq, const MatrixXd& k_dq, const MatrixXd& K_dd,
                               const MatrixXd& noise_cov, const VectorXd& observations) {
  const Eigen::Index q = prior_mean_query.size();
  const Eigen::Index d = prior_mean_data.size();
  if (k_qq.rows() != q || k_qq.cols() != q || k_dq.rows() != d || k_dq.cols() != q || K_dd.rows() != d ||
      K_dd.cols() != d || noise_cov.rows() != d || noise_cov.cols() != d || observations.size() != d)
    throw std::invalid_argument("gp_posterior: inconsistent shapes");
  const JitteredCholesky chol(K_dd + noise_cov);
  const MatrixXd V = chol.half_solve(k_dq);
  const VectorXd w = chol.half_solve(observations - prior_mean_data);
  GaussianPosterior post;
  post.mean = prior_mean_query + V.transpose() * w;
  post.cov = symmetrized(k_qq - V.transpose() * V);
  return post;
}

// --- NARX ---------------------------------------------------------------

namespace {

MatrixXd squared_distances(const MatrixXd& X, const MatrixXd& Y) {
  const VectorXd xn = X.colwise().squaredNorm();
  const VectorXd yn = Y.colwise().squaredNorm();
  MatrixXd D = (-2.0 * X.transpose() * Y).colwise() + xn;
  D.rowwise() += yn.transpose();
  return D.cwiseMax(0.0);
}

struct NarxFactor {
  Eigen::LLT<MatrixXd> llt;
  double mean = 0.0;
  VectorXd alpha;
  double nll = std::numeric_limits<double>::infinity();
};

NarxFactor narx_factor(const MatrixXd& dist2, const VectorXd& y, double length, double signal_var,
                       double noise_var) {
  NarxFactor f;
  const Eigen::Index n = y.size();
  MatrixXd K = signal_var * (dist2 * (-0.5 / (length * length))).array().exp().matrix();
  K.diagonal().array() += noise_var;
  f.llt.compute(K);
  if (f.llt.info() != Eigen::Success) return f;
  const VectorXd ones = VectorXd::Ones(n);
  const VectorXd Kinv1 = f.llt.solve(ones);
  const VectorXd Kinvy = f.llt.solve(y);
  f.mean = ones.dot(Kinvy) / ones.dot(Kinv1);
  const VectorXd r = y.array() - f.mean;
  f.alpha = f.llt.solve(r);
  const double logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
  f.nll = 0.5 * r.dot(f.alpha) + 0.5 * logdet;
  if (!std::isfinite(f.nll)) f.nll = std::numeric_limits<double>::infinity();
  return f;
}

double stdev(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

double narx_negative_log_likelihood(const MatrixXd& regressors, const VectorXd& targets,
                                    const Eigen::Vector3d& log_params) {
  const MatrixXd dist2 = squared_distances(regressors, regressors);
  return narx_factor(dist2, targets, std::exp(log_params(0)), std::exp(log_params(1)), std::exp(log_params(2)))
      .nll;
}

NarxStepModel fit_narx_step(const MatrixXd& regressors, const VectorXd& targets) {
  if (regressors.cols() != targets.size() || targets.size() < 2)
    throw std::invalid_argument("fit_narx_step: need at least two training pairs");
  const MatrixXd dist2 = squared_distances(regressors, regressors);
  const double y_std = std::max(stdev(targets), 1e-6);

  // Initial values follow the usual constant-basis defaults: mean per-feature
  // spread for the length scale, std(y)/sqrt(2) for both amplitudes.
  double l0 = 0.0;
  for (Eigen::Index i = 0; i < regressors.rows(); ++i) l0 += stdev(regressors.row(i).transpose());
  l0 = std::max(l0 / static_cast<double>(regressors.rows()), 1e-3);
  const double a0 = 0.5 * y_std * y_std;

  auto objective = [&](const VectorXd& p) {
    return narx_factor(dist2, targets, std::exp(p(0)), std::exp(p(1)), std::exp(p(2))).nll;
  };
  OptimProblem problem;
  problem.objective = objective;
  problem.dimension = 3;
  problem.bounds = Box{Eigen::Vector3d(std::log(1e-3 * l0), std::log(1e-8 * a0), 2.0 * std::log(1e-2 * y_std)),
                       Eigen::Vector3d(std::log(1e3 * l0), std::log(1e4 * a0), std::log(1e2 * a0))};
  const double log_a0 = std::log(a0);
  // The default start often settles in a short-length, noise-dominated
  // optimum; long length scales and a small noise level are tried as well.
  const double log_n_small = std::log(1e-2 * a0);
  for (double f : {1.0, 0.5, 2.0, 10.0}) {
    problem.seeds.push_back(Eigen::Vector3d(std::log(f * l0), log_a0, log_a0));
    problem.seeds.push_back(Eigen::Vector3d(std::log(f * l0), log_a0, log_n_small));
  }
  problem.max_iterations = 200;

  NarxStepModel m;
  m.regressors = regressors;
  double length = l0;
  double signal = a0;
  double noise = a0;
  bool ok = false;
  try {
    const OptimResult r = local_minimize(problem);
    if (r.status != OptimStatus::failed && std::isfinite(r.f)) {
      length = std::exp(r.x(0));
      signal = std::exp(r.x(1));
      noise = std::exp(r.x(2));
      ok = true;
    }
  } catch (const std::exception&) {
    ok = false;
  }
  if (!ok) {
    std::vector<double> d;
    for (Eigen::Index j = 0; j < dist2.cols(); ++j)
      for (Eigen::Index i = j + 1; i < dist2.rows(); ++i) d.push_back(std::sqrt(dist2(i, j)));
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    length = std::max(d[d.size() / 2], 1e-3);
    signal = y_std * y_std;
    noise = 0.1 * y_std * y_std;
    m.fallback = true;
  }
  NarxFactor f = narx_factor(dist2, targets, length, signal, noise);
  if (f.llt.info() != Eigen::Success) throw NumericalError("fit_narx_step: final factorization failed");
  m.length_scale = length;
  m.signal_var = signal;
  m.noise_var = noise;
  m.mean = f.mean;
  m.alpha = f.alpha;
  m.chol_lower = f.llt.matrixL();
  return m;
}

NarxModel fit_narx_gp(const Trajectory& data, Eigen::Index past, Eigen::Index future) {
  const Eigen::Index L = past + future;
  if (data.u.size() != data.y.size() || data.u.size() < L + 1)
    throw std::invalid_argument("fit_narx_gp: data shorter than the prediction window");
  const MatrixXd Hu = build_hankel(data.u, L);
  const MatrixXd Hy = build_hankel(data.y, L);
  MatrixXd X(L + past, Hu.cols());
  X << Hu, Hy.topRows(past);

  NarxModel model;
  model.past = past;
  model.future = future;
  for (Eigen::Index l = 0; l < future; ++l) model.steps.push_back(fit_narx_step(X, Hy.row(past + l).transpose()));
  return model;
}

NarxPrediction narx_predict(const NarxModel& model, const VectorXd& u, const VectorXd& y_past) {
  const Eigen::Index L = model.past + model.future;
  if (u.size() != L || y_past.size() != model.past) throw std::invalid_argument("narx_predict: dimension mismatch");
  VectorXd x(L + model.past);
  x << u, y_past;
  NarxPrediction out;
  out.mean.resize(model.future);
  out.stdev.resize(model.future);
  for (Eigen::Index l = 0; l < model.future; ++l) {
    const NarxStepModel& s = model.steps[l];
    const VectorXd d2 = (s.regressors.colwise() - x).colwise().squaredNorm();
    const VectorXd k = s.signal_var * (d2.array() * (-0.5 / (s.length_scale * s.length_scale))).exp();
    const VectorXd v = s.chol_lower.triangularView<Eigen::Lower>().solve(k);
    const double latent = std::max(s.signal_var - v.squaredNorm(), 0.0);
    out.mean(l) = s.mean + k.dot(s.alpha);
    out.stdev(l) = std::sqrt(latent + s.noise_var);
  }
  return out;
}

}  // namespace hwgp
