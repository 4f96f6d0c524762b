#include "hwgp/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hwgp/errors.hpp"
#include "hwgp/predict.hpp"

namespace hwgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index packed_length(Index past, Index future) { return 2 * past * future + future; }

ARXParams toeplitz_project(const ARXParams& p) {
  ARXParams out = p;
  const Index f = p.future;
  const Index off = p.input_dim * p.past;
  for (Index d = 0; d < f; ++d) {
    double sum = 0.0;
    for (Index i = d; i < f; ++i) sum += p.gamma1(i, off + i - d);
    const double mean = sum / static_cast<double>(f - d);
    for (Index i = d; i < f; ++i) out.gamma1(i, off + i - d) = mean;
  }
  for (Index i = 0; i < f; ++i)
    for (Index j = i + 1; j < f; ++j) out.gamma1(i, off + j) = 0.0;
  return out;
}

VectorXd pack_gamma(const ARXParams& p, bool* projected) {
  const Index L0 = p.past;
  const Index Lf = p.future;
  if (p.input_dim != 1 || p.gamma1.rows() != Lf || p.gamma1.cols() != L0 + Lf || p.gamma2.rows() != Lf ||
      p.gamma2.cols() != L0)
    throw std::invalid_argument("pack_gamma: only SISO operators with consistent shapes are supported");
  ARXParams q = toeplitz_project(p);
  const bool was_projected = (q.gamma1 - p.gamma1).cwiseAbs().maxCoeff() > 1e-9;
  if (projected) *projected = was_projected;
  if (!was_projected) q = p;

  VectorXd g(packed_length(L0, Lf));
  Index k = 0;
  for (Index i = 0; i < Lf; ++i)
    for (Index j = 0; j < L0; ++j) g(k++) = q.gamma1(i, j);
  for (Index i = 0; i < Lf; ++i)
    for (Index j = 0; j < L0; ++j) g(k++) = q.gamma2(i, j);
  for (Index j = 0; j < Lf; ++j) g(k++) = q.gamma1(Lf - 1, L0 + j);
  return g;
}

ARXParams unpack_gamma(const VectorXd& gamma, Index past, Index future) {
  if (past < 0 || future < 1 || gamma.size() != packed_length(past, future))
    throw std::invalid_argument("unpack_gamma: vector length does not match the window sizes");
  ARXParams p;
  p.past = past;
  p.future = future;
  p.gamma1 = MatrixXd::Zero(future, past + future);
  p.gamma2.resize(future, past);
  Index k = 0;
  for (Index i = 0; i < future; ++i)
    for (Index j = 0; j < past; ++j) p.gamma1(i, j) = gamma(k++);
  for (Index i = 0; i < future; ++i)
    for (Index j = 0; j < past; ++j) p.gamma2(i, j) = gamma(k++);
  const VectorXd g12 = gamma.tail(future);
  for (Index i = 0; i < future; ++i)
    for (Index j = 0; j <= i; ++j) p.gamma1(i, past + j) = g12(future - 1 - (i - j));
  return p;
}

void Zeta::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("Zeta: lambda must be >= 0");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("Zeta: alpha must be in [0, 1)");
}

MatrixXd tc_block(Index m, Index n, const Zeta& zeta) {
  zeta.validate();
  if (m < n) throw std::invalid_argument("tc_block: need m >= n");
  const Index s = m - n + 1;
  MatrixXd S(s, s);
  for (Index i = 1; i <= s; ++i)
    for (Index j = 1; j <= s; ++j)
      S(i - 1, j - 1) = zeta.lambda * std::pow(zeta.alpha, static_cast<double>(m + 1 - std::min(i, j)));
  return S;
}

MatrixXd build_S_gamma(Index past, Index future, const Zeta& zeta) {
  zeta.validate();
  const Index n = packed_length(past, future);
  MatrixXd S = MatrixXd::Zero(n, n);
  Index at = 0;
  for (int rep = 0; rep < 2; ++rep) {
    for (Index i = 1; i <= future && past > 0; ++i) {
      S.block(at, at, past, past) = tc_block(past + i - 1, i, zeta);
      at += past;
    }
  }
  S.block(at, at, future, future) = tc_block(future - 1, 0, zeta);
  return S;
}

MatrixXd prior_precision(const MatrixXd& S_gamma) {
  const Index n = S_gamma.rows();
  if (S_gamma.cols() != n) throw std::invalid_argument("prior_precision: matrix must be square");
  const double scale = n > 0 ? S_gamma.diagonal().cwiseAbs().mean() : 0.0;
  Eigen::LLT<MatrixXd> llt(S_gamma);
  if (scale > 0.0 && llt.info() == Eigen::Success &&
      llt.matrixLLT().diagonal().minCoeff() > 1e-7 * std::sqrt(scale))
    return llt.solve(MatrixXd::Identity(n, n));
  const double ridge = 1e-10 * (scale > 0.0 ? scale : 1.0);
  MatrixXd reg = S_gamma;
  reg.diagonal().array() += ridge;
  return reg.completeOrthogonalDecomposition().pseudoInverse();
}

double jmapml_objective(const ImplicitGPModel& model, const MatrixXd& S_inverse) {
  double value = model.lambda_factor().log_determinant() + model.prior_mean_data().dot(model.weights());
  if (S_inverse.size() > 0) {
    const VectorXd g = pack_gamma(model.hyper().gamma);
    if (S_inverse.rows() != g.size() || S_inverse.cols() != g.size())
      throw std::invalid_argument("jmapml_objective: hyperprior precision has wrong size");
    value += g.dot(S_inverse * g);
  }
  return value;
}

// --- fast objective -------------------------------------------------------

namespace {

MatrixXd sample_sq_distances(const VectorXd& x) {
  const Index n = x.size();
  MatrixXd D(n, n);
  for (Index j = 0; j < n; ++j) D.col(j) = (x.array() - x(j)).square();
  return D;
}

VectorXd chain_to_gamma(const MatrixXd& gG1, const MatrixXd& gG2, Index past, Index future) {
  VectorXd g(packed_length(past, future));
  Index k = 0;
  for (Index i = 0; i < future; ++i)
    for (Index j = 0; j < past; ++j) g(k++) = gG1(i, j);
  for (Index i = 0; i < future; ++i)
    for (Index j = 0; j < past; ++j) g(k++) = gG2(i, j);
  for (Index m = 0; m < future; ++m) {
    const Index d = future - 1 - m;
    double s = 0.0;
    for (Index i = d; i < future; ++i) s += gG1(i, past + i - d);
    g(k++) = s;
  }
  return g;
}

// Sum over the window blocks of W * (I kron A) * G rows: the gradient of
// tr(W K) with K = window_sandwich(A, G) with respect to A is twice this.
MatrixXd sandwich_gradient(const MatrixXd& W, const MatrixXd& A, const MatrixXd& G, Index columns) {
  const Index r = A.rows();
  const Index L = A.cols();
  MatrixXd P(columns * r, G.cols());
  for (Index j = 0; j < columns; ++j) P.middleRows(j * r, r).noalias() = A * G.middleRows(j, L);
  const MatrixXd WP = W * P;
  MatrixXd out = MatrixXd::Zero(r, L);
  for (Index j = 0; j < columns; ++j) out += WP.block(j * r, j, r, L);
  return 2.0 * out;
}

}  // namespace

JmapmlObjective::JmapmlObjective(const DataEmbedding& embedding, MatrixXd S_inverse, ModelStructure structure)
    : past_(embedding.past),
      future_(embedding.future),
      columns_(embedding.columns()),
      S_inverse_(std::move(S_inverse)),
      structure_(std::move(structure)) {
  const Index L = embedding.depth();
  if (embedding.input_dim != 1 || embedding.output_dim != 1)
    throw std::invalid_argument("JmapmlObjective: only SISO embeddings are supported");
  if (embedding.u.size() != embedding.samples() || embedding.y.size() != embedding.u.size() ||
      embedding.u.size() < L || build_hankel(embedding.u, L) != embedding.Hu ||
      build_hankel(embedding.y, L) != embedding.Hy)
    throw std::invalid_argument("JmapmlObjective: embedding is not the Hankel embedding of its raw data");
  const Index n = packed_length(past_, future_);
  if (S_inverse_.size() > 0 && (S_inverse_.rows() != n || S_inverse_.cols() != n))
    throw std::invalid_argument("JmapmlObjective: hyperprior precision has wrong size");
  Du_ = sample_sq_distances(embedding.u);
  Dy_ = sample_sq_distances(embedding.y);
  Mu_ = structure_.apply_input_mean(embedding.Hu);
  My_ = structure_.apply_output_mean(embedding.Hy);
}

VectorXd JmapmlObjective::theta(const HyperParams& hyper) const {
  hyper.validate(past_, future_);
  VectorXd t(dimension());
  t(0) = std::log(hyper.length_u);
  t(1) = std::log(hyper.length_y);
  t(2) = std::log(hyper.noise_var);
  t.tail(t.size() - 3) = pack_gamma(hyper.gamma);
  return t;
}

HyperParams JmapmlObjective::hyper(const VectorXd& theta) const {
  if (theta.size() != dimension()) throw std::invalid_argument("JmapmlObjective: theta has wrong length");
  HyperParams h;
  h.length_u = std::exp(theta(0));
  h.length_y = std::exp(theta(1));
  h.noise_var = std::exp(theta(2));
  h.gamma = unpack_gamma(theta.tail(theta.size() - 3), past_, future_);
  return h;
}

const JmapmlObjective::Eval& JmapmlObjective::evaluate(const VectorXd& theta) const {
  if (cache_ && cache_->theta.size() == theta.size() && cache_->theta == theta) return *cache_;
  if (theta.size() != dimension()) throw std::invalid_argument("JmapmlObjective: theta has wrong length");
  Eval e;
  e.theta = theta;
  e.gamma = unpack_gamma(theta.tail(theta.size() - 3), past_, future_);
  e.Ay = output_operator(e.gamma);
  const double lu = std::exp(theta(0));
  const double ly = std::exp(theta(1));
  const double s2 = std::exp(theta(2));
  const Index M = columns_;

  MatrixXd Lambda = noise_cov(e.gamma.gamma2, s2, M);
  if (structure_.input_kernel) {
    e.Gu = (Du_ * (-0.5 / (lu * lu))).array().exp().matrix();
    Lambda += window_sandwich(e.gamma.gamma1, e.Gu, M);
  }
  if (structure_.output_kernel) {
    e.Gy = (Dy_ * (-0.5 / (ly * ly))).array().exp().matrix();
    Lambda += window_sandwich(e.Ay, e.Gy, M);
  }
  const VectorXd m = (e.gamma.gamma1 * Mu_ + e.Ay * My_).reshaped();

  if (Lambda.allFinite()) {
    try {
      e.chol.emplace(symmetrized(Lambda));
      e.alpha = e.chol->solve(m);
      double v = e.chol->log_determinant() + m.dot(e.alpha);
      if (S_inverse_.size() > 0) {
        const VectorXd g = theta.tail(theta.size() - 3);
        v += g.dot(S_inverse_ * g);
      }
      if (std::isfinite(v)) e.value = v;
    } catch (const NumericalError&) {
      e.chol.reset();
    }
  }
  cache_ = std::move(e);
  return *cache_;
}

double JmapmlObjective::value(const VectorXd& theta) const { return evaluate(theta).value; }

VectorXd JmapmlObjective::gradient(const VectorXd& theta) const {
  const Eval& e = evaluate(theta);
  VectorXd grad = VectorXd::Zero(dimension());
  if (!std::isfinite(e.value) || !e.chol) return grad;

  const Index r = future_;
  const Index M = columns_;
  const Index L0 = past_;
  const double lu = std::exp(theta(0));
  const double ly = std::exp(theta(1));
  const double s2 = std::exp(theta(2));
  const MatrixXd& G1 = e.gamma.gamma1;
  const MatrixXd& G2 = e.gamma.gamma2;

  MatrixXd W = e.chol->inverse();
  W.noalias() -= e.alpha * e.alpha.transpose();

  MatrixXd gG1 = MatrixXd::Zero(r, G1.cols());
  MatrixXd gAy = MatrixXd::Zero(r, e.Ay.cols());
  if (structure_.input_kernel) {
    const MatrixXd dG = e.Gu.cwiseProduct(Du_) / (lu * lu);
    grad(0) = W.cwiseProduct(window_sandwich(G1, dG, M)).sum();
    gG1 += sandwich_gradient(W, G1, e.Gu, M);
  }
  if (structure_.output_kernel) {
    const MatrixXd dG = e.Gy.cwiseProduct(Dy_) / (ly * ly);
    grad(1) = W.cwiseProduct(window_sandwich(e.Ay, dG, M)).sum();
    gAy += sandwich_gradient(W, e.Ay, e.Gy, M);
  }

  MatrixXd Wsum = MatrixXd::Zero(r, r);
  for (Index j = 0; j < M; ++j) Wsum += W.block(j * r, j * r, r, r);
  const MatrixXd C = G2 * G2.transpose() + MatrixXd::Identity(r, r);
  grad(2) = s2 * Wsum.cwiseProduct(C).sum();

  const Eigen::Map<const MatrixXd> A_alpha(e.alpha.data(), r, M);
  gG1 += 2.0 * A_alpha * Mu_.transpose();
  MatrixXd gG2 = gAy.leftCols(L0) + 2.0 * s2 * Wsum * G2 + 2.0 * A_alpha * My_.topRows(L0).transpose();

  VectorXd gg = chain_to_gamma(gG1, gG2, past_, future_);
  if (S_inverse_.size() > 0) gg += 2.0 * (S_inverse_ * theta.tail(theta.size() - 3));
  grad.tail(grad.size() - 3) = gg;
  return grad;
}

// --- fitting --------------------------------------------------------------

namespace {

double signal_stdev(const VectorXd& v) {
  if (v.size() < 2) return 1.0;
  const double s = std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
  return s > 1e-12 ? s : 1.0;
}

}  // namespace

HyperParams initial_hyper(const DataEmbedding& embedding, double min_noise_var) {
  HyperParams h;
  h.gamma = toeplitz_project(fit_subspace(embedding.Hu, embedding.Hy, embedding.past, embedding.future));
  const MatrixXd R = embedding.Hyf() - h.gamma.gamma1 * embedding.Hu - h.gamma.gamma2 * embedding.Hyp();
  h.noise_var = std::max(R.squaredNorm() / static_cast<double>(std::max<Index>(R.size(), 1)), min_noise_var);
  h.length_u = 1.0;
  h.length_y = 1.0;
  return h;
}

JmapmlFit fit_jmapml(const DataEmbedding& embedding, const Zeta& zeta, const JmapmlOptions& options,
                     const ModelStructure& structure, const std::optional<HyperParams>& init) {
  if (options.starts < 1) throw std::invalid_argument("fit_jmapml: need at least one start");
  if (!(options.min_noise_ratio > 0.0) || !(options.max_noise_ratio > options.min_noise_ratio))
    throw std::invalid_argument("fit_jmapml: invalid noise-variance bounds");
  if (!(options.min_length_ratio > 0.0) || !(options.max_length_ratio > options.min_length_ratio))
    throw std::invalid_argument("fit_jmapml: invalid length-scale bounds");
  zeta.validate();
  const double sy = signal_stdev(embedding.y.size() > 1 ? embedding.y : VectorXd(embedding.Hy.reshaped()));
  const double min_noise = options.min_noise_ratio * sy * sy;
  const HyperParams start = init ? *init : initial_hyper(embedding, min_noise);
  MatrixXd S_inv;
  if (options.use_hyperprior) S_inv = prior_precision(build_S_gamma(embedding.past, embedding.future, zeta));
  const JmapmlObjective objective(embedding, S_inv, structure);

  const Index n = objective.dimension();
  Box box{VectorXd::Constant(n, -std::numeric_limits<double>::infinity()),
          VectorXd::Constant(n, std::numeric_limits<double>::infinity())};
  const double su = signal_stdev(embedding.u.size() > 1 ? embedding.u : VectorXd(embedding.Hu.reshaped()));
  box.lower(0) = std::log(options.min_length_ratio * su);
  box.upper(0) = std::log(options.max_length_ratio * su);
  box.lower(1) = std::log(options.min_length_ratio * sy);
  box.upper(1) = std::log(options.max_length_ratio * sy);
  box.lower(2) = std::log(min_noise);
  box.upper(2) = std::log(options.max_noise_ratio * sy * sy);

  const VectorXd theta0 = box.project(objective.theta(start));
  std::vector<VectorXd> seeds{theta0};
  const bool any_kernel = structure.input_kernel || structure.output_kernel;
  const double factors[] = {0.5, 2.0};
  for (int s = 1; s < options.starts && any_kernel; ++s) {
    VectorXd t = theta0;
    const double f = factors[(s - 1) % 2] * (s > 2 ? 0.5 : 1.0);
    t(0) += std::log(f);
    t(1) += std::log(f);
    seeds.push_back(box.project(t));
  }

  JmapmlFit fit;
  fit.initial_objective = objective.value(theta0);
  OptimResult best;
  best.f = std::numeric_limits<double>::infinity();
  for (const VectorXd& seed : seeds) {
    OptimProblem problem;
    problem.objective = [&objective](const VectorXd& t) { return objective.value(t); };
    problem.gradient = [&objective](const VectorXd& t) { return objective.gradient(t); };
    problem.dimension = n;
    problem.bounds = box;
    problem.seeds = {seed};
    problem.max_iterations = options.max_iterations;
    problem.gradient_tolerance = options.gradient_tolerance;
    ++fit.starts_run;
    OptimResult r;
    try {
      r = local_minimize(problem);
    } catch (const std::exception&) {
      r.status = OptimStatus::failed;
    }
    if (r.status == OptimStatus::failed || !std::isfinite(r.f)) {
      ++fit.starts_failed;
      continue;
    }
    fit.iterations += r.iterations;
    if (r.f < best.f) best = r;
  }
  if (!std::isfinite(best.f))
    throw NumericalError("fit_jmapml: all " + std::to_string(fit.starts_run) +
                         " starts failed (initial objective " + std::to_string(fit.initial_objective) + ")");
  fit.hyper = objective.hyper(best.x);
  fit.final_objective = best.f;
  fit.status = best.status;
  return fit;
}

CrossValidationResult cross_validate_zeta(const Trajectory& data, Index past, Index future,
                                          const std::vector<double>& lambdas, const std::vector<double>& alphas,
                                          const CrossValidationOptions& options, const ModelStructure& structure) {
  if (lambdas.empty() || alphas.empty()) throw std::invalid_argument("cross_validate_zeta: empty grid");
  if (!(options.split > 0.0 && options.split < 1.0))
    throw std::invalid_argument("cross_validate_zeta: split must be in (0, 1)");
  const Index L = past + future;
  const Index N = data.size();
  const Index n_fit = static_cast<Index>(std::floor(options.split * static_cast<double>(N)));
  if (n_fit < L + 1 || N - n_fit < L)
    throw std::invalid_argument("cross_validate_zeta: trajectory too short for the split");

  std::vector<double> ls = lambdas;
  std::vector<double> as = alphas;
  std::sort(ls.begin(), ls.end());
  std::sort(as.begin(), as.end());

  const Trajectory train = data.segment(0, n_fit);
  const Trajectory valid = data.segment(n_fit, N - n_fit);
  const DataEmbedding emb = build_embedding(train, past, future);
  PredictOptions popt;
  popt.global_search = options.global_search;

  CrossValidationResult out;
  for (double lambda : ls) {
    for (double alpha : as) {
      const Zeta zeta{lambda, alpha};
      zeta.validate();
      double score = std::numeric_limits<double>::infinity();
      try {
        const JmapmlFit fit = fit_jmapml(emb, zeta, options.fit, structure);
        const ImplicitGPModel model(emb, fit.hyper, structure);
        double sse = 0.0;
        Index count = 0;
        for (Index k = 0; k + L <= valid.size(); ++k) {
          popt.seed = options.seed + static_cast<std::uint64_t>(k);
          const Prediction p = predict(model, valid.u.segment(k, L), valid.y.segment(k, past), popt);
          const Index steps = options.all_steps ? future : 1;
          sse += (p.y_f.head(steps) - valid.y.segment(k + past, steps)).squaredNorm();
          count += steps;
        }
        score = std::sqrt(sse / static_cast<double>(count));
        if (!std::isfinite(score)) score = std::numeric_limits<double>::infinity();
      } catch (const std::exception&) {
        score = std::numeric_limits<double>::infinity();
      }
      out.candidates.push_back(zeta);
      out.scores.push_back(score);
      if (out.candidates.size() == 1 || score < out.best_score) {
        out.best_score = score;
        out.best = zeta;
      }
    }
  }
  return out;
}

}  // namespace hwgp
