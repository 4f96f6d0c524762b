#pragma once

#include <Eigen/Dense>

#include <vector>

#include "hwgp/linsys.hpp"

namespace hwgp {

enum class KernelFamily { squared_exponential, tc, zero };

/// Scalar kernel. The squared-exponential amplitude is fixed to 1; the
/// implicit model absorbs scale into the linear block.
struct KernelSpec {
  KernelFamily family = KernelFamily::squared_exponential;
  double length_scale = 1.0;  // SE
  double lambda = 1.0;        // TC
  double alpha = 0.5;         // TC

  static KernelSpec squared_exponential(double length_scale) {
    return {KernelFamily::squared_exponential, length_scale, 1.0, 0.5};
  }
  static KernelSpec tc(double lambda, double alpha) { return {KernelFamily::tc, 1.0, lambda, alpha}; }
  static KernelSpec zero() { return {KernelFamily::zero, 1.0, 1.0, 0.5}; }

  void validate() const;
};

/// SE: exp(-(a-b)^2 / (2 l^2)); TC (integer arguments): lambda alpha^max(a,b);
/// zero: 0.
double kernel_eval(const KernelSpec& spec, double a, double b);

/// Entry (i, j) = kernel_eval(spec, xs_i, ys_j).
Eigen::MatrixXd kernel_block(const KernelSpec& spec, const Eigen::VectorXd& xs, const Eigen::VectorXd& ys);

struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Cholesky factorization with the jitter policy shared by every GP solve:
/// start at 1e-10 * mean diagonal and escalate by 10x up to 1e-4 * mean
/// diagonal. Throws NumericalError when even the largest jitter fails.
class JitteredCholesky {
 public:
  explicit JitteredCholesky(const Eigen::MatrixXd& A);

  const Eigen::LLT<Eigen::MatrixXd>& llt() const { return llt_; }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return llt_.rows(); }

  template <typename Rhs>
  Eigen::MatrixXd solve(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.solve(b);
  }
  /// L^{-1} b, so that b^T A^{-1} b = ||L^{-1} b||^2.
  Eigen::MatrixXd half_solve(const Eigen::MatrixXd& b) const;
  double log_determinant() const;
  Eigen::MatrixXd inverse() const;

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

/// Symmetrizes in place and returns the matrix.
Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& A);

/// Conditions a jointly Gaussian query on observations:
/// mean = m_q + k_dq^T (K_dd + noise)^{-1} (obs - m_d),
/// cov  = k_qq - k_dq^T (K_dd + noise)^{-1} k_dq.
GaussianPosterior gp_posterior(const Eigen::VectorXd& prior_mean_query, const Eigen::VectorXd& prior_mean_data,
                               const Eigen::MatrixXd& k_qq, const Eigen::MatrixXd& k_dq,
                               const Eigen::MatrixXd& K_dd, const Eigen::MatrixXd& noise_cov,
                               const Eigen::VectorXd& observations);

// --- Black-box NARX baseline -------------------------------------------

/// One l-step-ahead GP: constant mean, SE kernel with fitted amplitude,
/// length scale and noise.
struct NarxStepModel {
  Eigen::MatrixXd regressors;  // d x n, one training regressor per column
  Eigen::VectorXd alpha;       // (K + s_n^2 I)^{-1} (y - mean)
  Eigen::MatrixXd chol_lower;  // Cholesky factor of K + s_n^2 I
  double mean = 0.0;
  double length_scale = 1.0;
  double signal_var = 1.0;
  double noise_var = 1e-2;
  bool fallback = false;  // median-heuristic length scale was used
};

struct NarxModel {
  std::vector<NarxStepModel> steps;
  Eigen::Index past = 0;
  Eigen::Index future = 0;
};

struct NarxPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd stdev;
};

/// Negative log marginal likelihood (up to a constant) of a constant-mean
/// SE GP; the constant mean is profiled out by generalized least squares.
/// log_params = (log l, log s_f^2, log s_n^2).
double narx_negative_log_likelihood(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& targets,
                                    const Eigen::Vector3d& log_params);

NarxStepModel fit_narx_step(const Eigen::MatrixXd& regressors, const Eigen::VectorXd& targets);

/// Independent GP per horizon step l = 1..future on regressor
/// col(u_k..u_{k+L-1}, y_k..y_{k+past-1}).
NarxModel fit_narx_gp(const Trajectory& data, Eigen::Index past, Eigen::Index future);

NarxPrediction narx_predict(const NarxModel& model, const Eigen::VectorXd& u, const Eigen::VectorXd& y_past);

}  // namespace hwgp
