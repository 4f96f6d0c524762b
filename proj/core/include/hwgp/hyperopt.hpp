#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hwgp/implicit_gp.hpp"
#include "hwgp/solvers.hpp"

namespace hwgp {

// Packed ARX vector gamma = col(vec(Gamma11^T), vec(Gamma2^T), gamma12).
// vec(X^T) walks X row by row; gamma12 is the last row of the lower
// triangular Toeplitz block Gamma12, so (Gamma12)_{i,j} = gamma12[L'-1-(i-j)].

Eigen::Index packed_length(Eigen::Index past, Eigen::Index future);

/// Averages the diagonals of Gamma12 and zeroes its strict upper triangle.
ARXParams toeplitz_project(const ARXParams& p);

/// Packs p. If Gamma12 is not Toeplitz within 1e-9 it is projected first and
/// `projected` (when given) is set.
Eigen::VectorXd pack_gamma(const ARXParams& p, bool* projected = nullptr);

ARXParams unpack_gamma(const Eigen::VectorXd& gamma, Eigen::Index past, Eigen::Index future);

/// Hyper-hyperparameters of the TC hyperprior.
struct Zeta {
  double lambda = 1.0;
  double alpha = 0.7;

  void validate() const;
  bool operator==(const Zeta&) const = default;
};

/// S_{m:n}: (m-n+1) square, entry (i, j) = s_{m-i+1, m-j+1} (1-based) with
/// s_{a,b} = lambda alpha^max(a,b).
Eigen::MatrixXd tc_block(Eigen::Index m, Eigen::Index n, const Zeta& zeta);

/// blkdiag(S_{L0:1}, ..., S_{L-1:L'}) for Gamma11, the same for Gamma2, then
/// S_{L'-1:0} for gamma12.
Eigen::MatrixXd build_S_gamma(Eigen::Index past, Eigen::Index future, const Zeta& zeta);

/// S^{-1}, with a 1e-10 ridge (relative to the mean diagonal, absolute when
/// S = 0) when S is singular.
Eigen::MatrixXd prior_precision(const Eigen::MatrixXd& S_gamma);

/// logdet Lambda + m^T Lambda^{-1} m + gamma^T S^{-1} gamma for an assembled
/// model. Pass an empty matrix to drop the hyperprior term.
double jmapml_objective(const ImplicitGPModel& model, const Eigen::MatrixXd& S_inverse);

/// JMAP-ML objective over theta = (log l_u, log l_y, log sigma^2, gamma) with
/// an analytic gradient. Uses the sample-level Gram of the single training
/// trajectory behind the embedding, so the embedding must be a Hankel
/// embedding of its raw u, y.
///
/// Evaluations cache the last factorization; one instance must not be
/// shared between threads.
class JmapmlObjective {
 public:
  JmapmlObjective(const DataEmbedding& embedding, Eigen::MatrixXd S_inverse, ModelStructure structure = {});

  Eigen::Index dimension() const { return 3 + packed_length(past_, future_); }
  Eigen::VectorXd theta(const HyperParams& hyper) const;
  HyperParams hyper(const Eigen::VectorXd& theta) const;

  double value(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;

  bool uses_hyperprior() const { return S_inverse_.size() > 0; }
  const ModelStructure& structure() const { return structure_; }

 private:
  struct Eval {
    Eigen::VectorXd theta;
    ARXParams gamma;
    Eigen::MatrixXd Ay;
    Eigen::MatrixXd Gu, Gy;  // sample Grams
    std::optional<JitteredCholesky> chol;
    Eigen::VectorXd alpha;  // Lambda^{-1} m
    double value = std::numeric_limits<double>::infinity();
  };
  const Eval& evaluate(const Eigen::VectorXd& theta) const;

  Eigen::Index past_ = 0;
  Eigen::Index future_ = 0;
  Eigen::Index columns_ = 0;
  Eigen::MatrixXd Du_, Dy_;  // squared sample distances
  Eigen::MatrixXd Mu_, My_;  // prior means applied to H_u, H_y
  Eigen::MatrixXd S_inverse_;
  ModelStructure structure_;
  mutable std::optional<Eval> cache_;
};

struct JmapmlOptions {
  bool use_hyperprior = true;
  int starts = 3;  // init, then 0.5x and 2x length scales
  int max_iterations = 300;
  double gradient_tolerance = 1e-6;
  // Length scales are kept in [ratio * std(signal), 1e3 * std(signal)] of the
  // matching training signal. Without a floor the output kernel can shrink
  // until it absorbs the measurement noise.
  double min_length_ratio = 0.05;
  double max_length_ratio = 1e3;
  // Noise variance is kept in [ratio * var(y), 1e2 * var(y)]. A vanishing
  // noise level lets the output kernel cancel the identity mean and explain
  // the data with Psi = Phi = 0.
  double min_noise_ratio = 1e-3;
  double max_noise_ratio = 1e2;
};

struct JmapmlFit {
  HyperParams hyper;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  OptimStatus status = OptimStatus::failed;
  int starts_run = 0;
  int starts_failed = 0;
  int iterations = 0;
};

/// gamma from the Toeplitz-projected subspace fit, l_u = l_y = 1, sigma^2 the
/// residual variance of that fit (floored at `min_noise_var`).
HyperParams initial_hyper(const DataEmbedding& embedding, double min_noise_var = 1e-8);

/// Minimizes the JMAP-ML objective from the multi-start initialization.
/// Throws NumericalError when every start fails.
JmapmlFit fit_jmapml(const DataEmbedding& embedding, const Zeta& zeta, const JmapmlOptions& options = {},
                     const ModelStructure& structure = {}, const std::optional<HyperParams>& init = {});

struct CrossValidationOptions {
  double split = 0.75;
  JmapmlOptions fit{true, 1, 80};
  bool global_search = false;  // particle swarm in the validation predictions
  bool all_steps = false;      // score every horizon step, not only the first
  std::uint64_t seed = 0;
};

struct CrossValidationResult {
  Zeta best;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<Zeta> candidates;
  std::vector<double> scores;  // +inf for failed fits
};

/// Chronological split: fit on the first `split` fraction, score the
/// one-step component of MMSE predictions on windows fully inside the rest.
/// Ties go to smaller lambda, then smaller alpha.
CrossValidationResult cross_validate_zeta(const Trajectory& data, Eigen::Index past, Eigen::Index future,
                                          const std::vector<double>& lambdas, const std::vector<double>& alphas,
                                          const CrossValidationOptions& options = {},
                                          const ModelStructure& structure = {});

}  // namespace hwgp
