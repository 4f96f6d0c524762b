#pragma once

#include <Eigen/Dense>

#include <optional>

#include "hwgp/gpcore.hpp"
#include "hwgp/hankel.hpp"
#include "hwgp/linpred.hpp"

namespace hwgp {

/// Hyperparameters of the implicit model: SE length scales of the input and
/// output nonlinearity priors, noise variance, and the ARX operator.
struct HyperParams {
  double length_u = 1.0;
  double length_y = 1.0;
  double noise_var = 1e-4;
  ARXParams gamma;

  bool operator==(const HyperParams& other) const = default;
  void validate(Eigen::Index past, Eigen::Index future) const;
};

/// Which GP priors are active and what their mean functions are. A zero
/// kernel with identity mean removes one nonlinearity (Hammerstein or Wiener
/// configurations); both zero gives the linear limit.
struct ModelStructure {
  bool input_kernel = true;
  bool output_kernel = true;
  ScalarMap input_mean;   // identity when empty
  ScalarMap output_mean;  // identity when empty

  static ModelStructure hammerstein_wiener() { return {}; }
  static ModelStructure hammerstein() { return {true, false, {}, {}}; }
  static ModelStructure linear() { return {false, false, {}, {}}; }

  KernelSpec input_spec(double length) const {
    return input_kernel ? KernelSpec::squared_exponential(length) : KernelSpec::zero();
  }
  KernelSpec output_spec(double length) const {
    return output_kernel ? KernelSpec::squared_exponential(length) : KernelSpec::zero();
  }
  Eigen::MatrixXd apply_input_mean(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd apply_output_mean(const Eigen::MatrixXd& x) const;
  bool identity_output_mean() const { return !output_mean; }
};

/// Block-diagonal noise model: `columns` blocks of sigma2 (Gamma2 Gamma2^T + I).
Eigen::MatrixXd noise_cov(const Eigen::MatrixXd& gamma2, double sigma2, Eigen::Index columns);

/// [Gamma2  -I]: the operator acting on a full output window.
Eigen::MatrixXd output_operator(const ARXParams& gamma);

/// Sample-level kernel Gram G(s, t) = k(x_s, x_t).
Eigen::MatrixXd sample_gram(const KernelSpec& spec, const Eigen::VectorXd& samples);

/// For windows of length L over a sample Gram G, returns the
/// (columns * rows(A))^2 matrix whose (j, k) block is A G[j:j+L, k:k+L] A^T.
Eigen::MatrixXd window_sandwich(const Eigen::MatrixXd& A, const Eigen::MatrixXd& G, Eigen::Index columns);

/// Implicit GP of the trajectory characterization f(eta) = 0, trained on the
/// Hankel windows of one trajectory. Immutable queries; `set_hyper`
/// rebuilds the cached factorization when the hyperparameters change.
class ImplicitGPModel {
 public:
  ImplicitGPModel(DataEmbedding embedding, HyperParams hyper, ModelStructure structure = {});

  const DataEmbedding& embedding() const { return embedding_; }
  const HyperParams& hyper() const { return hyper_; }
  const ModelStructure& structure() const { return structure_; }
  void set_hyper(const HyperParams& hyper);

  Eigen::Index past() const { return embedding_.past; }
  Eigen::Index future() const { return embedding_.future; }
  Eigen::Index depth() const { return embedding_.depth(); }
  Eigen::Index query_dim() const { return 2 * depth(); }

  /// m(eta^d), stacked over training columns.
  const Eigen::VectorXd& prior_mean_data() const { return mean_data_; }
  /// K(eta^d, eta^d), noise excluded.
  const Eigen::MatrixXd& gram() const { return gram_; }
  /// Lambda = K + Sigma_bar.
  Eigen::MatrixXd lambda() const;
  const JitteredCholesky& lambda_factor() const { return *factor_; }
  /// Lambda^{-1} m(eta^d).
  const Eigen::VectorXd& weights() const { return weights_; }

  Eigen::VectorXd prior_mean_query(const Eigen::VectorXd& eta) const;
  /// k(eta^d, eta): (M L') x L'.
  Eigen::MatrixXd cross_cov(const Eigen::VectorXd& eta) const;
  /// k(eta, eta): L' x L'.
  Eigen::MatrixXd prior_var_query(const Eigen::VectorXd& eta) const;

  /// Posterior of f(eta) given chi^d = 0.
  GaussianPosterior posterior_f(const Eigen::VectorXd& eta) const;
  /// Covariance of the projected prediction error: k_p + sigma^2 Gamma2 Gamma2^T.
  Eigen::MatrixXd hat_kp(const GaussianPosterior& posterior) const;

  /// eta = col(u, y_p, y_f).
  Eigen::VectorXd make_query(const Eigen::VectorXd& u, const Eigen::VectorXd& y_past,
                             const Eigen::VectorXd& y_future) const;

 private:
  void rebuild();
  Eigen::MatrixXd window_cross(const KernelSpec& spec, const Eigen::MatrixXd& windows, const Eigen::MatrixXd& A,
                               const Eigen::VectorXd& query) const;
  Eigen::MatrixXd window_gram(const KernelSpec& spec, const Eigen::MatrixXd& windows,
                              const Eigen::MatrixXd& A) const;

  DataEmbedding embedding_;
  HyperParams hyper_;
  ModelStructure structure_;
  Eigen::MatrixXd output_op_;
  Eigen::VectorXd mean_data_;
  Eigen::MatrixXd gram_;
  std::optional<JitteredCholesky> factor_;
  Eigen::VectorXd weights_;
};

}  // namespace hwgp
