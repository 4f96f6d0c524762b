#pragma once

#include <Eigen/Dense>

namespace hwgp {

/// Multi-step ARX operator [Gamma1 Gamma2] mapping col(u, y_p) to y_f.
/// Gamma1 = [Gamma11 | Gamma12] splits the input window into past and future.
struct ARXParams {
  Eigen::MatrixXd gamma1;  // (n_y L') x (n_u L)
  Eigen::MatrixXd gamma2;  // (n_y L') x (n_y L0)
  Eigen::Index past = 0;
  Eigen::Index future = 0;
  Eigen::Index input_dim = 1;

  Eigen::MatrixXd gamma11() const { return gamma1.leftCols(input_dim * past); }
  Eigen::MatrixXd gamma12() const { return gamma1.rightCols(input_dim * future); }

  bool operator==(const ARXParams& other) const {
    return past == other.past && future == other.future && input_dim == other.input_dim &&
           gamma1 == other.gamma1 && gamma2 == other.gamma2;
  }
};

inline constexpr double kDefaultRcond = 1e-10;

/// SVD pseudoinverse; singular values below rcond * sigma_max are dropped.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& M, double rcond = kDefaultRcond);

/// Numerical rank with the same relative cutoff.
Eigen::Index numerical_rank(const Eigen::MatrixXd& M, double rcond = kDefaultRcond);

/// Subspace predictor [Gamma1 Gamma2] = H_yf * pinv(col(H_u, H_yp)).
ARXParams fit_subspace(const Eigen::MatrixXd& Hu, const Eigen::MatrixXd& Hy, Eigen::Index past,
                       Eigen::Index future, double rcond = kDefaultRcond);

/// Gamma1 * u + Gamma2 * y_past.
Eigen::VectorXd subspace_predict(const ARXParams& p, const Eigen::VectorXd& u, const Eigen::VectorXd& y_past);

/// True iff the depth-`order` Hankel matrix of u has full row rank.
bool pe_order(const Eigen::VectorXd& u, Eigen::Index order, double rcond = kDefaultRcond);

}  // namespace hwgp
