#include "hwgp/linpred.hpp"

#include <stdexcept>

#include "hwgp/hankel.hpp"

namespace hwgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd pseudo_inverse(const MatrixXd& M, double rcond) {
  if (M.size() == 0) throw std::invalid_argument("pseudo_inverse: empty matrix");
  Eigen::BDCSVD<MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double cutoff = rcond * (s.size() > 0 ? s(0) : 0.0);
  VectorXd inv = VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::Index numerical_rank(const MatrixXd& M, double rcond) {
  if (M.size() == 0) return 0;
  Eigen::BDCSVD<MatrixXd> svd(M);
  const VectorXd& s = svd.singularValues();
  const double cutoff = rcond * s(0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cutoff && s(i) > 0.0) ++r;
  return r;
}

ARXParams fit_subspace(const MatrixXd& Hu, const MatrixXd& Hy, Eigen::Index past, Eigen::Index future,
                       double rcond) {
  if (Hu.size() == 0 || Hy.size() == 0) throw std::invalid_argument("fit_subspace: empty Hankel matrices");
  const Eigen::Index L = past + future;
  if (L < 1 || Hu.rows() % L != 0 || Hy.rows() % L != 0 || Hu.cols() != Hy.cols())
    throw std::invalid_argument("fit_subspace: inconsistent Hankel shapes");
  const Eigen::Index nu = Hu.rows() / L;
  const Eigen::Index ny = Hy.rows() / L;

  MatrixXd regressor(Hu.rows() + ny * past, Hu.cols());
  regressor << Hu, Hy.topRows(ny * past);
  const MatrixXd gamma = Hy.bottomRows(ny * future) * pseudo_inverse(regressor, rcond);

  ARXParams p;
  p.past = past;
  p.future = future;
  p.input_dim = nu;
  p.gamma1 = gamma.leftCols(Hu.rows());
  p.gamma2 = gamma.rightCols(ny * past);
  return p;
}

VectorXd subspace_predict(const ARXParams& p, const VectorXd& u, const VectorXd& y_past) {
  if (u.size() != p.gamma1.cols() || y_past.size() != p.gamma2.cols())
    throw std::invalid_argument("subspace_predict: dimension mismatch");
  return p.gamma1 * u + p.gamma2 * y_past;
}

bool pe_order(const VectorXd& u, Eigen::Index order, double rcond) {
  if (order < 1) throw std::invalid_argument("pe_order: order must be >= 1");
  if (u.size() < 2 * order - 1) throw std::invalid_argument("pe_order: sequence too short for a full-rank test");
  const MatrixXd H = build_hankel(u, order);
  return numerical_rank(H, rcond) == order;
}

}  // namespace hwgp
