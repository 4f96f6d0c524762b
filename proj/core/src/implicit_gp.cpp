#include "hwgp/implicit_gp.hpp"

#include <cmath>
#include <stdexcept>

namespace hwgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void HyperParams::validate(Index past, Index future) const {
  if (!(length_u > 0.0) || !(length_y > 0.0)) throw std::invalid_argument("HyperParams: length scales must be > 0");
  if (!(noise_var > 0.0)) throw std::invalid_argument("HyperParams: noise variance must be > 0");
  if (gamma.gamma1.rows() != future || gamma.gamma1.cols() != past + future || gamma.gamma2.rows() != future ||
      gamma.gamma2.cols() != past)
    throw std::invalid_argument("HyperParams: Gamma has wrong shape for the embedding");
}

namespace {

MatrixXd apply_elementwise(const ScalarMap& f, const MatrixXd& x) {
  if (!f) return x;
  return x.unaryExpr([&f](double v) { return f(v); });
}

}  // namespace

MatrixXd ModelStructure::apply_input_mean(const MatrixXd& x) const { return apply_elementwise(input_mean, x); }
MatrixXd ModelStructure::apply_output_mean(const MatrixXd& x) const { return apply_elementwise(output_mean, x); }

MatrixXd noise_cov(const MatrixXd& gamma2, double sigma2, Index columns) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("noise_cov: sigma2 must be > 0");
  const Index n = gamma2.rows();
  const MatrixXd block = sigma2 * (gamma2 * gamma2.transpose() + MatrixXd::Identity(n, n));
  MatrixXd S = MatrixXd::Zero(n * columns, n * columns);
  for (Index j = 0; j < columns; ++j) S.block(j * n, j * n, n, n) = block;
  return S;
}

MatrixXd output_operator(const ARXParams& gamma) {
  const Index f = gamma.gamma2.rows();
  MatrixXd B(f, gamma.gamma2.cols() + f);
  B << gamma.gamma2, -MatrixXd::Identity(f, f);
  return B;
}

MatrixXd sample_gram(const KernelSpec& spec, const VectorXd& samples) {
  return kernel_block(spec, samples, samples);
}

MatrixXd window_sandwich(const MatrixXd& A, const MatrixXd& G, Index columns) {
  const Index r = A.rows();
  const Index L = A.cols();
  if (G.rows() != G.cols() || G.rows() < columns + L - 1)
    throw std::invalid_argument("window_sandwich: sample Gram too small for the windows");
  const Index N = G.cols();
  MatrixXd P(columns * r, N);
  for (Index j = 0; j < columns; ++j) P.middleRows(j * r, r).noalias() = A * G.middleRows(j, L);
  MatrixXd K(columns * r, columns * r);
  const MatrixXd At = A.transpose();
  for (Index k = 0; k < columns; ++k) K.middleCols(k * r, r).noalias() = P.middleCols(k, L) * At;
  return K;
}

ImplicitGPModel::ImplicitGPModel(DataEmbedding embedding, HyperParams hyper, ModelStructure structure)
    : embedding_(std::move(embedding)), hyper_(std::move(hyper)), structure_(std::move(structure)) {
  if (embedding_.input_dim != 1 || embedding_.output_dim != 1)
    throw std::invalid_argument("ImplicitGPModel: only SISO embeddings are supported");
  rebuild();
}

void ImplicitGPModel::set_hyper(const HyperParams& hyper) {
  if (hyper == hyper_) return;
  hyper_ = hyper;
  rebuild();
}

MatrixXd ImplicitGPModel::window_gram(const KernelSpec& spec, const MatrixXd& windows, const MatrixXd& A) const {
  const Index M = windows.cols();
  const Index L = windows.rows();
  const Index r = A.rows();
  if (spec.family == KernelFamily::zero) return MatrixXd::Zero(M * r, M * r);
  const VectorXd flat = windows.reshaped();
  const MatrixXd G = kernel_block(spec, flat, flat);  // (M L) x (M L)
  MatrixXd T(M * r, M * L);
  for (Index j = 0; j < M; ++j) T.middleRows(j * r, r).noalias() = A * G.middleRows(j * L, L);
  MatrixXd K(M * r, M * r);
  const MatrixXd At = A.transpose();
  for (Index k = 0; k < M; ++k) K.middleCols(k * r, r).noalias() = T.middleCols(k * L, L) * At;
  return K;
}

MatrixXd ImplicitGPModel::window_cross(const KernelSpec& spec, const MatrixXd& windows, const MatrixXd& A,
                                       const VectorXd& query) const {
  const Index M = windows.cols();
  const Index L = windows.rows();
  const Index r = A.rows();
  if (spec.family == KernelFamily::zero) return MatrixXd::Zero(M * r, r);
  const MatrixXd g = kernel_block(spec, windows.reshaped(), query);  // (M L) x L
  const MatrixXd gAt = g * A.transpose();                               // (M L) x r
  MatrixXd out(M * r, r);
  for (Index j = 0; j < M; ++j) out.middleRows(j * r, r).noalias() = A * gAt.middleRows(j * L, L);
  return out;
}

void ImplicitGPModel::rebuild() {
  hyper_.validate(past(), future());
  output_op_ = output_operator(hyper_.gamma);
  const MatrixXd& G1 = hyper_.gamma.gamma1;
  const Index M = embedding_.columns();

  const MatrixXd mean_cols =
      G1 * structure_.apply_input_mean(embedding_.Hu) + output_op_ * structure_.apply_output_mean(embedding_.Hy);
  mean_data_ = mean_cols.reshaped();

  gram_ = window_gram(structure_.input_spec(hyper_.length_u), embedding_.Hu, G1) +
          window_gram(structure_.output_spec(hyper_.length_y), embedding_.Hy, output_op_);
  gram_ = symmetrized(gram_);
  factor_.emplace(gram_ + noise_cov(hyper_.gamma.gamma2, hyper_.noise_var, M));
  weights_ = factor_->solve(mean_data_);
}

MatrixXd ImplicitGPModel::lambda() const {
  return gram_ + noise_cov(hyper_.gamma.gamma2, hyper_.noise_var, embedding_.columns());
}

VectorXd ImplicitGPModel::make_query(const VectorXd& u, const VectorXd& y_past, const VectorXd& y_future) const {
  if (u.size() != depth() || y_past.size() != past() || y_future.size() != future())
    throw std::invalid_argument("make_query: window lengths do not match the model");
  VectorXd eta(query_dim());
  eta << u, y_past, y_future;
  return eta;
}

VectorXd ImplicitGPModel::prior_mean_query(const VectorXd& eta) const {
  if (eta.size() != query_dim()) throw std::invalid_argument("prior_mean_query: query has wrong length");
  return hyper_.gamma.gamma1 * structure_.apply_input_mean(eta.head(depth())) +
         output_op_ * structure_.apply_output_mean(eta.tail(depth()));
}

MatrixXd ImplicitGPModel::cross_cov(const VectorXd& eta) const {
  if (eta.size() != query_dim()) throw std::invalid_argument("cross_cov: query has wrong length");
  return window_cross(structure_.input_spec(hyper_.length_u), embedding_.Hu, hyper_.gamma.gamma1,
                      eta.head(depth())) +
         window_cross(structure_.output_spec(hyper_.length_y), embedding_.Hy, output_op_, eta.tail(depth()));
}

MatrixXd ImplicitGPModel::prior_var_query(const VectorXd& eta) const {
  if (eta.size() != query_dim()) throw std::invalid_argument("prior_var_query: query has wrong length");
  const VectorXd u = eta.head(depth());
  const VectorXd y = eta.tail(depth());
  const MatrixXd& G1 = hyper_.gamma.gamma1;
  const MatrixXd ku = kernel_block(structure_.input_spec(hyper_.length_u), u, u);
  const MatrixXd ky = kernel_block(structure_.output_spec(hyper_.length_y), y, y);
  return symmetrized(G1 * ku * G1.transpose() + output_op_ * ky * output_op_.transpose());
}

GaussianPosterior ImplicitGPModel::posterior_f(const VectorXd& eta) const {
  const MatrixXd k = cross_cov(eta);
  const MatrixXd V = factor_->half_solve(k);
  GaussianPosterior post;
  // chi^d = 0, so the data residual is -m(eta^d).
  post.mean = prior_mean_query(eta) - k.transpose() * weights_;
  post.cov = symmetrized(prior_var_query(eta) - V.transpose() * V);
  return post;
}

MatrixXd ImplicitGPModel::hat_kp(const GaussianPosterior& posterior) const {
  const MatrixXd& G2 = hyper_.gamma.gamma2;
  return symmetrized(posterior.cov + hyper_.noise_var * G2 * G2.transpose());
}

}  // namespace hwgp
