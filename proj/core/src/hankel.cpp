#include "hwgp/hankel.hpp"

#include <stdexcept>

namespace hwgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd build_hankel(const MatrixXd& samples, Eigen::Index depth) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index N = samples.cols();
  if (depth < 1) throw std::invalid_argument("build_hankel: depth must be >= 1");
  if (N < depth) throw std::invalid_argument("build_hankel: sequence shorter than depth");
  const Eigen::Index M = N - depth + 1;
  MatrixXd H(n * depth, M);
  for (Eigen::Index j = 0; j < M; ++j)
    for (Eigen::Index i = 0; i < depth; ++i) H.block(i * n, j, n, 1) = samples.col(j + i);
  return H;
}

MatrixXd build_hankel(const VectorXd& x, Eigen::Index depth) {
  return build_hankel(MatrixXd(x.transpose()), depth);
}

MatrixXd DataEmbedding::eta() const {
  MatrixXd e(Hu.rows() + Hy.rows(), columns());
  e << Hu, Hy;
  return e;
}

DataEmbedding build_embedding(const Trajectory& data, Eigen::Index past, Eigen::Index future) {
  if (past < 0 || future < 1) throw std::invalid_argument("build_embedding: need past >= 0 and future >= 1");
  if (data.u.size() != data.y.size()) throw std::invalid_argument("build_embedding: u and y lengths differ");
  if (data.u.size() < past + future) throw std::invalid_argument("build_embedding: insufficient data");
  DataEmbedding e;
  e.past = past;
  e.future = future;
  e.u = data.u;
  e.y = data.y;
  e.Hu = build_hankel(data.u, past + future);
  e.Hy = build_hankel(data.y, past + future);
  return e;
}

std::pair<VectorXd, VectorXd> split_past_future(const VectorXd& v, Eigen::Index n, Eigen::Index past,
                                                Eigen::Index future) {
  if (n < 1 || past < 0 || future < 0) throw std::invalid_argument("split_past_future: invalid sizes");
  if (v.size() != n * (past + future)) throw std::invalid_argument("split_past_future: length mismatch");
  return {v.head(n * past), v.tail(n * future)};
}

}  // namespace hwgp
