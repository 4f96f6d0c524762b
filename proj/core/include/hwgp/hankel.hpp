#pragma once

#include <Eigen/Dense>

#include <utility>

#include "hwgp/linsys.hpp"

namespace hwgp {

/// Hankel matrix of depth `depth` for a signal stored column-wise
/// (n x N): column j is col(x_j, ..., x_{j+depth-1}).
Eigen::MatrixXd build_hankel(const Eigen::MatrixXd& samples, Eigen::Index depth);

/// Scalar-signal overload.
Eigen::MatrixXd build_hankel(const Eigen::VectorXd& x, Eigen::Index depth);

/// Hankel data of one trajectory, split into a past window of length
/// `past` and a future window of length `future`.
struct DataEmbedding {
  Eigen::MatrixXd Hu;  // (n_u L) x M
  Eigen::MatrixXd Hy;  // (n_y L) x M
  Eigen::VectorXd u;   // raw data, kept for window-structured kernels
  Eigen::VectorXd y;
  Eigen::Index past = 0;
  Eigen::Index future = 0;
  Eigen::Index input_dim = 1;
  Eigen::Index output_dim = 1;

  Eigen::Index depth() const { return past + future; }
  Eigen::Index columns() const { return Hu.cols(); }
  Eigen::Index samples() const { return u.size(); }

  Eigen::MatrixXd Hyp() const { return Hy.topRows(output_dim * past); }
  Eigen::MatrixXd Hyf() const { return Hy.bottomRows(output_dim * future); }
  /// Training inputs: column k is col(u window, y window).
  Eigen::MatrixXd eta() const;
  /// Training targets, identically zero.
  Eigen::MatrixXd chi() const { return Eigen::MatrixXd::Zero(output_dim * future, columns()); }
};

DataEmbedding build_embedding(const Trajectory& data, Eigen::Index past, Eigen::Index future);

/// Splits a stacked trajectory vector (sample dimension n) into the first
/// `past` samples and the remaining `future` samples.
std::pair<Eigen::VectorXd, Eigen::VectorXd> split_past_future(const Eigen::VectorXd& v, Eigen::Index n,
                                                              Eigen::Index past, Eigen::Index future);

}  // namespace hwgp
