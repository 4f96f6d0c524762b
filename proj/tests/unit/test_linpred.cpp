#include <gtest/gtest.h>

#include "hwgp/hankel.hpp"
#include "hwgp/linpred.hpp"
#include "test_util.hpp"

using namespace hwgp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// g_0 = D, g_k = C A^{k-1} B.
VectorXd markov_parameters(const LinearStateSpace& s, Eigen::Index n) {
  VectorXd g(n);
  g(0) = s.D(0, 0);
  MatrixXd Ak = MatrixXd::Identity(s.state_dim(), s.state_dim());
  for (Eigen::Index k = 1; k < n; ++k) {
    g(k) = (s.C * Ak * s.B)(0, 0);
    Ak = Ak * s.A;
  }
  return g;
}

}  // namespace

TEST(Subspace, ReproducesHeldOutLinearTrajectories) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LinearStateSpace lin = random_stable_system(2, seed);
    const Trajectory train = test::linear_trajectory(lin, 100, seed);
    ASSERT_TRUE(pe_order(train.u, 6 + 2));
    const DataEmbedding e = build_embedding(train, 2, 4);
    const ARXParams p = fit_subspace(e.Hu, e.Hy, 2, 4);
    const Trajectory test = test::linear_trajectory(lin, 40, seed + 100);
    for (Eigen::Index k = 0; k + 6 <= test.size(); ++k) {
      const VectorXd yf = subspace_predict(p, test.u.segment(k, 6), test.y.segment(k, 2));
      EXPECT_LT((yf - test.y.segment(k + 2, 4)).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Subspace, MarkovParametersInLastRow) {
  const LinearStateSpace lin = random_stable_system(2, 11);
  const Trajectory t = test::linear_trajectory(lin, 100, 3);
  const DataEmbedding e = build_embedding(t, 2, 4);
  const ARXParams p = fit_subspace(e.Hu, e.Hy, 2, 4);
  const VectorXd g = markov_parameters(lin, 4);
  const MatrixXd G12 = p.gamma12();
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(G12(3, j), g(3 - j), 1e-8);
  // Lower-triangular Toeplitz, zero above the diagonal.
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = i + 1; j < 4; ++j) EXPECT_NEAR(G12(i, j), 0.0, 1e-8);
}

TEST(Subspace, ZeroFutureGivesZeroOperator) {
  MatrixXd Hu = test::gaussian_matrix(6, 30, 1);
  MatrixXd Hy = test::gaussian_matrix(6, 30, 2);
  Hy.bottomRows(4).setZero();
  const ARXParams p = fit_subspace(Hu, Hy, 2, 4);
  EXPECT_EQ(p.gamma1.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(p.gamma2.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Subspace, ZeroWindowPredictsZero) {
  const LinearStateSpace lin = random_stable_system(2, 2);
  const Trajectory t = test::linear_trajectory(lin, 50, 2);
  const DataEmbedding e = build_embedding(t, 2, 4);
  const ARXParams p = fit_subspace(e.Hu, e.Hy, 2, 4);
  EXPECT_EQ(subspace_predict(p, VectorXd::Zero(6), VectorXd::Zero(2)), VectorXd::Zero(4));
  EXPECT_THROW(subspace_predict(p, VectorXd::Zero(5), VectorXd::Zero(2)), std::invalid_argument);
}

TEST(PseudoInverse, MoorePenroseConditions) {
  MatrixXd A = test::gaussian_matrix(5, 3, 4) * test::gaussian_matrix(3, 7, 5);  // rank 3
  const MatrixXd P = pseudo_inverse(A);
  EXPECT_LT((A * P * A - A).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((P * A * P - P).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(((A * P).transpose() - A * P).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(numerical_rank(A), 3);
}

TEST(PersistentExcitation, ConstantSequence) { EXPECT_FALSE(pe_order(VectorXd::Constant(20, 3.0), 2)); }

TEST(PersistentExcitation, GaussianSequence) { EXPECT_TRUE(pe_order(test::gaussian_vector(100, 42), 8)); }

TEST(PersistentExcitation, ImpulseSequences) {
  // The leading impulse (1, 0, ..., 0) has a rank-one Hankel matrix.
  for (Eigen::Index k = 1; k <= 6; ++k) {
    VectorXd u = VectorXd::Zero(20);
    u(0) = 1.0;
    EXPECT_EQ(pe_order(u, k), k == 1);
    // The delayed impulse e_k puts an anti-diagonal identity in the first k columns.
    VectorXd d = VectorXd::Zero(20);
    d(k - 1) = 1.0;
    EXPECT_TRUE(pe_order(d, k));
  }
}
