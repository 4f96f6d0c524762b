#include <gtest/gtest.h>

#include <cmath>

#include "hwgp/hankel.hpp"
#include "hwgp/hyperopt.hpp"
#include "hwgp/linpred.hpp"
#include "test_util.hpp"

using namespace hwgp;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ARXParams toeplitz_gamma(std::uint64_t seed) {
  ARXParams p;
  p.past = 2;
  p.future = 4;
  p.gamma1 = test::gaussian_matrix(4, 6, seed);
  p.gamma2 = test::gaussian_matrix(4, 2, seed + 1);
  return toeplitz_project(p);
}

DataEmbedding hw_embedding(Index n, std::uint64_t seed) {
  const HWSystem sys = test::sine_system(random_stable_system(2, seed));
  return build_embedding(simulate_hw(sys, test::gaussian_vector(n, seed), VectorXd::Zero(2), seed + 7), 2, 4);
}

VectorXd numeric_gradient(const JmapmlObjective& f, const VectorXd& x, double h) {
  VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f.value(a) - f.value(b)) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST(Pack, LengthAndZero) {
  EXPECT_EQ(packed_length(2, 4), 20);
  EXPECT_EQ(packed_length(1, 1), 3);
  ARXParams z;
  z.past = 2;
  z.future = 4;
  z.gamma1 = MatrixXd::Zero(4, 6);
  z.gamma2 = MatrixXd::Zero(4, 2);
  EXPECT_EQ(pack_gamma(z), VectorXd::Zero(20));
}

TEST(Pack, RoundTrip) {
  const ARXParams p = toeplitz_gamma(3);
  bool projected = true;
  const VectorXd g = pack_gamma(p, &projected);
  EXPECT_FALSE(projected);
  const ARXParams q = unpack_gamma(g, 2, 4);
  EXPECT_LT((q.gamma1 - p.gamma1).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((q.gamma2 - p.gamma2).cwiseAbs().maxCoeff(), 1e-15);
  const VectorXd v = test::gaussian_vector(20, 4);
  EXPECT_EQ(pack_gamma(unpack_gamma(v, 2, 4)), v);
  EXPECT_THROW(unpack_gamma(v.head(19), 2, 4), std::invalid_argument);
}

TEST(Pack, ProjectsNonToeplitzBlock) {
  ARXParams p = toeplitz_gamma(5);
  p.gamma1(0, 3) = 1.0;  // strictly upper part of Gamma12
  bool projected = false;
  pack_gamma(p, &projected);
  EXPECT_TRUE(projected);
  const ARXParams t = toeplitz_project(p);
  const MatrixXd G12 = t.gamma12();
  for (Index d = 0; d < 4; ++d)
    for (Index i = d; i < 4; ++i) EXPECT_NEAR(G12(i, i - d), G12(d, 0), 1e-15);
  EXPECT_EQ(G12(0, 1), 0.0);
}

TEST(TcBlock, SmallCases) {
  const Zeta z{1.0, 0.5};
  const MatrixXd S = tc_block(2, 1, z);
  EXPECT_LT((S - (MatrixXd(2, 2) << 0.25, 0.25, 0.25, 0.5).finished()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(build_S_gamma(2, 4, Zeta{0.0, 0.5}), MatrixXd::Zero(20, 20));
  EXPECT_THROW(tc_block(1, 2, z), std::invalid_argument);
  EXPECT_THROW((Zeta{1.0, 1.0}).validate(), std::invalid_argument);
}

TEST(TcBlock, PositiveSemidefiniteOnGrid) {
  for (double lambda : {0.25, 1.0, 4.0})
    for (double alpha : {0.0, 0.5, 0.9}) {
      const MatrixXd S = build_S_gamma(2, 4, Zeta{lambda, alpha});
      EXPECT_EQ(S, S.transpose());
      EXPECT_GE(test::min_eigenvalue(S), -1e-12);
    }
}

TEST(PriorPrecision, InvertsRegularBlock) {
  const MatrixXd S = build_S_gamma(2, 4, Zeta{1.0, 0.7});
  const MatrixXd P = prior_precision(S);
  EXPECT_LT((S * P * S - S).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_TRUE(prior_precision(MatrixXd::Zero(3, 3)).allFinite());
}

TEST(Objective, ZeroGammaClosedForm) {
  const DataEmbedding e = hw_embedding(40, 1);
  HyperParams h;
  h.noise_var = 0.2;
  h.gamma.past = 2;
  h.gamma.future = 4;
  h.gamma.gamma1 = MatrixXd::Zero(4, 6);
  h.gamma.gamma2 = MatrixXd::Zero(4, 2);
  const ImplicitGPModel m(e, h, ModelStructure::linear());
  const double n = static_cast<double>(e.columns() * 4);
  const double expected = n * std::log(0.2) + e.Hyf().squaredNorm() / 0.2;
  EXPECT_NEAR(jmapml_objective(m, MatrixXd()), expected, 1e-9 * std::abs(expected));
  EXPECT_NEAR(jmapml_objective(m, MatrixXd::Identity(20, 20)), expected, 1e-9 * std::abs(expected));
}

TEST(Objective, FastRouteMatchesModelAssembly) {
  const DataEmbedding e = hw_embedding(30, 2);
  const MatrixXd Sinv = prior_precision(build_S_gamma(2, 4, Zeta{1.0, 0.7}));
  const JmapmlObjective f(e, Sinv);
  for (std::uint64_t s = 0; s < 5; ++s) {
    HyperParams h = initial_hyper(e, 1e-3);
    h.length_u = 0.5 + 0.3 * static_cast<double>(s);
    h.length_y = 2.0 - 0.2 * static_cast<double>(s);
    h.noise_var = 0.05 * static_cast<double>(s + 1);
    const ARXParams g = toeplitz_gamma(10 + s);
    h.gamma.gamma1 += 0.1 * g.gamma1;
    h.gamma.gamma2 += 0.1 * g.gamma2;
    h.gamma = toeplitz_project(h.gamma);
    const double direct = jmapml_objective(ImplicitGPModel(e, h), Sinv);
    EXPECT_NEAR(f.value(f.theta(h)), direct, 1e-8 * (1.0 + std::abs(direct)));
  }
}

TEST(Objective, GradientMatchesCentralDifferences) {
  const DataEmbedding e = hw_embedding(30, 3);
  const JmapmlObjective f(e, prior_precision(build_S_gamma(2, 4, Zeta{1.0, 0.7})));
  HyperParams h = initial_hyper(e, 1e-3);
  h.noise_var = 0.1;
  const VectorXd x = f.theta(h) + 0.05 * test::gaussian_vector(f.dimension(), 4);
  const VectorXd g = f.gradient(x);
  const VectorXd n = numeric_gradient(f, x, 1e-5);
  EXPECT_LT((g - n).cwiseAbs().maxCoeff(), 1e-4 * (1.0 + n.cwiseAbs().maxCoeff()));
}

TEST(Fit, DecreasesObjectiveAndRespectsBounds) {
  const DataEmbedding e = hw_embedding(60, 5);
  JmapmlOptions opt;
  opt.starts = 2;
  opt.max_iterations = 80;
  const JmapmlFit fit = fit_jmapml(e, Zeta{1.0, 0.7}, opt);
  EXPECT_LE(fit.final_objective, fit.initial_objective);
  const double sy = std::sqrt((e.y.array() - e.y.mean()).square().sum() / static_cast<double>(e.y.size() - 1));
  EXPECT_GE(fit.hyper.noise_var, opt.min_noise_ratio * sy * sy * (1.0 - 1e-9));
  EXPECT_GE(fit.hyper.length_y, opt.min_length_ratio * sy * (1.0 - 1e-9));
  EXPECT_NO_THROW(fit.hyper.validate(2, 4));
}

TEST(Fit, AblationDropsHyperpriorTerm) {
  const DataEmbedding e = hw_embedding(50, 6);
  JmapmlOptions opt;
  opt.starts = 1;
  opt.max_iterations = 60;
  opt.use_hyperprior = false;
  const JmapmlFit fit = fit_jmapml(e, Zeta{1.0, 0.7}, opt);
  const double value = jmapml_objective(ImplicitGPModel(e, fit.hyper), MatrixXd());
  EXPECT_NEAR(fit.final_objective, value, 1e-6 * (1.0 + std::abs(value)));
}

TEST(Fit, LinearDataKeepsSubspacePredictor) {
  const LinearStateSpace lin = random_stable_system(2, 7);
  const DataEmbedding e = build_embedding(test::linear_trajectory(lin, 100, 8), 2, 4);
  JmapmlOptions opt;
  opt.starts = 1;
  opt.use_hyperprior = false;
  opt.min_noise_ratio = 1e-14;
  const JmapmlFit fit = fit_jmapml(e, Zeta{}, opt, ModelStructure::linear());
  const ARXParams sub = fit_subspace(e.Hu, e.Hy, 2, 4);
  const Trajectory test = test::linear_trajectory(lin, 30, 9);
  for (Index k = 0; k + 6 <= test.size(); ++k) {
    const VectorXd a = subspace_predict(fit.hyper.gamma, test.u.segment(k, 6), test.y.segment(k, 2));
    const VectorXd b = subspace_predict(sub, test.u.segment(k, 6), test.y.segment(k, 2));
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(CrossValidation, SingleCandidateAndArgmin) {
  const HWSystem sys = test::sine_system(random_stable_system(2, 9));
  const Trajectory t = simulate_hw(sys, test::gaussian_vector(60, 9), VectorXd::Zero(2), 10);
  CrossValidationOptions opt;
  opt.fit.max_iterations = 20;
  const CrossValidationResult one = cross_validate_zeta(t, 2, 4, {2.0}, {0.6}, opt);
  EXPECT_EQ(one.best, (Zeta{2.0, 0.6}));
  ASSERT_EQ(one.candidates.size(), 1u);

  const CrossValidationResult r = cross_validate_zeta(t, 2, 4, {4.0, 1.0}, {0.5, 0.9}, opt);
  ASSERT_EQ(r.scores.size(), 4u);
  EXPECT_EQ(r.candidates.front(), (Zeta{1.0, 0.5}));  // sorted grid
  std::size_t arg = 0;
  for (std::size_t i = 1; i < r.scores.size(); ++i)
    if (r.scores[i] < r.scores[arg]) arg = i;
  EXPECT_EQ(r.best, r.candidates[arg]);
  EXPECT_EQ(r.best_score, r.scores[arg]);
  EXPECT_THROW(cross_validate_zeta(t, 2, 4, {}, {0.5}, opt), std::invalid_argument);
}
