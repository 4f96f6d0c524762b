#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <memory>
#include <random>

#include "hwgp/control.hpp"
#include "hwgp/hankel.hpp"
#include "hwgp/linpred.hpp"
#include "test_util.hpp"

using namespace hwgp;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

GaussianPosterior posterior(const VectorXd& mean, const MatrixXd& cov) { return {mean, cov}; }

ControllerConfig scalar_config(double q, double lipschitz, double p) {
  ControllerConfig c;
  c.Q = MatrixXd::Identity(1, 1);
  c.R = MatrixXd::Identity(1, 1);
  c.H = MatrixXd::Ones(1, 1);
  c.q = VectorXd::Constant(1, q);
  c.lipschitz = lipschitz;
  c.p = p;
  return c;
}

struct LinearSetup {
  LinearStateSpace lin;
  ImplicitGPModel model;
  ARXParams gamma;
};

LinearSetup linear_setup(const LinearStateSpace& lin, std::uint64_t seed, Index future) {
  const DataEmbedding e = build_embedding(test::linear_trajectory(lin, 100, seed), 2, future);
  HyperParams h;
  h.noise_var = 1e-4;
  h.gamma = fit_subspace(e.Hu, e.Hy, 2, future);
  return {lin, ImplicitGPModel(e, h, ModelStructure::linear()), h.gamma};
}

LinearSetup linear_setup(std::uint64_t seed, Index future) {
  return linear_setup(random_stable_system(2, seed), seed, future);
}

// Minimum phase, so short-horizon tracking loops stay stable. Random plants
// often have zeros outside the unit circle.
LinearStateSpace demo_plant() { return transfer_function({10, 0}, {1, 0.24, 0.36}); }

}  // namespace

TEST(ChiSquared, MatchesBoost) {
  for (int dof : {1, 2, 4, 10})
    for (double x : {0.01, 0.5, 1.0, 3.0, 10.0, 40.0})
      EXPECT_NEAR(chi2_cdf(x, dof), boost::math::cdf(boost::math::chi_squared(dof), x), 1e-12);
  for (auto [p, dof] : {std::pair{0.5, 1}, {0.9, 4}, {0.95, 1}, {0.99, 10}, {0.7, 4}}) {
    const double oracle = boost::math::quantile(boost::math::chi_squared(dof), p);
    EXPECT_NEAR(chi2_quantile(p, dof), oracle, 1e-9);
  }
}

TEST(ChiSquared, LimitsAndMonotonicity) {
  EXPECT_LT(chi2_quantile(1e-12, 3), 1e-6);
  double prev = 0.0;
  for (double p = 0.05; p < 1.0; p += 0.05) {
    const double q = chi2_quantile(p, 4);
    EXPECT_GT(q, prev);
    prev = q;
  }
  EXPECT_THROW(chi2_quantile(1.0, 2), std::invalid_argument);
  EXPECT_THROW(chi2_quantile(0.5, 0), std::invalid_argument);
}

TEST(Tighten, NoUncertaintyNoTightening) {
  const ControllerConfig c = ControllerConfig::tracking(4, -2.5, 2.5);
  const Tightening t = tighten(c, posterior(VectorXd::Zero(4), MatrixXd::Zero(4, 4)), MatrixXd::Zero(4, 4));
  EXPECT_EQ(t.c_p, 0.0);
  EXPECT_EQ(t.bound, c.q);
}

TEST(Tighten, ScalarArithmetic) {
  // mu(p) sigma_p = 0.25 and ||m_p|| = 0.1 give 1 - 2 (0.5 + 0.1).
  const ControllerConfig c = scalar_config(1.0, 2.0, 0.7);
  const double sigma = 0.25 / chi2_quantile(0.7, 1);
  const Tightening t =
      tighten(c, posterior(VectorXd::Constant(1, 0.1), MatrixXd::Zero(1, 1)), MatrixXd::Constant(1, 1, sigma));
  EXPECT_NEAR(t.bound(0), -0.2, 1e-12);
  EXPECT_NEAR(t.sigma_p, sigma, 1e-15);
}

TEST(Tighten, RandomizedProperties) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 1 + trial % 4;
    ControllerConfig c = ControllerConfig::tracking(n, -1.0 - unif(rng), 1.0 + unif(rng));
    c.H.array() *= 1.0 + unif(rng);
    c.p = unif(rng);
    c.lipschitz = 3.0 * unif(rng);
    const MatrixXd B = test::gaussian_matrix(n, n, 100 + trial);
    const MatrixXd kp = (trial % 5 == 0 ? 0.0 : 1.0) * 0.1 * B * B.transpose();
    const VectorXd m = (trial % 7 == 0 ? 0.0 : 0.3) * test::gaussian_vector(n, 5000 + trial);
    const GaussianPosterior post = posterior(m, kp);
    const Tightening t = tighten(c, post, kp);
    if ((t.bound.array() > c.q.array()).any()) ++violations;
    const bool zero = m.norm() == 0.0 && kp.cwiseAbs().maxCoeff() == 0.0;
    if ((t.c_p == 0.0) != zero) ++violations;

    ControllerConfig hi_p = c, hi_m = c;
    hi_p.p = std::min(0.99, c.p + 0.01);
    hi_m.lipschitz = c.lipschitz + 0.1;
    if (tighten(hi_p, post, kp).c_p < t.c_p) ++violations;
    if (tighten(hi_m, post, kp).c_p < t.c_p) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(ExpectedCost, LinearReduction) {
  const LinearSetup s = linear_setup(2, 4);
  const ControllerConfig c = ControllerConfig::tracking(4, -5, 5);
  const History h{test::gaussian_vector(2, 1), test::gaussian_vector(2, 2)};
  const VectorXd u = test::gaussian_vector(4, 3);
  const VectorXd r = test::gaussian_vector(4, 4);
  VectorXd ufull(6);
  ufull << h.u, u;
  const VectorXd y_sub = subspace_predict(s.gamma, ufull, h.y);

  // With y on the subspace rollout the residual m_p vanishes.
  const CostTerms at = expected_cost(c, s.model, h, u, y_sub, r);
  EXPECT_NEAR(at.input, u.squaredNorm(), 1e-12);
  EXPECT_NEAR(at.tracking, (y_sub - r).squaredNorm(), 1e-8);
  const double noise = (1e-4 * s.gamma.gamma2 * s.gamma.gamma2.transpose()).trace();
  EXPECT_NEAR(at.variance, noise, 1e-12);

  // Any y gives the same tracking term: Phi(y) + m_p = y_sub.
  const CostTerms other = expected_cost(c, s.model, h, u, VectorXd::Zero(4), r);
  EXPECT_NEAR(other.tracking, at.tracking, 1e-8);
  EXPECT_GE(other.total(), at.input + at.tracking - 1e-8);
}

TEST(ExpectedCost, ZeroCase) {
  const LinearSetup s = linear_setup(3, 4);
  ControllerConfig c = ControllerConfig::tracking(4, -5, 5);
  c.Q.setZero();
  const History h{VectorXd::Zero(2), VectorXd::Zero(2)};
  const CostTerms t = expected_cost(c, s.model, h, VectorXd::Zero(4), VectorXd::Zero(4), VectorXd::Zero(4));
  EXPECT_EQ(t.total(), 0.0);
}

TEST(SolveRhc, NoTrackingWeightGivesZeroInput) {
  const LinearSetup s = linear_setup(4, 4);
  ControllerConfig c = ControllerConfig::tracking(4, -50, 50);
  c.Q.setZero();
  const History h{test::gaussian_vector(2, 5), test::gaussian_vector(2, 6)};
  const RhcSolution sol = solve_rhc(c, s.model, h, VectorXd::Ones(4));
  EXPECT_LT(sol.u.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(SolveRhc, LinearLimitMatchesSpc) {
  const LinearSetup s = linear_setup(5, 4);
  ControllerConfig c = ControllerConfig::tracking(4, -50, 50);
  c.lipschitz = 0.0;
  const History h{test::gaussian_vector(2, 7), test::gaussian_vector(2, 8)};
  const VectorXd r = VectorXd::LinSpaced(4, 0.5, 2.0);
  const RhcSolution a = solve_rhc(c, s.model, h, r);
  const SpcSolution b = solve_spc(c, s.gamma, h, r);
  EXPECT_LT((a.u - b.u).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(SolveSpc, InputBoxIsExact) {
  const LinearSetup s = linear_setup(6, 4);
  ControllerConfig c = ControllerConfig::tracking(4, -50, 50);
  c.input_box = Box{VectorXd::Constant(4, -0.1), VectorXd::Constant(4, 0.1)};
  const History h{VectorXd::Zero(2), VectorXd::Zero(2)};
  const SpcSolution sol = solve_spc(c, s.gamma, h, VectorXd::Constant(4, 10.0));
  EXPECT_TRUE((sol.u.array().abs() <= 0.1 + 1e-15).all());
}

TEST(BlackBox, CostFormula) {
  const HWSystem sys = test::sine_system(random_stable_system(2, 9));
  const Trajectory t = simulate_hw(sys, test::gaussian_vector(80, 9), VectorXd::Zero(2), 10);
  const NarxModel m = fit_narx_gp(t, 2, 2);
  ControllerConfig c = ControllerConfig::tracking(2, -1.0, 1.0);
  const History h{t.u.head(2), t.y.head(2)};
  const VectorXd u = test::gaussian_vector(2, 11);
  const VectorXd r = VectorXd::Constant(2, 0.5);
  NarxPrediction pred;
  VectorXd bound;
  const double v = blackbox_cost(c, m, h, u, r, &pred, &bound);
  const double mu = boost::math::quantile(boost::math::chi_squared(2), c.p);
  const VectorXd b = c.q.array() - pred.stdev.maxCoeff() * std::sqrt(mu);
  EXPECT_LT((bound - b).cwiseAbs().maxCoeff(), 1e-9);
  const VectorXd excess = (c.H * pred.mean - b).cwiseMax(0.0);
  const double expected = u.squaredNorm() + (pred.mean - r).squaredNorm() + pred.stdev.squaredNorm() +
                          c.soft_penalty * excess.squaredNorm();
  EXPECT_NEAR(v, expected, 1e-9 * (1.0 + expected));
}

TEST(ClosedLoop, LogsAndRegulates) {
  const LinearSetup s = linear_setup(demo_plant(), 10, 4);
  const HWSystem sys = test::linear_system(s.lin);
  const ControllerConfig c = ControllerConfig::tracking(4, -100, 100);
  SpcController ctl(c, s.gamma);
  const ClosedLoopLog log = closed_loop(sys, ctl, c, [](Index) { return 1.0; }, 60, 1);
  EXPECT_EQ(log.steps(), 60);
  EXPECT_EQ(log.violation.size(), 60u);
  EXPECT_EQ(log.satisfaction_rate(), 1.0);
  EXPECT_LT(std::abs(log.y0(59) - log.y0(58)), 1e-6);  // settled
  EXPECT_NEAR(log.y0(59), 1.0, 0.05);
  // Certainty-equivalent prediction is exact on noise-free linear data.
  EXPECT_LT((log.predicted - log.y0).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(log.predicted, log.lower);
}

TEST(ClosedLoop, ViolationsUseNoiseFreeOutput) {
  const LinearSetup s = linear_setup(demo_plant(), 11, 4);
  const HWSystem sys = test::linear_system(s.lin, 0.3);
  const ControllerConfig c = ControllerConfig::tracking(4, -0.5, 0.5);
  ControllerConfig loose = ControllerConfig::tracking(4, -100, 100);
  SpcController ctl(loose, s.gamma);
  const ClosedLoopLog log = closed_loop(sys, ctl, c, [](Index) { return 2.0; }, 40, 2);
  for (Index k = 0; k < log.steps(); ++k)
    EXPECT_EQ(log.violation[static_cast<std::size_t>(k)], std::abs(log.y0(k)) > 0.5);
  EXPECT_LT(log.satisfaction_rate(), 1.0);
}
