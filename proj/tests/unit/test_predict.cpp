#include <gtest/gtest.h>

#include <cmath>

#include "hwgp/hankel.hpp"
#include "hwgp/hyperopt.hpp"
#include "hwgp/linpred.hpp"
#include "hwgp/predict.hpp"
#include "test_util.hpp"

using namespace hwgp;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct LinearCase {
  LinearStateSpace lin;
  DataEmbedding embedding;
  HyperParams hyper;
};

LinearCase linear_case(std::uint64_t seed) {
  LinearCase c;
  c.lin = random_stable_system(2, seed);
  c.embedding = build_embedding(test::linear_trajectory(c.lin, 100, seed), 2, 4);
  c.hyper.noise_var = 0.01;
  c.hyper.gamma = fit_subspace(c.embedding.Hu, c.embedding.Hy, 2, 4);
  return c;
}

}  // namespace

TEST(Criterion, Names) {
  EXPECT_EQ(criterion_from_name("mmse"), Criterion::mmse);
  EXPECT_EQ(criterion_from_name("ml"), Criterion::ml);
  EXPECT_EQ(criterion_from_name("mvu"), Criterion::mvu_trace);
  EXPECT_EQ(criterion_from_name("mvu-trace"), Criterion::mvu_trace);
  EXPECT_EQ(criterion_from_name(to_string(Criterion::ml)), Criterion::ml);
  EXPECT_THROW(criterion_from_name("map"), std::invalid_argument);
}

TEST(Predict, LinearLimitReproducesSubspace) {
  const LinearCase c = linear_case(3);
  const ImplicitGPModel m(c.embedding, c.hyper, ModelStructure::linear());
  const Trajectory test = test::linear_trajectory(c.lin, 20, 4);
  for (Criterion crit : {Criterion::mmse, Criterion::mvu_trace}) {
    PredictOptions opt;
    opt.criterion = crit;
    for (Index k = 0; k + 6 <= test.size(); k += 3) {
      const VectorXd u = test.u.segment(k, 6), yp = test.y.segment(k, 2);
      const Prediction p = predict(m, u, yp, opt);
      EXPECT_LT((p.y_f - subspace_predict(c.hyper.gamma, u, yp)).cwiseAbs().maxCoeff(), 1e-6) << to_string(crit);
      EXPECT_LE(p.objective, p.seed_objective + 1e-12);
    }
  }
}

TEST(Predict, HammersteinClosedFormAgreesWithOptimizer) {
  const HWSystem sys = make_hw_system(random_stable_system(2, 5), nonlinearity_from_name("u+sin(u)"),
                                      nonlinearity_from_name("identity"), 0.01);
  const Trajectory t = simulate_hw(sys, test::gaussian_vector(100, 5), VectorXd::Zero(2), 6);
  const DataEmbedding e = build_embedding(t, 2, 4);
  JmapmlOptions fo;
  fo.starts = 1;
  fo.max_iterations = 80;
  const ImplicitGPModel m(e, fit_jmapml(e, Zeta{}, fo, ModelStructure::hammerstein()).hyper,
                          ModelStructure::hammerstein());
  const Trajectory test = simulate_hw(sys, test::gaussian_vector(40, 7), VectorXd::Zero(2), 8);
  double gp_sse = 0.0, lin_sse = 0.0;
  const ARXParams sub = fit_subspace(e.Hu, e.Hy, 2, 4);
  PredictOptions opt;
  opt.global_search = false;
  for (Index k = 0; k + 6 <= test.size(); ++k) {
    const VectorXd u = test.u.segment(k, 6), yp = test.y.segment(k, 2);
    const VectorXd closed = predict_hammerstein(m, u, yp);
    const VectorXd numeric = predict(m, u, yp, opt).y_f;
    EXPECT_LT((closed - numeric).cwiseAbs().maxCoeff(), 1e-6 * (1.0 + closed.cwiseAbs().maxCoeff()));
    gp_sse += (closed - test.y0.segment(k + 2, 4)).squaredNorm();
    lin_sse += (subspace_predict(sub, u, yp) - test.y0.segment(k + 2, 4)).squaredNorm();
  }
  EXPECT_LT(gp_sse, lin_sse);
  EXPECT_THROW(predict_hammerstein(ImplicitGPModel(e, m.hyper()), test.u.head(6), test.y.head(2)),
               std::invalid_argument);
}

TEST(Predict, RejectsWindowLengths) {
  const LinearCase c = linear_case(6);
  const ImplicitGPModel m(c.embedding, c.hyper);
  EXPECT_THROW(predict(m, VectorXd::Zero(5), VectorXd::Zero(2)), std::invalid_argument);
}

TEST(Recovery, FarQueriesRevertToPrior) {
  const HWSystem sys = test::sine_system(random_stable_system(2, 7));
  const Trajectory t = simulate_hw(sys, test::gaussian_vector(60, 7), VectorXd::Zero(2), 8);
  const DataEmbedding e = build_embedding(t, 2, 1);
  HyperParams h = initial_hyper(e, 1e-3);
  const ImplicitGPModel m(e, h);
  const VectorXd far = VectorXd::Constant(1, 1e3);
  const PointwisePosterior pu = input_nonlinearity_posterior(m, far);
  EXPECT_NEAR(pu.mean(0), 1e3, 1e-9);
  EXPECT_NEAR(pu.stdev(0), 1.0, 1e-9);
  const PointwisePosterior py = output_nonlinearity_posterior(m, far);
  EXPECT_NEAR(py.mean(0), 1e3, 1e-9);
  EXPECT_NEAR(output_posterior_mean(m, far)(0), py.mean(0), 1e-12);
}

TEST(Recovery, PosteriorVarianceBelowPrior) {
  const HWSystem sys = test::sine_system(random_stable_system(2, 8));
  const Trajectory t = simulate_hw(sys, test::gaussian_vector(80, 8), VectorXd::Zero(2), 9);
  const DataEmbedding e = build_embedding(t, 2, 1);
  const ImplicitGPModel m(e, initial_hyper(e, 1e-3));
  const VectorXd grid = VectorXd::LinSpaced(41, -3, 3);
  const Recovery r = recover_nonlinearities(m, grid, grid);
  EXPECT_TRUE((r.input.stdev.array() <= 1.0 + 1e-12).all());
  EXPECT_TRUE((r.output.stdev.array() <= 1.0 + 1e-12).all());
  EXPECT_TRUE((r.input.stdev.array() >= 0.0).all());
  EXPECT_LT((output_posterior_mean(m, grid) - r.output.mean).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(recover_nonlinearities(m, VectorXd(), grid), std::invalid_argument);
}

TEST(ScaledRmse, OptimalScale) {
  const VectorXd truth = VectorXd::LinSpaced(11, -1, 1).array().sin();
  double c = 0.0;
  EXPECT_NEAR(scaled_rmse(-3.0 * truth, truth, &c), 0.0, 1e-15);
  EXPECT_NEAR(c, -1.0 / 3.0, 1e-15);
  const VectorXd est = truth + 0.1 * test::gaussian_vector(11, 1);
  const double best = scaled_rmse(est, truth, &c);
  for (double d : {-0.01, 0.01}) {
    const double other = std::sqrt(((c + d) * est - truth).squaredNorm() / 11.0);
    EXPECT_GT(other, best);
  }
  EXPECT_NEAR(scaled_rmse(VectorXd::Zero(3), VectorXd::Ones(3)), 1.0, 1e-15);
  EXPECT_THROW(scaled_rmse(VectorXd::Zero(2), VectorXd::Zero(3)), std::invalid_argument);
}
