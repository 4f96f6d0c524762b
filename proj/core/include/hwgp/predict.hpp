#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "hwgp/implicit_gp.hpp"
#include "hwgp/solvers.hpp"

namespace hwgp {

enum class Criterion { ml, mmse, mvu_trace };

const char* to_string(Criterion c);
/// "ml", "mmse", "mvu" (or "mvu-trace").
Criterion criterion_from_name(const std::string& name);

struct PredictOptions {
  Criterion criterion = Criterion::mmse;
  bool global_search = true;
  int swarm_size = 20;
  int swarm_iterations = 40;
  int stall_iterations = 10;
  std::uint64_t seed = 0;
  double box_scale = 5.0;  // search box: seed +- box_scale * std(training y)
  int polish_iterations = 50;
  // MVU penalty continuation.
  double mvu_tolerance = 1e-6;
  double mvu_initial_weight = 1.0;
  double mvu_max_weight = 1e8;
};

struct Prediction {
  Eigen::VectorXd y_f;
  GaussianPosterior posterior;
  Eigen::MatrixXd hat_kp;
  double objective = 0.0;       // criterion value at y_f
  double seed_objective = 0.0;  // criterion value at the subspace seed
  bool flagged = false;         // optimizer trouble or unmet MVU constraint
};

/// Criterion value of a posterior. For MVU this is the penalized objective
/// tr(hat k_p) + weight * ||m_p||^2.
double criterion_value(const ImplicitGPModel& model, const GaussianPosterior& posterior, Criterion criterion,
                       double mvu_weight = 0.0);

/// Optimal future outputs for the window (u, y_p): particle swarm around the
/// subspace prediction followed by a local polish.
Prediction predict(const ImplicitGPModel& model, const Eigen::VectorXd& u, const Eigen::VectorXd& y_past,
                   const PredictOptions& options = {});

/// Closed-form predictor for models without an output kernel and with the
/// identity output mean.
Eigen::VectorXd predict_hammerstein(const ImplicitGPModel& model, const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& y_past);

struct PointwisePosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd stdev;
};

/// Posterior of Psi at scalar query points.
PointwisePosterior input_nonlinearity_posterior(const ImplicitGPModel& model, const Eigen::VectorXd& points);
/// Posterior of Phi at scalar query points.
PointwisePosterior output_nonlinearity_posterior(const ImplicitGPModel& model, const Eigen::VectorXd& points);
/// Posterior mean of Phi only (no solve with Lambda needed).
Eigen::VectorXd output_posterior_mean(const ImplicitGPModel& model, const Eigen::VectorXd& points);

struct Recovery {
  PointwisePosterior input;
  PointwisePosterior output;
};

Recovery recover_nonlinearities(const ImplicitGPModel& model, const Eigen::VectorXd& u_grid,
                                const Eigen::VectorXd& y_grid);

/// RMSE of c * estimate against truth after the least-squares scalar c.
/// Sets `scale` when given.
double scaled_rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth, double* scale = nullptr);

}  // namespace hwgp
