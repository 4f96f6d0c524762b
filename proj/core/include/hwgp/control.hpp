#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hwgp/gpcore.hpp"
#include "hwgp/implicit_gp.hpp"
#include "hwgp/linsys.hpp"
#include "hwgp/solvers.hpp"

namespace hwgp {

/// P(dof/2, x/2), the chi-squared CDF.
double chi2_cdf(double x, int dof);
/// Inverse of chi2_cdf by bracketed bisection. Requires 0 < p < 1.
double chi2_quantile(double p, int dof);

struct ControllerConfig {
  Eigen::MatrixXd Q;  // L' x L'
  Eigen::MatrixXd R;  // L' x L'
  Eigen::MatrixXd H;  // n_c x L'
  Eigen::VectorXd q;  // n_c
  double p = 0.7;
  double lipschitz = 2.0;
  double soft_penalty = 100.0;
  std::optional<Box> input_box;  // unconstrained when empty

  int retighten_iterations = 3;
  int max_iterations = 200;
  int swarm_size = 30;
  int swarm_iterations = 60;
  std::uint64_t seed = 0;

  Eigen::Index horizon() const { return Q.rows(); }
  /// Throws std::invalid_argument on inconsistent shapes, p outside (0, 1),
  /// a negative Lipschitz constant or an empty input box.
  void validate() const;

  /// Q = R = I, output box lower <= y <= upper on every step.
  static ControllerConfig tracking(Eigen::Index horizon, double lower, double upper);
};

struct Tightening {
  Eigen::VectorXd bound;  // q - c_p sqrt(diag(H H^T))
  double c_p = 0.0;
  double sigma_p = 0.0;  // largest eigenvalue of hat k_p
};

/// Chance-constraint tightening with the chi-squared quantile for
/// hat_kp.rows() degrees of freedom.
Tightening tighten(const ControllerConfig& config, const GaussianPosterior& posterior, const Eigen::MatrixXd& hat_kp);

/// First L0 inputs and outputs of the prediction window.
struct History {
  Eigen::VectorXd u;
  Eigen::VectorXd y;
};

struct CostTerms {
  double input = 0.0;     // ||u||_R^2
  double tracking = 0.0;  // ||m_yp(y) + m_p - m_yp(r)||_Q^2
  double variance = 0.0;  // tr(Q hat k_p)
  double total() const { return input + tracking + variance; }
};

/// Expected control cost for a given Phi(r) estimate (`phi_r`, see
/// output_posterior_mean). The posterior is returned through `posterior`
/// and `hat_kp` when requested.
CostTerms expected_cost(const ControllerConfig& config, const ImplicitGPModel& model, const History& history,
                        const Eigen::VectorXd& u_seq, const Eigen::VectorXd& y_seq, const Eigen::VectorXd& phi_r,
                        GaussianPosterior* posterior = nullptr, Eigen::MatrixXd* hat_kp = nullptr);

/// ||max(0, H y - bound)||^2.
double constraint_excess(const Eigen::MatrixXd& H, const Eigen::VectorXd& y, const Eigen::VectorXd& bound);

struct RhcSolution {
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  double cost = 0.0;       // penalized objective under the final tightening
  double seed_cost = 0.0;  // same objective at the seed
  Tightening tightening;
  GaussianPosterior posterior;
  Eigen::MatrixXd hat_kp;
  int retightens = 0;
  bool restarted = false;  // particle swarm restart was used
  bool flagged = false;
};

/// Joint optimization over (u^k, y^k). Seeds: u = 0 with the subspace
/// rollout for y, plus `warm` (u, y) when given.
RhcSolution solve_rhc(const ControllerConfig& config, const ImplicitGPModel& model, const History& history,
                      const Eigen::VectorXd& r_seq, const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& warm = {});

struct BlackBoxSolution {
  Eigen::VectorXd u;
  Eigen::VectorXd y;      // m_bb
  Eigen::VectorXd stdev;  // sigma_bb
  Eigen::VectorXd bound;
  double cost = 0.0;
  double seed_cost = 0.0;
  bool restarted = false;
  bool flagged = false;
};

/// ||u||_R^2 + ||m_bb - r||_Q^2 + diag(Q)^T sigma_bb^2 with the bound
/// q - max(sigma_bb) sqrt(mu(p) diag(H H^T)) as a soft constraint.
double blackbox_cost(const ControllerConfig& config, const NarxModel& model, const History& history,
                     const Eigen::VectorXd& u_seq, const Eigen::VectorXd& r_seq, NarxPrediction* prediction = nullptr,
                     Eigen::VectorXd* bound = nullptr);

BlackBoxSolution solve_rhc_blackbox(const ControllerConfig& config, const NarxModel& model, const History& history,
                                    const Eigen::VectorXd& r_seq, const std::optional<Eigen::VectorXd>& warm = {});

struct SpcSolution {
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  double cost = 0.0;
};

/// Subspace predictive control with certainty equivalence:
/// ||u||_R^2 + ||y - r||_Q^2 + penalty ||max(0, H y - q)||^2 with
/// y = Gamma1 col(u_past, u) + Gamma2 y_past.
SpcSolution solve_spc(const ControllerConfig& config, const ARXParams& gamma, const History& history,
                      const Eigen::VectorXd& r_seq);

// --- closed loop ------------------------------------------------------------

struct ControlAction {
  Eigen::VectorXd u_seq;
  Eigen::VectorXd y_seq;
  double predicted = 0.0;  // predicted first output
  double lower = 0.0;      // one-standard-deviation band around it
  double upper = 0.0;
  bool flagged = false;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual Eigen::Index past() const = 0;
  virtual Eigen::Index horizon() const = 0;
  virtual ControlAction act(const History& history, const Eigen::VectorXd& r_seq) = 0;
};

/// Proposed controller. The planned y^k is only a surrogate (the cost sees
/// Phi(y) + m_p), so the first-output prediction solves
/// Phi_hat(y_0) = Phi_hat(y^k_0) + m_p,0 with Phi_hat the recovered posterior
/// mean, and the band maps Phi_hat(y^k_0) + m_p,0 -/+ sqrt(hat k_p,00) back the
/// same way.
class ImplicitGPController : public Controller {
 public:
  ImplicitGPController(ControllerConfig config, std::shared_ptr<const ImplicitGPModel> model);
  std::string name() const override { return "implicit_gp"; }
  Eigen::Index past() const override { return model_->past(); }
  Eigen::Index horizon() const override { return model_->future(); }
  ControlAction act(const History& history, const Eigen::VectorXd& r_seq) override;
  const RhcSolution& last() const { return last_; }

 private:
  ControllerConfig config_;
  std::shared_ptr<const ImplicitGPModel> model_;
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> warm_;
  RhcSolution last_;
  Eigen::VectorXd grid_;      // output grid spanning the training range
  Eigen::VectorXd phi_grid_;  // Phi_hat on grid_

  double invert(double target, double anchor) const;
};

class BlackBoxController : public Controller {
 public:
  BlackBoxController(ControllerConfig config, NarxModel model);
  std::string name() const override { return "black_box"; }
  Eigen::Index past() const override { return model_.past; }
  Eigen::Index horizon() const override { return model_.future; }
  ControlAction act(const History& history, const Eigen::VectorXd& r_seq) override;

 private:
  ControllerConfig config_;
  NarxModel model_;
  std::optional<Eigen::VectorXd> warm_;
};

class SpcController : public Controller {
 public:
  SpcController(ControllerConfig config, ARXParams gamma);
  std::string name() const override { return "spc"; }
  Eigen::Index past() const override { return gamma_.past; }
  Eigen::Index horizon() const override { return gamma_.future; }
  ControlAction act(const History& history, const Eigen::VectorXd& r_seq) override;

 private:
  ControllerConfig config_;
  ARXParams gamma_;
};

struct ClosedLoopLog {
  std::string controller;
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  Eigen::VectorXd y0;
  Eigen::VectorXd r;
  Eigen::VectorXd predicted;
  Eigen::VectorXd lower;  // prediction band
  Eigen::VectorXd upper;
  std::vector<bool> violation;  // H y_0 > q on the noise-free output
  std::vector<bool> flagged;
  Eigen::VectorXd solve_seconds;

  Eigen::Index steps() const { return u.size(); }
  double satisfaction_rate() const;
  double tracking_rmse() const;  // noise-free output against the reference
  /// Fraction of steps with lower <= y0 <= upper.
  double coverage() const;
};

using ReferenceFn = std::function<double(Eigen::Index)>;

/// Receding-horizon loop from the zero state. The first `past` steps apply
/// u = 0 to build the history; logging starts after them. Violations use
/// rows of (H, q) that act on the first horizon step.
ClosedLoopLog closed_loop(const HWSystem& sys, Controller& controller, const ControllerConfig& config,
                          const ReferenceFn& reference, Eigen::Index steps, std::uint64_t seed);

}  // namespace hwgp
