#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwgp/control.hpp"
#include "hwgp/hyperopt.hpp"
#include "hwgp/predict.hpp"

namespace hwgp {

/// Bad configuration file or value. `line` is 0 when not tied to a line.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& what, int line = 0) : std::invalid_argument(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Output file or directory cannot be written.
class OutputError : public std::runtime_error {
 public:
  explicit OutputError(const std::string& what) : std::runtime_error(what) {}
};

struct ExperimentConfig {
  std::uint64_t seed = 1;

  // Plant and data.
  Eigen::Index samples = 100;  // N
  Eigen::Index past = 2;       // L0
  Eigen::Index future = 4;     // L'
  double sigma = 0.01;
  std::string input_nonlinearity = "u+sin(u)";
  std::string output_nonlinearity = "y+sin(y)";
  int state_dim = 2;
  double h2_norm = 10.0;
  Eigen::Index test_length = 200;
  Eigen::Index window_stride = 1;  // test windows start every `window_stride` samples

  // Hyperparameter fit.
  bool cross_validate = true;
  std::vector<double> cv_lambdas{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> cv_alphas{0.5, 0.6, 0.7, 0.8, 0.9};
  double cv_split = 0.75;
  int cv_iterations = 80;
  bool cv_global_search = false;
  bool cv_all_steps = false;
  double zeta_lambda = 1.0;  // used when cross_validate = false
  double zeta_alpha = 0.7;
  int fit_starts = 3;
  int fit_iterations = 300;
  double min_length_ratio = 0.05;
  double min_noise_ratio = 1e-3;

  // Prediction.
  std::string criterion = "mmse";
  int swarm_size = 20;
  int swarm_iterations = 40;
  int polish_iterations = 50;

  // Monte Carlo benchmark.
  int trials = 10;

  // Recovery.
  Eigen::Index recover_future = 1;
  Eigen::Index grid_points = 101;

  // Closed loop.
  std::vector<double> plant_num{10.0, 0.0};
  std::vector<double> plant_den{1.0, 0.24, 0.36};
  double q_weight = 1.0;
  double r_weight = 1.0;
  double probability = 0.7;
  double lipschitz = 2.0;
  double soft_penalty = 100.0;
  double reference_amplitude = 2.0;
  double reference_period = 40.0;
  double lower_bound = -2.5;
  double upper_bound = 2.5;
  Eigen::Index control_steps = 200;
  // Selects zeta for the closed-loop model; off uses (zeta_lambda, zeta_alpha).
  bool control_cross_validate = false;

  std::string out_dir = "results";

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// key = value lines; '#' starts a comment; lists are comma separated.
/// Missing keys keep their defaults.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);
/// Applies one setting; throws ConfigError for unknown keys or bad values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value, int line = 0);

/// Every effective setting as "key = value" lines, in a fixed order.
/// parse_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& config);
/// 64-bit FNV-1a of to_text(config) (out_dir excluded).
std::uint64_t config_hash(const ExperimentConfig& config);
std::string version_string();

// --- CSV --------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
};

/// Shortest round-trip decimal; "nan", "inf", "-inf" for non-finite values.
std::string format_number(double v);

/// Writes '#'-prefixed provenance lines (version, seed, config hash and all
/// settings), then the header and rows. Throws OutputError when the file
/// cannot be written.
void write_csv(const std::string& path, const CsvTable& table, const ExperimentConfig& config);

/// Reads a file produced by write_csv, skipping '#' lines.
CsvTable read_csv(const std::string& path);

// --- shared pipeline --------------------------------------------------------

struct TrainedModel {
  Trajectory data;
  DataEmbedding embedding;
  Zeta zeta;
  JmapmlFit fit;
  std::vector<double> cv_scores;  // empty without cross-validation
};

/// Seed streams derived from a base seed; `derive_seed(s, stream)` gives
/// independent generators for the same base seed.
enum class SeedStream : std::uint64_t { training = 1, testing = 2, predictor = 3, loop = 4, controller = 5 };
std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream);

/// Unit Gaussian input, zero initial state.
Trajectory experiment_trajectory(const HWSystem& sys, Eigen::Index length, std::uint64_t seed);
JmapmlOptions fit_options(const ExperimentConfig& config, bool use_hyperprior = true);
PredictOptions predict_options(const ExperimentConfig& config, std::uint64_t seed);
/// Cross-validates zeta (when enabled) and fits JMAP-ML.
TrainedModel train_implicit_gp(const ExperimentConfig& config, const Trajectory& data, Eigen::Index future,
                               bool use_hyperprior = true, const std::optional<Zeta>& zeta = {});

// --- commands ---------------------------------------------------------------

inline const char* const kBenchMethods[] = {"algorithm1", "no_hyperprior", "black_box", "linear"};

struct PredictBenchResult {
  // rmse[method][trial](step); NaN for failed trials.
  std::vector<std::vector<Eigen::VectorXd>> rmse;
  std::vector<std::vector<bool>> failed;
  std::vector<Eigen::VectorXd> median;  // per method, failed trials excluded
  std::vector<int> failures;            // per method
  CsvTable table;
};

/// l-step RMSE on a fresh test trajectory for every trial; trial t uses
/// seed + t for the plant, the training data and the test data.
PredictBenchResult run_predict_bench(const ExperimentConfig& config, std::ostream* progress = nullptr);

struct RecoverResult {
  Eigen::VectorXd grid;
  PointwisePosterior psi;
  PointwisePosterior phi;
  Eigen::VectorXd psi_true;
  Eigen::VectorXd phi_true;  // inverse of the output nonlinearity
  double psi_rmse = 0.0;     // after the optimal scalar fit
  double phi_rmse = 0.0;
  double psi_scale = 0.0;
  double phi_scale = 0.0;
  TrainedModel model;
  CsvTable table;
};

RecoverResult run_recover(const ExperimentConfig& config, std::ostream* progress = nullptr);

struct ControlResult {
  std::vector<ClosedLoopLog> logs;  // implicit_gp, black_box, spc
  TrainedModel model;
  CsvTable summary;
  std::vector<CsvTable> tables;  // one per log
};

ControllerConfig controller_config(const ExperimentConfig& config);
HWSystem control_plant(const ExperimentConfig& config);
ControlResult run_control(const ExperimentConfig& config, std::ostream* progress = nullptr);

double median(std::vector<double> values);

}  // namespace hwgp
