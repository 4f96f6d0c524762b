#include "hwgp/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "hwgp/errors.hpp"
#include "hwgp/hankel.hpp"
#include "hwgp/linpred.hpp"

#ifndef HWGP_VERSION
#define HWGP_VERSION "0.1.0"
#endif

namespace hwgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected, int line) {
  std::string msg = key + ": expected " + expected + ", got '" + value + "'";
  if (line > 0) msg = "line " + std::to_string(line) + ": " + msg;
  throw ConfigError(msg, line);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected, int line) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  if (!value.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) bad_value(key, value, expected, line);
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) bad_value(key, value, expected, line);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value, int line) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "a boolean", line);
}

std::vector<double> parse_list(const std::string& key, const std::string& value, int line) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item), "a list of numbers", line));
  if (out.empty()) bad_value(key, value, "a non-empty list of numbers", line);
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_number(v[i]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&, int)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field int_field(const char* key, T ExperimentConfig::*member) {
  return {key,
          [key, member](ExperimentConfig& c, const std::string& v, int line) {
            c.*member = parse_number<T>(key, v, "an integer", line);
          },
          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(const char* key, double ExperimentConfig::*member) {
  return {key,
          [key, member](ExperimentConfig& c, const std::string& v, int line) {
            c.*member = parse_number<double>(key, v, "a number", line);
          },
          [member](const ExperimentConfig& c) { return format_number(c.*member); }};
}

Field bool_field(const char* key, bool ExperimentConfig::*member) {
  return {key, [key, member](ExperimentConfig& c, const std::string& v, int line) { c.*member = parse_bool(key, v, line); },
          [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field text_field(const char* key, std::string ExperimentConfig::*member) {
  return {key,
          [key, member](ExperimentConfig& c, const std::string& v, int line) {
            if (v.empty()) bad_value(key, v, "a non-empty string", line);
            c.*member = v;
          },
          [member](const ExperimentConfig& c) { return c.*member; }};
}

Field list_field(const char* key, std::vector<double> ExperimentConfig::*member) {
  return {key, [key, member](ExperimentConfig& c, const std::string& v, int line) { c.*member = parse_list(key, v, line); },
          [member](const ExperimentConfig& c) { return join(c.*member); }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = {
      int_field("seed", &C::seed),
      int_field("samples", &C::samples),
      int_field("past", &C::past),
      int_field("future", &C::future),
      real_field("sigma", &C::sigma),
      text_field("input_nonlinearity", &C::input_nonlinearity),
      text_field("output_nonlinearity", &C::output_nonlinearity),
      int_field("state_dim", &C::state_dim),
      real_field("h2_norm", &C::h2_norm),
      int_field("test_length", &C::test_length),
      int_field("window_stride", &C::window_stride),
      bool_field("cross_validate", &C::cross_validate),
      list_field("cv_lambdas", &C::cv_lambdas),
      list_field("cv_alphas", &C::cv_alphas),
      real_field("cv_split", &C::cv_split),
      int_field("cv_iterations", &C::cv_iterations),
      bool_field("cv_global_search", &C::cv_global_search),
      bool_field("cv_all_steps", &C::cv_all_steps),
      real_field("zeta_lambda", &C::zeta_lambda),
      real_field("zeta_alpha", &C::zeta_alpha),
      int_field("fit_starts", &C::fit_starts),
      int_field("fit_iterations", &C::fit_iterations),
      real_field("min_length_ratio", &C::min_length_ratio),
      real_field("min_noise_ratio", &C::min_noise_ratio),
      text_field("criterion", &C::criterion),
      int_field("swarm_size", &C::swarm_size),
      int_field("swarm_iterations", &C::swarm_iterations),
      int_field("polish_iterations", &C::polish_iterations),
      int_field("trials", &C::trials),
      int_field("recover_future", &C::recover_future),
      int_field("grid_points", &C::grid_points),
      list_field("plant_num", &C::plant_num),
      list_field("plant_den", &C::plant_den),
      real_field("q_weight", &C::q_weight),
      real_field("r_weight", &C::r_weight),
      real_field("probability", &C::probability),
      real_field("lipschitz", &C::lipschitz),
      real_field("soft_penalty", &C::soft_penalty),
      real_field("reference_amplitude", &C::reference_amplitude),
      real_field("reference_period", &C::reference_period),
      real_field("lower_bound", &C::lower_bound),
      real_field("upper_bound", &C::upper_bound),
      int_field("control_steps", &C::control_steps),
      bool_field("control_cross_validate", &C::control_cross_validate),
      text_field("out_dir", &C::out_dir),
  };
  return table;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("invalid configuration: " + msg);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, SeedStream stream) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
}

constexpr SeedStream training = SeedStream::training;
constexpr SeedStream testing = SeedStream::testing;
constexpr SeedStream predictor = SeedStream::predictor;
constexpr SeedStream loop = SeedStream::loop;
constexpr SeedStream controller = SeedStream::controller;

HWSystem experiment_plant(const ExperimentConfig& c, std::uint64_t seed) {
  return make_hw_system(random_stable_system(c.state_dim, seed, c.h2_norm), nonlinearity_from_name(c.input_nonlinearity),
                        nonlinearity_from_name(c.output_nonlinearity), c.sigma);
}

VectorXd rmse_per_step(const MatrixXd& sq_err) {
  return (sq_err.rowwise().sum() / static_cast<double>(sq_err.cols())).array().sqrt().matrix();
}

VectorXd grid(Index n) {
  VectorXd g = VectorXd::LinSpaced(n, -std::numbers::pi, std::numbers::pi);
  g(0) = -std::numbers::pi;
  g(n - 1) = std::numbers::pi;
  return g;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream) { return derive(seed, stream); }

void ExperimentConfig::validate() const {
  require(past >= 1, "past must be >= 1");
  require(future >= 1, "future must be >= 1");
  require(samples >= 2 * (past + future), "samples must be at least 2 (past + future)");
  require(sigma >= 0.0, "sigma must be >= 0");
  require(state_dim >= 1, "state_dim must be >= 1");
  require(h2_norm > 0.0, "h2_norm must be > 0");
  require(test_length >= past + future, "test_length must cover one window");
  require(window_stride >= 1, "window_stride must be >= 1");
  for (double l : cv_lambdas) require(l > 0.0, "cv_lambdas must be positive");
  for (double a : cv_alphas) require(a > 0.0 && a < 1.0, "cv_alphas must lie in (0, 1)");
  require(!cv_lambdas.empty() && !cv_alphas.empty(), "empty cross-validation grid");
  require(cv_split > 0.0 && cv_split < 1.0, "cv_split must lie in (0, 1)");
  require(cv_iterations >= 1 && fit_iterations >= 1 && fit_starts >= 1, "iteration counts must be >= 1");
  require(zeta_lambda > 0.0 && zeta_alpha > 0.0 && zeta_alpha < 1.0, "zeta_lambda > 0 and 0 < zeta_alpha < 1");
  require(min_length_ratio > 0.0 && min_noise_ratio > 0.0, "floor ratios must be > 0");
  require(swarm_size >= 1 && swarm_iterations >= 1 && polish_iterations >= 1, "solver budgets must be >= 1");
  require(trials >= 1, "trials must be >= 1");
  require(recover_future >= 1, "recover_future must be >= 1");
  require(grid_points >= 2, "grid_points must be >= 2");
  require(!plant_den.empty() && plant_den.size() >= plant_num.size(), "plant_den must be at least as long as plant_num");
  require(q_weight >= 0.0 && r_weight >= 0.0, "cost weights must be >= 0");
  require(probability > 0.0 && probability < 1.0, "probability must lie in (0, 1)");
  require(lipschitz >= 0.0 && soft_penalty >= 0.0, "lipschitz and soft_penalty must be >= 0");
  require(reference_period > 0.0, "reference_period must be > 0");
  require(lower_bound < upper_bound, "lower_bound must be below upper_bound");
  require(control_steps >= 1, "control_steps must be >= 1");
  try {
    nonlinearity_from_name(input_nonlinearity);
    nonlinearity_from_name(output_nonlinearity);
    criterion_from_name(criterion);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value, int line) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(config, value, line);
      return;
    }
  }
  std::string msg = "unknown key '" + key + "'";
  if (line > 0) msg = "line " + std::to_string(line) + ": " + msg;
  throw ConfigError(msg, line);
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig config;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(raw.substr(0, raw.find('#')));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line) + ": expected 'key = value'", line);
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    try {
      apply_setting(config, key, value, 0);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line) + ": " + e.what(), line);
    }
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

std::string to_text(const ExperimentConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Field& f : fields()) {
    if (std::string_view(f.key) == "out_dir") continue;
    const std::string line = std::string(f.key) + " = " + f.get(config) + "\n";
    for (unsigned char ch : line) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string version_string() { return "hwgp " HWGP_VERSION; }

// --- CSV --------------------------------------------------------------------

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) throw std::invalid_argument("CsvTable::add_row: row width does not match header");
  rows.push_back(std::move(row));
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_csv(const std::string& path, const CsvTable& table, const ExperimentConfig& config) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw OutputError("cannot write '" + path + "'");
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash(config)));
  out << "# version: " << version_string() << "\n";
  out << "# seed: " << config.seed << "\n";
  out << "# config_hash: " << hash << "\n";
  std::istringstream settings(to_text(config));
  for (std::string line; std::getline(settings, line);) {
    if (line.rfind("out_dir", 0) == 0) continue;
    out << "# " << line << "\n";
  }
  auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  out.flush();
  if (!out) throw OutputError("failed writing '" + path + "'");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw OutputError("cannot read '" + path + "'");
  CsvTable table;
  bool have_header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
    } else {
      table.add_row(std::move(cells));
    }
  }
  return table;
}

// --- shared pipeline --------------------------------------------------------

Trajectory experiment_trajectory(const HWSystem& sys, Index length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  VectorXd u(length);
  for (Index k = 0; k < length; ++k) u(k) = normal(rng);
  return simulate_hw(sys, u, VectorXd::Zero(sys.lin.state_dim()), splitmix64(seed));
}

JmapmlOptions fit_options(const ExperimentConfig& c, bool use_hyperprior) {
  JmapmlOptions o;
  o.use_hyperprior = use_hyperprior;
  o.starts = c.fit_starts;
  o.max_iterations = c.fit_iterations;
  o.min_length_ratio = c.min_length_ratio;
  o.min_noise_ratio = c.min_noise_ratio;
  return o;
}

PredictOptions predict_options(const ExperimentConfig& c, std::uint64_t seed) {
  PredictOptions o;
  o.criterion = criterion_from_name(c.criterion);
  o.swarm_size = c.swarm_size;
  o.swarm_iterations = c.swarm_iterations;
  o.polish_iterations = c.polish_iterations;
  o.seed = seed;
  return o;
}

TrainedModel train_implicit_gp(const ExperimentConfig& c, const Trajectory& data, Index future, bool use_hyperprior,
                               const std::optional<Zeta>& zeta) {
  TrainedModel out;
  out.data = data;
  out.embedding = build_embedding(data, c.past, future);
  if (zeta) {
    out.zeta = *zeta;
  } else if (c.cross_validate) {
    CrossValidationOptions cv;
    cv.split = c.cv_split;
    cv.fit = fit_options(c, true);
    cv.fit.starts = 1;
    cv.fit.max_iterations = c.cv_iterations;
    cv.global_search = c.cv_global_search;
    cv.all_steps = c.cv_all_steps;
    cv.seed = derive(c.seed, predictor);
    const CrossValidationResult r = cross_validate_zeta(data, c.past, future, c.cv_lambdas, c.cv_alphas, cv);
    out.zeta = r.best;
    out.cv_scores = r.scores;
  } else {
    out.zeta = Zeta{c.zeta_lambda, c.zeta_alpha};
  }
  out.fit = fit_jmapml(out.embedding, out.zeta, fit_options(c, use_hyperprior));
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// --- predict-bench ------------------------------------------------------------

PredictBenchResult run_predict_bench(const ExperimentConfig& c, std::ostream* progress) {
  c.validate();
  constexpr int methods = 4;
  const Index Lp = c.future;
  const Index L = c.past + Lp;

  PredictBenchResult out;
  out.rmse.assign(methods, std::vector<VectorXd>(c.trials, VectorXd::Constant(Lp, std::nan(""))));
  out.failed.assign(methods, std::vector<bool>(c.trials, true));
  out.failures.assign(methods, 0);

  for (int t = 0; t < c.trials; ++t) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(t);
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::string> errors(methods);
    try {
      const HWSystem sys = experiment_plant(c, seed);
      const Trajectory train = experiment_trajectory(sys, c.samples, derive(seed, training));
      const Trajectory test = experiment_trajectory(sys, c.test_length, derive(seed, testing));

      // Each predictor maps (u window, y past) to y_f; an empty optional marks a failed fit.
      using Predictor = std::function<VectorXd(const VectorXd&, const VectorXd&, std::uint64_t)>;
      std::vector<std::optional<Predictor>> predictors(methods);

      std::shared_ptr<ImplicitGPModel> alg, ablation;
      std::optional<Zeta> zeta;
      try {
        const TrainedModel m = train_implicit_gp(c, train, Lp, true);
        zeta = m.zeta;
        alg = std::make_shared<ImplicitGPModel>(m.embedding, m.fit.hyper);
      } catch (const std::exception& e) {
        errors[0] = e.what();
      }
      try {
        const TrainedModel m = train_implicit_gp(c, train, Lp, false, zeta.value_or(Zeta{c.zeta_lambda, c.zeta_alpha}));
        ablation = std::make_shared<ImplicitGPModel>(m.embedding, m.fit.hyper);
      } catch (const std::exception& e) {
        errors[1] = e.what();
      }
      for (int i = 0; i < 2; ++i) {
        auto model = i == 0 ? alg : ablation;
        if (!model) continue;
        predictors[i] = [model, &c](const VectorXd& u, const VectorXd& yp, std::uint64_t s) {
          return predict(*model, u, yp, predict_options(c, s)).y_f;
        };
      }
      try {
        auto narx = std::make_shared<NarxModel>(fit_narx_gp(train, c.past, Lp));
        predictors[2] = [narx](const VectorXd& u, const VectorXd& yp, std::uint64_t) {
          return narx_predict(*narx, u, yp).mean;
        };
      } catch (const std::exception& e) {
        errors[2] = e.what();
      }
      try {
        const DataEmbedding emb = build_embedding(train, c.past, Lp);
        const ARXParams lsq = fit_subspace(emb.Hu, emb.Hy, c.past, Lp);
        predictors[3] = [lsq](const VectorXd& u, const VectorXd& yp, std::uint64_t) {
          return subspace_predict(lsq, u, yp);
        };
      } catch (const std::exception& e) {
        errors[3] = e.what();
      }

      for (int i = 0; i < methods; ++i) {
        if (!predictors[i]) continue;
        try {
          std::vector<VectorXd> sq;
          for (Index k = 0; k + L <= test.size(); k += c.window_stride) {
            const VectorXd u = test.u.segment(k, L);
            const VectorXd yp = test.y.segment(k, c.past);
            const VectorXd truth = test.y0.segment(k + c.past, Lp);
            const VectorXd yf = (*predictors[i])(u, yp, derive(seed ^ static_cast<std::uint64_t>(k), predictor));
            sq.push_back((yf - truth).array().square().matrix());
          }
          MatrixXd E(Lp, static_cast<Index>(sq.size()));
          for (Index j = 0; j < E.cols(); ++j) E.col(j) = sq[static_cast<std::size_t>(j)];
          const VectorXd r = rmse_per_step(E);
          if (!r.allFinite()) throw NumericalError("non-finite prediction error");
          out.rmse[i][t] = r;
          out.failed[i][t] = false;
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    } catch (const std::exception& e) {
      for (auto& err : errors) err = e.what();
    }
    for (int i = 0; i < methods; ++i) out.failures[i] += out.failed[i][t] ? 1 : 0;

    if (progress) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      *progress << "trial " << (t + 1) << "/" << c.trials << " (" << format_number(std::round(secs * 10) / 10)
                << " s)";
      for (int i = 0; i < methods; ++i) {
        *progress << "  " << kBenchMethods[i] << "=";
        if (out.failed[i][t])
          *progress << "failed";
        else
          *progress << format_number(std::round(out.rmse[i][t].mean() * 1000) / 1000);
      }
      *progress << "\n";
      for (int i = 0; i < methods; ++i)
        if (!errors[i].empty()) *progress << "  " << kBenchMethods[i] << ": " << errors[i] << "\n";
      progress->flush();
    }
  }

  out.median.assign(methods, VectorXd::Constant(Lp, std::nan("")));
  for (int i = 0; i < methods; ++i) {
    for (Index l = 0; l < Lp; ++l) {
      std::vector<double> vals;
      for (int t = 0; t < c.trials; ++t)
        if (!out.failed[i][t]) vals.push_back(out.rmse[i][t](l));
      out.median[i](l) = median(vals);
    }
  }

  out.table.header = {"kind", "trial", "method", "step", "rmse", "failed"};
  for (int t = 0; t < c.trials; ++t)
    for (int i = 0; i < methods; ++i)
      for (Index l = 0; l < Lp; ++l)
        out.table.add_row({"trial", std::to_string(t), kBenchMethods[i], std::to_string(l + 1),
                           format_number(out.rmse[i][t](l)), out.failed[i][t] ? "1" : "0"});
  for (int i = 0; i < methods; ++i)
    for (Index l = 0; l < Lp; ++l)
      out.table.add_row({"median", "all", kBenchMethods[i], std::to_string(l + 1), format_number(out.median[i](l)),
                         std::to_string(out.failures[i])});
  return out;
}

// --- recover ------------------------------------------------------------------

RecoverResult run_recover(const ExperimentConfig& c, std::ostream* progress) {
  c.validate();
  RecoverResult out;
  const HWSystem sys = experiment_plant(c, c.seed);
  const Trajectory train = experiment_trajectory(sys, c.samples, derive(c.seed, training));
  out.model = train_implicit_gp(c, train, c.recover_future, true);
  const ImplicitGPModel model(out.model.embedding, out.model.fit.hyper);

  out.grid = grid(c.grid_points);
  out.psi = input_nonlinearity_posterior(model, out.grid);
  out.phi = output_nonlinearity_posterior(model, out.grid);
  out.psi_true = out.grid.unaryExpr([&sys](double v) { return sys.psi(v); });
  out.phi_true = out.grid.unaryExpr([&sys](double v) { return sys.phi(v); });
  out.psi_rmse = scaled_rmse(out.psi.mean, out.psi_true, &out.psi_scale);
  out.phi_rmse = scaled_rmse(out.phi.mean, out.phi_true, &out.phi_scale);

  out.table.header = {"function", "point", "mean", "stdev", "truth"};
  for (int f = 0; f < 2; ++f) {
    const PointwisePosterior& post = f == 0 ? out.psi : out.phi;
    const VectorXd& truth = f == 0 ? out.psi_true : out.phi_true;
    for (Index i = 0; i < out.grid.size(); ++i)
      out.table.add_row({f == 0 ? "psi" : "phi", format_number(out.grid(i)), format_number(post.mean(i)),
                         format_number(post.stdev(i)), format_number(truth(i))});
  }
  if (progress) {
    const HyperParams& h = out.model.fit.hyper;
    *progress << "zeta = (" << format_number(out.model.zeta.lambda) << ", " << format_number(out.model.zeta.alpha)
              << ")  l_u = " << format_number(h.length_u) << "  l_y = " << format_number(h.length_y)
              << "  sigma2 = " << format_number(h.noise_var) << "\n";
    *progress << "psi rmse (scaled) = " << format_number(out.psi_rmse) << "  scale = " << format_number(out.psi_scale)
              << "\n";
    *progress << "phi rmse (scaled) = " << format_number(out.phi_rmse) << "  scale = " << format_number(out.phi_scale)
              << "\n";
  }
  return out;
}

// --- control ------------------------------------------------------------------

ControllerConfig controller_config(const ExperimentConfig& c) {
  ControllerConfig cc = ControllerConfig::tracking(c.future, c.lower_bound, c.upper_bound);
  cc.Q *= c.q_weight;
  cc.R *= c.r_weight;
  cc.p = c.probability;
  cc.lipschitz = c.lipschitz;
  cc.soft_penalty = c.soft_penalty;
  cc.seed = derive(c.seed, controller);
  cc.validate();
  return cc;
}

HWSystem control_plant(const ExperimentConfig& c) {
  return make_hw_system(transfer_function(c.plant_num, c.plant_den), nonlinearity_from_name(c.input_nonlinearity),
                        nonlinearity_from_name(c.output_nonlinearity), c.sigma);
}

ControlResult run_control(const ExperimentConfig& c, std::ostream* progress) {
  c.validate();
  ControlResult out;
  const HWSystem sys = control_plant(c);
  const Trajectory train = experiment_trajectory(sys, c.samples, derive(c.seed, training));
  ExperimentConfig fit_config = c;
  fit_config.cross_validate = c.control_cross_validate;
  out.model = train_implicit_gp(fit_config, train, c.future, true);
  const ControllerConfig cc = controller_config(c);
  const double amp = c.reference_amplitude;
  const double period = c.reference_period;
  const ReferenceFn reference = [amp, period](Index k) {
    return amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / period);
  };

  auto model = std::make_shared<const ImplicitGPModel>(out.model.embedding, out.model.fit.hyper);
  std::vector<std::unique_ptr<Controller>> controllers;
  controllers.push_back(std::make_unique<ImplicitGPController>(cc, model));
  controllers.push_back(std::make_unique<BlackBoxController>(cc, fit_narx_gp(train, c.past, c.future)));
  controllers.push_back(
      std::make_unique<SpcController>(cc, fit_subspace(out.model.embedding.Hu, out.model.embedding.Hy, c.past, c.future)));

  const std::uint64_t loop_seed = derive(c.seed, loop);
  out.summary.header = {"controller", "steps", "satisfaction", "tracking_rmse", "coverage", "flagged"};
  for (auto& ctrl : controllers) {
    ClosedLoopLog log = closed_loop(sys, *ctrl, cc, reference, c.control_steps, loop_seed);
    const auto flagged = std::count(log.flagged.begin(), log.flagged.end(), true);
    CsvTable table;
    table.header = {"step", "r", "u", "y", "y0", "predicted", "lower", "upper", "violation", "flagged"};
    for (Index k = 0; k < log.steps(); ++k)
      table.add_row({std::to_string(k), format_number(log.r(k)), format_number(log.u(k)), format_number(log.y(k)),
                     format_number(log.y0(k)), format_number(log.predicted(k)), format_number(log.lower(k)),
                     format_number(log.upper(k)),
                     log.violation[static_cast<std::size_t>(k)] ? "1" : "0",
                     log.flagged[static_cast<std::size_t>(k)] ? "1" : "0"});
    out.summary.add_row({log.controller, std::to_string(log.steps()), format_number(log.satisfaction_rate()),
                         format_number(log.tracking_rmse()), format_number(log.coverage()), std::to_string(flagged)});
    if (progress) {
      *progress << log.controller << ": satisfaction = " << format_number(log.satisfaction_rate())
                << "  tracking rmse = " << format_number(log.tracking_rmse())
                << "  coverage = " << format_number(log.coverage()) << "  flagged = " << flagged
                << "  solve time = " << format_number(std::round(log.solve_seconds.sum() * 10) / 10) << " s\n";
      progress->flush();
    }
    out.tables.push_back(std::move(table));
    out.logs.push_back(std::move(log));
  }
  return out;
}

}  // namespace hwgp
