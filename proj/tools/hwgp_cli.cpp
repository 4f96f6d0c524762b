// hwgp command-line driver: predict-bench, recover, control.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hwgp/errors.hpp"
#include "hwgp/experiment.hpp"

namespace {

enum ExitCode { ok = 0, config_error = 1, numerical_failure = 2 };

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> trials;
  bool full_scale = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "base random seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--trials", o.trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
  cmd->add_flag("--full-scale", o.full_scale, "run 50 trials");
}

hwgp::ExperimentConfig resolve(const CommonOptions& o) {
  hwgp::ExperimentConfig c = o.config_path.empty() ? hwgp::ExperimentConfig{} : hwgp::load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.full_scale) c.trials = 50;
  if (o.trials) c.trials = *o.trials;
  c.validate();
  return c;
}

std::string out_path(const hwgp::ExperimentConfig& c, const std::string& name) {
  return (std::filesystem::path(c.out_dir) / name).string();
}

void write_effective_config(const hwgp::ExperimentConfig& c, const std::string& name) {
  std::filesystem::create_directories(c.out_dir);
  std::ofstream out(out_path(c, name));
  if (!out) throw hwgp::OutputError("cannot write '" + out_path(c, name) + "'");
  out << "# " << hwgp::version_string() << "\n" << hwgp::to_text(c);
}

void cmd_predict_bench(const hwgp::ExperimentConfig& c) {
  write_effective_config(c, "predict_bench.cfg");
  const hwgp::PredictBenchResult r = hwgp::run_predict_bench(c, &std::cerr);
  hwgp::write_csv(out_path(c, "predict_bench.csv"), r.table, c);
  std::cout << "median rmse per step (failed trials excluded)\n";
  for (std::size_t i = 0; i < r.median.size(); ++i) {
    std::cout << "  " << hwgp::kBenchMethods[i] << ":";
    for (Eigen::Index l = 0; l < r.median[i].size(); ++l) std::cout << " " << hwgp::format_number(r.median[i](l));
    std::cout << "  (failures: " << r.failures[i] << ")\n";
  }
}

void cmd_recover(const hwgp::ExperimentConfig& c) {
  write_effective_config(c, "recover.cfg");
  const hwgp::RecoverResult r = hwgp::run_recover(c, &std::cout);
  hwgp::write_csv(out_path(c, "recover.csv"), r.table, c);
}

void cmd_control(const hwgp::ExperimentConfig& c) {
  write_effective_config(c, "control.cfg");
  const hwgp::ControlResult r = hwgp::run_control(c, &std::cout);
  for (std::size_t i = 0; i < r.logs.size(); ++i)
    hwgp::write_csv(out_path(c, "control_" + r.logs[i].controller + ".csv"), r.tables[i], c);
  hwgp::write_csv(out_path(c, "control_summary.csv"), r.summary, c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit Gaussian process prediction and control of Hammerstein-Wiener systems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hwgp::version_string());

  CommonOptions bench_opts, recover_opts, control_opts;
  auto* bench = app.add_subcommand("predict-bench", "Monte Carlo multi-step prediction benchmark");
  auto* recover = app.add_subcommand("recover", "recover the input and output nonlinearities on a grid");
  auto* control = app.add_subcommand("control", "closed-loop comparison of three predictive controllers");
  add_common(bench, bench_opts);
  add_common(recover, recover_opts);
  add_common(control, control_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  hwgp::ExperimentConfig config;
  try {
    if (bench->parsed()) config = resolve(bench_opts);
    if (recover->parsed()) config = resolve(recover_opts);
    if (control->parsed()) config = resolve(control_opts);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  }

  try {
    if (bench->parsed()) cmd_predict_bench(config);
    if (recover->parsed()) cmd_recover(config);
    if (control->parsed()) cmd_control(config);
  } catch (const hwgp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical_failure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const hwgp::OutputError& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return config_error;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return numerical_failure;
  }
  return ok;
}
