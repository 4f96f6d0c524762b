#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hwgp/experiment.hpp"

using namespace hwgp;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hwgp_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.samples = 60;
  c.test_length = 30;
  c.trials = 1;
  c.cross_validate = false;
  c.fit_starts = 1;
  c.fit_iterations = 30;
  c.swarm_size = 8;
  c.swarm_iterations = 5;
  c.polish_iterations = 20;
  return c;
}

}  // namespace

TEST(Config, TextRoundTrip) {
  ExperimentConfig c;
  c.seed = 77;
  c.sigma = 0.125;
  c.cv_lambdas = {0.1, 3.0};
  c.criterion = "ml";
  c.cv_global_search = true;
  std::istringstream in(to_text(c));
  const ExperimentConfig back = parse_config(in);
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(back.cv_lambdas, c.cv_lambdas);
  EXPECT_EQ(back.seed, 77u);
}

TEST(Config, MissingKeysKeepDefaults) {
  std::istringstream in("# comment\n\nseed = 5   # trailing\n");
  const ExperimentConfig c = parse_config(in);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.samples, ExperimentConfig{}.samples);
  EXPECT_EQ(c.cv_alphas, ExperimentConfig{}.cv_alphas);
}

TEST(Config, ErrorsCarryLineNumbers) {
  std::istringstream unknown("seed = 1\nbogus = 2\n");
  try {
    parse_config(unknown, "f.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("f.cfg:2"), std::string::npos);
  }
  for (const char* text : {"samples = x\n", "sigma = 1.0.0\n", "cross_validate = maybe\n", "seed 3\n",
                           "cv_lambdas = 1,,2\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_config(in), ConfigError) << text;
  }
  std::istringstream invalid("sigma = -1\n");
  EXPECT_THROW(parse_config(invalid).validate(), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/x.cfg"), ConfigError);
}

TEST(Config, HashIgnoresOutputDirectory) {
  ExperimentConfig a, b;
  b.out_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Csv, NumberFormatting) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(-2.0), "-2");
  EXPECT_EQ(format_number(std::nan("")), "nan");
  EXPECT_EQ(format_number(-INFINITY), "-inf");
  EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Csv, WriteReadWithProvenance) {
  const fs::path dir = scratch_dir("csv");
  CsvTable t;
  t.header = {"a", "b"};
  t.add_row({"1", "x"});
  t.add_row({"2", "y"});
  EXPECT_THROW(t.add_row({"3"}), std::invalid_argument);
  ExperimentConfig c;
  c.seed = 42;
  const std::string path = (dir / "sub" / "t.csv").string();
  write_csv(path, t, c);
  const CsvTable back = read_csv(path);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find("# seed: 42"), std::string::npos);
  EXPECT_NE(text.find("# version: "), std::string::npos);
  EXPECT_NE(text.find("# samples = 100"), std::string::npos);  // defaults are echoed
  fs::remove_all(dir);
}

TEST(Seeds, StreamsAreDistinct) {
  EXPECT_NE(derive_seed(1, SeedStream::training), derive_seed(1, SeedStream::testing));
  EXPECT_NE(derive_seed(1, SeedStream::training), derive_seed(2, SeedStream::training));
  EXPECT_EQ(derive_seed(3, SeedStream::loop), derive_seed(3, SeedStream::loop));
}

TEST(PredictBench, LinearIdentityPlantIsExactForLinearPredictor) {
  ExperimentConfig c = small_config();
  c.sigma = 0.0;
  c.input_nonlinearity = "identity";
  c.output_nonlinearity = "identity";
  const PredictBenchResult r = run_predict_bench(c);
  ASSERT_EQ(r.rmse.size(), 4u);
  EXPECT_LT(r.rmse[3][0].maxCoeff(), 1e-6);
  EXPECT_EQ(r.table.rows.size(), static_cast<std::size_t>(c.trials * 4 * c.future + 4 * c.future));
  EXPECT_EQ(r.failures, std::vector<int>(4, 0));
}

TEST(Recover, GridAndDeterminism) {
  ExperimentConfig c = small_config();
  const RecoverResult a = run_recover(c);
  ASSERT_EQ(a.grid.size(), 101);
  EXPECT_EQ(a.grid(0), -M_PI);
  EXPECT_EQ(a.grid(100), M_PI);
  EXPECT_EQ(a.table.rows.size(), 202u);
  EXPECT_TRUE(std::isfinite(a.psi_rmse) && std::isfinite(a.phi_rmse));
  const RecoverResult b = run_recover(c);
  EXPECT_EQ(a.table.rows, b.table.rows);
}

TEST(Recover, IdentityPlantStaysInsideBand) {
  ExperimentConfig c = small_config();
  c.input_nonlinearity = "identity";
  c.output_nonlinearity = "identity";
  c.samples = 80;
  c.fit_iterations = 80;
  const RecoverResult r = run_recover(c);
  int inside = 0;
  for (Eigen::Index i = 0; i < r.grid.size(); ++i) {
    const double m = r.psi_scale * r.psi.mean(i);
    const double s = std::abs(r.psi_scale) * r.psi.stdev(i);
    if (std::abs(m - r.psi_true(i)) <= 2.0 * s + 0.05) ++inside;
  }
  EXPECT_GE(inside, 91);
  EXPECT_LT(r.psi_rmse, 0.25);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"predict_bench.cfg", "recover.cfg", "control.cfg"}) {
    const ExperimentConfig c = load_config(std::string(HWGP_CONFIG_DIR) + "/" + name);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_EQ(c.seed, 1u) << name;
  }
}
