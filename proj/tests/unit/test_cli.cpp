#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pidon/cli/commands.hpp"
#include "pidon/cli/config.hpp"
#include "pidon/errors.hpp"
#include "pidon/fields/fields.hpp"
#include "pidon/nets/checkpoint.hpp"
#include "pidon/oracle/fd.hpp"

namespace pidon::cli {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("pidon_cli_" + name);
  fs::remove_all(d);
  return d;
}

// A tiny Poisson setup that trains in well under a second.
// Explicit --set values in `args` win over these defaults.
std::vector<std::string> tiny(std::vector<std::string> args, const fs::path& out) {
  std::vector<std::string> defaults;
  for (const char* kv : {"data.n_train=16", "data.n_test=4", "data.m=12", "model.width=6", "model.depth=3",
                         "model.latent=6", "train.batch_samples=4", "train.interior_points=8",
                         "train.shard_samples=2", "train.log_every=1", "control.width=5", "control.depth=2",
                         "control.quadrature_nodes=32", "oracle.intervals=11"}) {
    defaults.push_back("--set");
    defaults.push_back(kv);
  }
  args.insert(args.begin() + 1, defaults.begin(), defaults.end());
  args.push_back("--out");
  args.push_back(out.string());
  return args;
}

}  // namespace

TEST(Config, PresetsPopulateEveryKey) {
  for (auto b : {fields::Benchmark::poisson, fields::Benchmark::heat, fields::Benchmark::stokes}) {
    const auto keys = preset(b, "desk").values();
    for (const auto& name : preset_names()) {
      const auto c = preset(b, name);
      EXPECT_EQ(c.values().size(), keys.size());
      EXPECT_EQ(c.benchmark(), b);
      EXPECT_EQ(c.str("run.preset"), name);
    }
  }
  EXPECT_THROW(preset(fields::Benchmark::poisson, "huge"), ConfigError);
}

TEST(Config, IniRoundTripAndTypedAccess) {
  auto c = preset(fields::Benchmark::heat, "paper-table");
  EXPECT_EQ(c.count("train.interior_points"), 2000u);
  EXPECT_DOUBLE_EQ(c.num("data.length_scale"), 0.5);
  c.set("train.iterations", "1e4");
  EXPECT_EQ(c.count("train.iterations"), 10000u);
  const auto back = parse_ini(c.to_ini({"comment"}), "mem");
  EXPECT_EQ(back.values(), c.values());
  EXPECT_THROW(c.set("train.iterationz", "1"), ConfigError);
  c.set("train.lr", "fast");
  EXPECT_THROW(c.num("train.lr"), ConfigError);
  c.set("train.iterations", "2.5");
  EXPECT_THROW(c.count("train.iterations"), ConfigError);
  EXPECT_THROW(parse_ini("orphan = 1\n", "mem"), ConfigError);
  EXPECT_THROW(parse_ini("[a]\nno equals sign\n", "mem"), ConfigError);
}

TEST(Config, GitBlobHash) {
  // `git hash-object` of an empty file and of "hello\n".
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Cli, DeskPoissonDatasetShape) {
  const auto d = fresh_dir("dataset");
  const auto r = run({"make-dataset", "--benchmark", "poisson", "--preset", "desk", "--out", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto train = fields::read_dataset(d / "train.csv");
  EXPECT_EQ(train.samples(), 1000u);
  EXPECT_EQ(train.values.cols(), 100);
  EXPECT_TRUE(fs::exists(d / "make-dataset.manifest"));
  fs::remove_all(d);
}

// Each reference row must solve the problem for its own test sample.
TEST(Cli, PoissonTestReferenceRowsMatchSamples) {
  const auto d = fresh_dir("reference");
  ASSERT_EQ(run(tiny({"make-dataset", "-b", "poisson"}, d)).code, 0);
  const auto test = fields::read_dataset(d / "test.csv");
  std::ifstream in(d / "test_reference.csv");
  std::string line;
  std::getline(in, line);
  for (Eigen::Index s = 0; s < test.values.rows(); ++s) {
    ASSERT_TRUE(std::getline(in, line));
    std::vector<double> u(static_cast<std::size_t>(test.values.cols()));
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = test.values(s, static_cast<Eigen::Index>(i));
    const auto want = oracle::solve_poisson_fd(u, 1.0 / 11);
    std::istringstream cells(line);
    std::string cell;
    for (std::size_t i = 0; std::getline(cells, cell, ','); ++i) EXPECT_NEAR(std::stod(cell), want.at(i), 1e-12) << s;
  }
  fs::remove_all(d);
}

TEST(Cli, SameSeedGivesIdenticalFiles) {
  const auto a = fresh_dir("seed_a"), b = fresh_dir("seed_b"), c = fresh_dir("seed_c");
  ASSERT_EQ(run({"sample-grf", "-b", "heat", "--seed", "7", "--out", a.string()}).code, 0);
  ASSERT_EQ(run({"sample-grf", "-b", "heat", "--seed", "7", "--out", b.string()}).code, 0);
  ASSERT_EQ(run({"sample-grf", "-b", "heat", "--seed", "8", "--out", c.string()}).code, 0);
  EXPECT_EQ(slurp(a / "grf.csv"), slurp(b / "grf.csv"));
  EXPECT_NE(slurp(a / "grf.csv"), slurp(c / "grf.csv"));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto d = fresh_dir("cfg");
  const auto missing = run({"make-dataset", "--config", "/nonexistent/run.ini", "--out", d.string()});
  EXPECT_EQ(missing.code, exit_config);
  EXPECT_NE(missing.err.find("/nonexistent/run.ini"), std::string::npos);
  EXPECT_EQ(run({"make-dataset", "-b", "poisson", "--set", "train.nope=1", "--out", d.string()}).code, exit_config);
  EXPECT_EQ(run({"make-dataset", "-b", "poisson", "--preset", "huge", "--out", d.string()}).code, exit_config);
  EXPECT_EQ(run({"make-dataset", "--out", d.string()}).code, exit_config);
  EXPECT_EQ(run({"frobnicate"}).code, exit_config);
  EXPECT_EQ(run({"train-operator", "-b", "poisson", "--out", (d / "empty").string()}).code, exit_config);
  EXPECT_EQ(run({"make-dataset", "-b", "poisson", "--out", "/proc/pidon"}).code, exit_config);
  fs::remove_all(d);
}

TEST(Cli, ZeroIterationTrainingAndResume) {
  const auto d = fresh_dir("train0");
  ASSERT_EQ(run(tiny({"make-dataset", "-b", "poisson"}, d)).code, 0);
  auto r = run(tiny({"train-operator", "-b", "poisson", "--set", "train.iterations=0"}, d));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string first = slurp(d / "checkpoint.bin");

  // Same seed, same initialization.
  const auto d2 = fresh_dir("train0b");
  ASSERT_EQ(run(tiny({"make-dataset", "-b", "poisson"}, d2)).code, 0);
  ASSERT_EQ(run(tiny({"train-operator", "-b", "poisson", "--set", "train.iterations=0"}, d2)).code, 0);
  EXPECT_EQ(slurp(d2 / "checkpoint.bin"), first);

  // Train a few steps, then resume with no further iterations.
  ASSERT_EQ(run(tiny({"train-operator", "-b", "poisson", "--set", "train.iterations=3"}, d)).code, 0);
  const std::string trained = slurp(d / "checkpoint.bin");
  EXPECT_NE(trained, first);
  r = run(tiny({"train-operator", "-b", "poisson", "--resume", "--set", "train.iterations=3"}, d));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(d / "checkpoint.bin"), trained);
  fs::remove_all(d);
  fs::remove_all(d2);
}

TEST(Cli, LossCsvRowsFollowLoggingInterval) {
  const auto d = fresh_dir("logrows");
  ASSERT_EQ(run(tiny({"make-dataset", "-b", "poisson"}, d)).code, 0);
  ASSERT_EQ(run(tiny({"train-operator", "-b", "poisson", "--set", "train.iterations=10", "--set", "train.log_every=5"}, d)).code, 0);
  std::ifstream in(d / "loss.csv");
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2);
  fs::remove_all(d);
}

TEST(Cli, ResumeWithOtherArchitectureExitsFour) {
  const auto d = fresh_dir("arch");
  ASSERT_EQ(run(tiny({"make-dataset", "-b", "poisson"}, d)).code, 0);
  ASSERT_EQ(run(tiny({"train-operator", "-b", "poisson", "--set", "train.iterations=1"}, d)).code, 0);
  auto args = tiny({"train-operator", "-b", "poisson", "--resume"}, d);
  args.insert(args.end(), {"--set", "model.width=7"});
  EXPECT_EQ(run(args).code, exit_mismatch);
  args[0] = "optimize-control";
  args.erase(std::find(args.begin(), args.end(), "--resume"));
  EXPECT_EQ(run(args).code, exit_mismatch);
  // A GRF dataset is not a Stokes dataset.
  EXPECT_EQ(run(tiny({"train-operator", "-b", "stokes", "--set", "model.width=6"}, d)).code, exit_mismatch);
  fs::remove_all(d);
}

TEST(Cli, DivergenceExitsThreeAndKeepsArtifacts) {
  const auto d = fresh_dir("nan");
  ASSERT_EQ(run(tiny({"make-dataset", "-b", "poisson"}, d)).code, 0);
  const auto r = run(tiny({"train-operator", "-b", "poisson", "--set", "train.iterations=50", "--set", "train.lr=1e300"}, d));
  EXPECT_EQ(r.code, exit_numeric) << r.out << r.err;
  EXPECT_TRUE(fs::exists(d / "loss.csv"));
  fs::remove_all(d);
}

TEST(Cli, EvaluateIdenticalFilesGivesZero) {
  const auto d = fresh_dir("eval");
  fs::create_directories(d);
  std::ofstream(d / "a.csv") << "x,s\n0,1\n0.5,2\n1,3\n";
  std::ofstream(d / "b.csv") << "x,s\n0,1\n0.5,2\n1,4\n";
  auto r = run({"evaluate", "--pred", (d / "a.csv").string(), "--ref", (d / "a.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("relative_l2_s = 0\n"), std::string::npos) << r.out;
  r = run({"evaluate", "--pred", (d / "a.csv").string(), "--ref", (d / "b.csv").string()});
  EXPECT_NE(r.out.find("relative_l2_s = 0.2182"), std::string::npos) << r.out;  // 1 / sqrt(21)
  EXPECT_EQ(run({"evaluate", "--pred", (d / "a.csv").string()}).code, exit_config);
  fs::remove_all(d);
}

TEST(Cli, PoissonOracleOnUnitSource) {
  const auto d = fresh_dir("oracle");
  fs::create_directories(d);
  const int n = 41;
  {
    std::ofstream f(d / "u.csv");
    f << "x,u\n";
    for (int i = 0; i < n; ++i) f << static_cast<double>(i) / (n - 1) << ",1\n";
  }
  const auto r = run({"oracle", "-b", "poisson", "--input", (d / "u.csv").string(), "--out", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(d / "oracle.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,s");
  const double h = 1.0 / (n - 1);
  int rows = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const double x = std::stod(line.substr(0, comma)), s = std::stod(line.substr(comma + 1));
    EXPECT_LT(std::abs(s - x * (1 - x) / 2), h * h);
    ++rows;
  }
  EXPECT_EQ(rows, n);
  EXPECT_EQ(run({"oracle", "-b", "stokes", "--input", (d / "u.csv").string(), "--out", d.string()}).code, exit_config);
  fs::remove_all(d);
}

TEST(Cli, ZeroIterationControlIsInitialization) {
  const auto d = fresh_dir("ctrl0");
  ASSERT_EQ(run(tiny({"make-dataset", "-b", "poisson"}, d)).code, 0);
  ASSERT_EQ(run(tiny({"train-operator", "-b", "poisson", "--set", "train.iterations=2"}, d)).code, 0);
  const std::string surrogate = slurp(d / "checkpoint.bin");
  ASSERT_EQ(run(tiny({"optimize-control", "-b", "poisson", "--set", "control.iterations=0"}, d)).code, 0);
  const std::string c0 = slurp(d / "control.csv");
  ASSERT_EQ(run(tiny({"optimize-control", "-b", "poisson", "--set", "control.iterations=5"}, d)).code, 0);
  EXPECT_NE(slurp(d / "control.csv"), c0);
  EXPECT_EQ(slurp(d / "checkpoint.bin"), surrogate);
  ASSERT_EQ(run(tiny({"optimize-control", "-b", "poisson", "--set", "control.iterations=0"}, d)).code, 0);
  EXPECT_EQ(slurp(d / "control.csv"), c0);
  fs::remove_all(d);
}

TEST(Cli, ManifestRerunIsBitIdentical) {
  const auto d = fresh_dir("manifest"), e = fresh_dir("manifest_rerun");
  ASSERT_EQ(run(tiny({"make-dataset", "-b", "poisson", "--seed", "3"}, d)).code, 0);
  ASSERT_EQ(run(tiny({"train-operator", "-b", "poisson", "--set", "train.iterations=4"}, d)).code, 0);
  ASSERT_EQ(run({"make-dataset", "--config", (d / "make-dataset.manifest").string(), "--out", e.string()}).code, 0);
  const auto r = run({"train-operator", "--config", (d / "train-operator.manifest").string(), "--out", e.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"train.csv", "test.csv", "test_reference.csv", "checkpoint.bin", "loss.csv"}) {
    EXPECT_EQ(slurp(d / f), slurp(e / f)) << f;
  }
  // Same resolved config, same content hashes.
  EXPECT_EQ(slurp(d / "train-operator.manifest"), slurp(e / "train-operator.manifest"));
  fs::remove_all(d);
  fs::remove_all(e);
}

}  // namespace pidon::cli
