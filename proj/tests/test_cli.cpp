#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#ifndef CPGUARD_CLI
#error "CPGUARD_CLI must name the cpguard executable"
#endif

namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("cpguard_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run cli(const std::string& args) {
  const auto out = scratch() / "stdout.txt";
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = std::string(CPGUARD_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

}  // namespace

TEST(Cli, SelftestPasses) {
  const auto r = cli("selftest");
  EXPECT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("selftest ok"), std::string::npos);
}

TEST(Cli, MissingConfigNamesPath) {
  const auto r = cli("run --config missing.file");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("missing.file"), std::string::npos);
}

TEST(Cli, UnknownFlagPrintsUsage) {
  const auto r = cli("run --bogus");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(cli("").status, 1);
  EXPECT_EQ(cli("frobnicate").status, 1);
  EXPECT_EQ(cli("run --format xml").status, 1);
}

TEST(Cli, InvalidConfigValue) {
  const auto cfg = scratch() / "bad.cfg";
  std::ofstream(cfg) << "epsilon = 0.7\n";
  const auto r = cli("run --config " + cfg.string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("epsilon"), std::string::npos);
  std::ofstream(cfg) << "unknown_key = 1\n";
  EXPECT_EQ(cli("run --config " + cfg.string()).status, 1);
}

TEST(Cli, RunHonoursConfigAndSeed) {
  const auto cfg = scratch() / "small.cfg";
  std::ofstream(cfg) << "width = 24\nheight = 24\nn_blobs = 20\nn_collaborators = 3\n";
  const auto r = cli("run --config " + cfg.string() + " --seed 5");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_EQ(doc["config"]["width"], "24");
  EXPECT_EQ(doc["config"]["trial_seed"], "5");
  EXPECT_EQ(doc["config"]["n_collaborators"], "3");
}

TEST(Cli, OutFileMatchesStdout) {
  const auto file = scratch() / "exp.csv";
  const auto a = cli("experiment --trials 3 --seed 2 --format csv --out " + file.string());
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_TRUE(a.out.empty());
  const auto b = cli("experiment --trials 3 --seed 2 --format csv");
  EXPECT_EQ(slurp(file), b.out);
  EXPECT_NE(b.out.find("metric,mean,stddev,min,max"), std::string::npos);
  EXPECT_EQ(cli("experiment --trials 1 --out /nonexistent/dir/x.csv").status, 1);
}

TEST(Cli, CompareSamplersByteIdentical) {
  const auto f1 = scratch() / "s1.csv";
  const auto f2 = scratch() / "s2.csv";
  ASSERT_EQ(cli("compare-samplers --trials 100 --seed 7 --format csv --out " + f1.string()).status, 0);
  ASSERT_EQ(cli("compare-samplers --trials 100 --seed 7 --format csv --out " + f2.string()).status, 0);
  const auto a = slurp(f1);
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(f2));
  EXPECT_NE(a.find("attack_ratio,method,count_min,count_max,count_avg"), std::string::npos);
}

TEST(Cli, WorkerCountDoesNotChangeOutput) {
  const auto a = cli("sweep-threshold --trials 4 --epsilons 0.05,0.135 --workers 1");
  const auto b = cli("sweep-threshold --trials 4 --epsilons 0.05,0.135 --workers 3");
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto doc = nlohmann::json::parse(a.out);
  EXPECT_EQ(doc["rows"].size(), 2u);
}

TEST(Cli, CountScalingCsv) {
  const auto r = cli("count-scaling --trials 5 --benign 10,20 --malicious 1 --format csv");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("n_benign,n_malicious,count_min,count_max,count_avg\r\n10,1,"), std::string::npos);
}
