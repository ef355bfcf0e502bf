// cpguard: run seeded trials and experiments of the consensus defense.
//
// Exit status: 0 success, 1 usage or config error, 2 internal failure.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpguard/cpguard.hpp"

namespace {

using namespace cpguard;
using namespace cpguard::harness;

struct InternalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::string out_path;
  std::string format{"json"};
  unsigned workers{1};
  std::vector<double> epsilons{0.02, 0.05, 0.08, 0.1, 0.12, 0.135, 0.15, 0.2, 0.3};
  std::vector<double> ratios{0.2, 0.4, 0.6, 0.8};
  std::string verifier{"pipeline"};
  std::vector<std::size_t> benign{20, 50, 100};
  std::vector<std::size_t> malicious{1, 5, 10};
  std::size_t selftest_max_n{8};
};

ScenarioConfig load(const Options& o) {
  ScenarioConfig cfg = o.config_path.empty() ? ScenarioConfig{} : load_config(o.config_path);
  validate(cfg);
  return cfg;
}

OutputFormat format_of(const Options& o) { return o.format == "csv" ? OutputFormat::CSV : OutputFormat::JSON; }

void emit(const Options& o, const std::string& text) {
  if (o.out_path.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(o.out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open output file '" + o.out_path + "'");
  out << text;
  if (!out) throw ConfigError("failed writing output file '" + o.out_path + "'");
}

std::string cmd_run(const Options& o) {
  ScenarioConfig cfg = load(o);
  if (o.seed) cfg.trial_seed = *o.seed;
  return render_trial(cfg, run_trial(cfg), format_of(o));
}

std::string cmd_experiment(const Options& o) {
  const ScenarioConfig cfg = load(o);
  const std::size_t n = o.trials.value_or(20);
  const std::uint64_t seed = o.seed.value_or(0);
  return render_experiment(cfg, n, seed, run_experiment(cfg, n, seed, o.workers), format_of(o));
}

std::string cmd_sweep(const Options& o) {
  const ScenarioConfig cfg = load(o);
  const std::size_t n = o.trials.value_or(20);
  const std::uint64_t seed = o.seed.value_or(0);
  const auto rows = sweep_threshold(cfg, o.epsilons, n, seed, o.workers);
  return render_sweep(cfg, n, seed, rows, format_of(o));
}

std::string cmd_samplers(const Options& o) {
  const ScenarioConfig cfg = load(o);
  const std::size_t n = o.trials.value_or(100);
  const std::uint64_t seed = o.seed.value_or(0);
  const auto verifier = o.verifier == "oracle" ? SamplerVerifier::ORACLE : SamplerVerifier::PIPELINE;
  const auto rows = compare_samplers(cfg, o.ratios, n, seed, verifier, o.workers);
  return render_samplers(cfg, n, seed, o.verifier, rows, format_of(o));
}

std::string cmd_scaling(const Options& o) {
  const std::size_t n = o.trials.value_or(100);
  const std::uint64_t seed = o.seed.value_or(0);
  const auto rows = count_scaling(o.benign, o.malicious, n, seed);
  return render_scaling(n, seed, rows, format_of(o));
}

std::string cmd_selftest(const Options& o) {
  const auto report = pasac_selftest(o.selftest_max_n);
  std::string text;
  for (const auto& f : report.failures) text += "FAIL " + f + "\n";
  text += (report.ok() ? "selftest ok: " : "selftest failed: ") + std::to_string(report.patterns) + " patterns, " +
          std::to_string(report.failures.size()) + " failures\n";
  if (!report.ok()) {
    std::cerr << text;
    throw InternalFailure("selftest failed");
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seeded collaborative-perception attack and defense experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--config", o.config_path, "Scenario file (key = value lines)");
  app.add_option("--seed", o.seed, "Trial seed for run, base seed otherwise");
  app.add_option("--trials", o.trials, "Number of trials")->check(CLI::PositiveNumber);
  app.add_option("--out", o.out_path, "Output file (default: standard output)");
  app.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--workers", o.workers, "Worker threads for independent trials")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "Run a single trial");
  auto* experiment = app.add_subcommand("experiment", "Aggregate metrics over seeded trials");
  auto* sweep = app.add_subcommand("sweep-threshold", "Sweep the consensus threshold");
  sweep->add_option("--epsilons", o.epsilons, "Thresholds to sweep")->delimiter(',');
  auto* samplers = app.add_subcommand("compare-samplers", "Verification counts of PASAC and ROBOSAC");
  samplers->add_option("--ratios", o.ratios, "Attack ratios")->delimiter(',');
  samplers->add_option("--verifier", o.verifier, "Group verifier")->check(CLI::IsMember({"pipeline", "oracle"}));
  auto* scaling = app.add_subcommand("count-scaling", "PASAC verification count against collaborator count");
  scaling->add_option("--benign", o.benign, "Benign collaborator counts")->delimiter(',');
  scaling->add_option("--malicious", o.malicious, "Malicious collaborator counts")->delimiter(',');
  auto* selftest = app.add_subcommand("selftest", "Exhaustive check of the group search");
  selftest->add_option("--max-n", o.selftest_max_n, "Largest collaborator count")->check(CLI::Range(1, 16));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    std::string text;
    if (run->parsed()) text = cmd_run(o);
    else if (experiment->parsed()) text = cmd_experiment(o);
    else if (sweep->parsed()) text = cmd_sweep(o);
    else if (samplers->parsed()) text = cmd_samplers(o);
    else if (scaling->parsed()) text = cmd_scaling(o);
    else if (selftest->parsed()) text = cmd_selftest(o);
    emit(o, text);
    return 0;
  } catch (const InternalFailure& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
