// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "cpguard/cpguard.hpp"
#include "oracles.hpp"

#ifndef CPGUARD_CLI
#error "CPGUARD_CLI must name the cpguard executable"
#endif

using namespace cpguard;
using namespace cpguard::harness;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass;
  std::string detail;
};

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

const FeatureMap& placeholder() {
  static const FeatureMap f = FeatureMap::zeros(GridDims{1, 1, 2});
  return f;
}

std::vector<AgentFeature> agents(std::size_t n) {
  std::vector<AgentFeature> v;
  for (std::size_t i = 1; i <= n; ++i) v.push_back({AgentId{static_cast<std::uint32_t>(i)}, std::cref(placeholder())});
  return v;
}

Verdict pasac_exactness() {
  const auto t0 = Clock::now();
  std::size_t patterns = 0, wrong = 0;
  for (std::size_t n = 1; n <= 8; ++n) {
    const auto group = agents(n);
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      std::set<AgentId> bad, good;
      for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1u ? bad : good).insert(AgentId{static_cast<std::uint32_t>(i + 1)});
      SeparableOracle oracle(bad);
      const auto out = pasac(oracle, group, n);
      ++patterns;
      wrong += !(out.benign == good && out.excluded == bad);
    }
  }
  const double t = seconds_since(t0);
  return {wrong == 0 && t < 5.0, fmt("%zu patterns, %zu wrong, %.3f s (limit 5 s)", patterns, wrong, t)};
}

Verdict hand_traced_counts() {
  SeparableOracle one({AgentId{3}});
  const auto a = pasac(one, agents(4), 4);
  SeparableOracle none({});
  const auto b = pasac(none, agents(8), 8);
  const bool ok = a.verification_count == 4 && a.excluded == std::set<AgentId>{AgentId{3}} && a.benign.size() == 3 &&
                  b.verification_count == 2 && b.benign.size() == 8;
  return {ok, fmt("N=4/one malicious count %zu (want 4), N=8/none count %zu (want 2)", a.verification_count,
                  b.verification_count)};
}

std::vector<double> random_soft(std::size_t cells, std::size_t classes, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.7, 1.0);
  std::vector<double> v(cells * classes);
  for (std::size_t c = 0; c < cells; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) s += (v[c * classes + j] = g(rng) + 1e-12);
    for (std::size_t j = 0; j < classes; ++j) v[c * classes + j] /= s;
  }
  return v;
}

Verdict ccloss_anchors() {
  const GridDims d{2, 2, 2};
  const auto one_hot_a = one_hot(LabelMap(d, {0, 1, 1, 0}));
  const double same = ccloss(one_hot_a, one_hot_a);
  const double disjoint = ccloss(one_hot(LabelMap::filled(d, 0)), one_hot(LabelMap::filled(d, 1)));
  const ProbMap uniform(d, std::vector<double>(8, 0.5));
  const auto yf = one_hot(LabelMap(d, {0, 0, 0, 1}));
  const double worked = ccloss(uniform, yf);
  const double rederived =
      oracle::ccloss(std::vector<double>(8, 0.5), std::vector<double>(yf.values().begin(), yf.values().end()), 4, 2);

  std::mt19937_64 rng(2024);
  double worst_asym = 0.0, lo = 1.0, hi = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t w = 1 + rng() % 5, h = 1 + rng() % 5, c = 2 + rng() % 6;
    const ProbMap p(GridDims{w, h, c}, random_soft(w * h, c, rng));
    const ProbMap q(GridDims{w, h, c}, random_soft(w * h, c, rng));
    const double pq = ccloss(p, q), qp = ccloss(q, p);
    worst_asym = std::max(worst_asym, std::abs(pq - qp));
    lo = std::min(lo, pq);
    hi = std::max(hi, pq);
  }
  const bool ok = std::abs(same - 0.5) <= 1e-12 && std::abs(disjoint) <= 1e-12 && std::abs(worked - 0.2167) <= 5e-4 &&
                  std::abs(worked - rederived) <= 1e-12 && worst_asym <= 1e-12 && lo >= 0.0 && hi <= 0.5;
  return {ok, fmt("identical %.15f, disjoint %.3g, worked %.6f (re-derived %.6f), max asymmetry %.2g, range [%.4f, %.4f]",
                  same, disjoint, worked, rederived, worst_asym, lo, hi)};
}

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 3.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = 1e-5;
  double worst = 0.0;
  int instances = 0;
  for (std::size_t classes : {3u, 7u}) {
    const GridDims d{8, 8, classes};
    for (int t = 0; t < 20; ++t) {
      std::vector<oracle::Agent> raw(3);
      std::vector<FeatureMap> maps;
      for (auto& a : raw) {
        a.logits.resize(d.entries());
        a.conf.resize(d.cells());
        for (auto& v : a.logits) v = g(rng);
        for (auto& c : a.conf) c = u(rng) < 0.25 ? 0.0 : u(rng);
        maps.emplace_back(d, a.logits, a.conf);
      }
      std::vector<int> truth(d.cells());
      std::vector<LabelMap::Label> labels(d.cells());
      for (std::size_t i = 0; i < d.cells(); ++i) labels[i] = static_cast<LabelMap::Label>(truth[i] = static_cast<int>(rng() % classes));
      const std::vector<FeatureMap> others{maps[1], maps[2]};
      const std::size_t target = static_cast<std::size_t>(t % 2);
      const auto grad = seg_loss_grad(maps[0], others, target, LabelMap(d, labels));

      double err = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < d.entries(); ++i) {
        auto& x = raw[target + 1].logits[i];
        const double x0 = x;
        x = x0 + h;
        const double up = oracle::fused_loss(raw, truth, classes);
        x = x0 - h;
        const double down = oracle::fused_loss(raw, truth, classes);
        x = x0;
        const double fd = (up - down) / (2.0 * h);
        err = std::max(err, std::abs(grad.values[i] - fd));
        scale = std::max(scale, std::abs(fd));
      }
      worst = std::max(worst, err / scale);
      ++instances;
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-5 && t < 10.0,
          fmt("%d instances (8x8, C in {3,7}), max relative error %.3g (limit 1e-5), %.2f s (limit 10 s)", instances,
              worst, t)};
}

constexpr std::uint64_t kSeedBase = 1000;
constexpr std::size_t kTrials = 100;

ScenarioConfig standard_scenario() {
  ScenarioConfig c;
  c.n_collaborators = 5;
  c.attacker_ids = std::vector<std::uint32_t>{1};
  c.attack.kind = AttackKind::PGD;
  return c;
}

Verdict attack_efficacy() {
  auto c = standard_scenario();
  c.defense = DefenseKind::NONE;
  const auto a = run_experiment(c, kTrials, kSeedBase);
  const double gap = a.miou_lower.mean - a.miou_no_defense.mean;
  return {gap >= 0.05, fmt("mean no-defense %.4f, lower bound %.4f, upper bound %.4f: lower - no-defense = %.4f (need >= 0.05)",
                           a.miou_no_defense.mean, a.miou_lower.mean, a.miou_upper.mean, gap)};
}

Verdict defense_efficacy() {
  auto c = standard_scenario();
  c.defense = DefenseKind::PASAC;
  c.epsilon = kStandardEpsilon;
  const auto a = run_experiment(c, kTrials, kSeedBase);
  const double gap = std::abs(a.miou_upper.mean - a.miou_defended.mean);
  const bool ok = gap <= 0.02 && a.detection_precision.mean >= 0.95 && a.detection_recall.mean >= 0.95;
  return {ok, fmt("eps %.3f: defended %.4f vs upper %.4f (|diff| %.4f, limit 0.02), precision %.3f, recall %.3f (need >= 0.95)",
                  c.epsilon, a.miou_defended.mean, a.miou_upper.mean, gap, a.detection_precision.mean,
                  a.detection_recall.mean)};
}

Verdict threshold_shape() {
  auto c = standard_scenario();
  const std::vector<double> eps{0.02, 0.05, 0.08, 0.1, 0.12, 0.135, 0.15, 0.2, 0.3};
  const auto rows = sweep_threshold(c, eps, kTrials, kSeedBase);
  std::size_t best = 0;
  std::string curve;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].stats.miou_defended.mean > rows[best].stats.miou_defended.mean) best = i;
    curve += fmt("%s%.3f:%.4f", i ? " " : "", rows[i].epsilon, rows[i].stats.miou_defended.mean);
  }
  const double peak = rows[best].stats.miou_defended.mean;
  const bool ok = best > 0 && best + 1 < rows.size() && rows.front().stats.miou_defended.mean < peak &&
                  rows.back().stats.miou_defended.mean < peak;
  return {ok, fmt("max at eps %.3f; ", rows[best].epsilon) + curve};
}

Verdict sampler_trend() {
  auto c = standard_scenario();
  c.attacker_ids.reset();
  const std::vector<double> ratios{0.2, 0.4, 0.6, 0.8};
  const auto rows = compare_samplers(c, ratios, kTrials, kSeedBase, SamplerVerifier::PIPELINE);
  double pasac_max = 0.0, pasac_max_sum = 0.0, robosac_max_sum = 0.0, avg02 = 0.0, avg06 = 0.0;
  std::string table;
  for (const auto& r : rows) {
    table += fmt(" %s@%.1f[%g,%g,%.2f]", std::string(to_string(r.method)).c_str(), r.attack_ratio, r.count.min,
                 r.count.max, r.count.avg);
    if (r.method == DefenseKind::PASAC) {
      pasac_max = std::max(pasac_max, r.count.max);
      pasac_max_sum += r.count.max;
      if (r.attack_ratio == 0.2) avg02 = r.count.avg;
      if (r.attack_ratio == 0.6) avg06 = r.count.avg;
    } else {
      robosac_max_sum += r.count.max;
    }
  }
  const double n = static_cast<double>(ratios.size());
  const bool a = pasac_max <= 8.0, b = avg02 < avg06, cc = pasac_max_sum / n < robosac_max_sum / n;
  return {a && b && cc,
          fmt("(a) PASAC max %g <= 8: %s; (b) avg 0.2 %.2f < avg 0.6 %.2f: %s; (c) mean max PASAC %.2f < ROBOSAC %.2f: %s;",
              pasac_max, a ? "yes" : "no", avg02, avg06, b ? "yes" : "no", pasac_max_sum / n, robosac_max_sum / n,
              cc ? "yes" : "no") +
              table};
}

Verdict count_shape() {
  const auto t0 = Clock::now();
  const std::vector<std::size_t> benign{20, 50, 100};
  const std::vector<std::size_t> malicious{1, 5, 10};
  const auto rows = count_scaling(benign, malicious, kTrials, kSeedBase);
  bool below = true, sublinear = true;
  std::string detail;
  for (std::size_t mi = 0; mi < malicious.size(); ++mi) {
    std::vector<double> avg;
    for (const auto& r : rows) {
      if (r.n_malicious == malicious[mi]) avg.push_back(r.count.avg);
    }
    below = below && avg.back() < 100.0;
    for (std::size_t i = 1; i < avg.size(); ++i) {
      const double prev = avg[i - 1] / static_cast<double>(benign[i - 1]);
      const double cur = avg[i] / static_cast<double>(benign[i]);
      sublinear = sublinear && avg[i] > avg[i - 1] && cur < prev;
    }
    detail += fmt(" m=%zu:[%.2f,%.2f,%.2f]", malicious[mi], avg[0], avg[1], avg[2]);
  }
  const double t = seconds_since(t0);
  return {below && sublinear && t < 60.0,
          fmt("avg at N=100 below 100: %s; avg/N decreasing over N in {20,50,100}: %s; %.2f s (limit 60 s);",
              below ? "yes" : "no", sublinear ? "yes" : "no", t) +
              detail};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict cli_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("cpguard_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::vector<std::string> commands{
      "run --seed 3",
      "run --seed 3 --format csv",
      "experiment --trials 10 --seed 4",
      "experiment --trials 10 --seed 4 --format csv --workers 2",
      "sweep-threshold --trials 5 --seed 5 --epsilons 0.05,0.135,0.2",
      "compare-samplers --trials 100 --seed 7 --format csv",
      "compare-samplers --trials 50 --seed 7 --verifier oracle",
      "count-scaling --trials 20 --seed 8 --format csv",
      "selftest",
  };
  std::size_t identical = 0;
  std::string failed;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::string outs[2];
    bool ran = true;
    for (int k = 0; k < 2; ++k) {
      const fs::path out = dir / ("out_" + std::to_string(i) + "_" + std::to_string(k));
      const std::string cmd = std::string(CPGUARD_CLI) + " " + commands[i] + " --out " + out.string() + " 2>/dev/null";
      ran = ran && std::system(cmd.c_str()) == 0;
      outs[k] = slurp(out);
    }
    if (ran && !outs[0].empty() && outs[0] == outs[1]) {
      ++identical;
    } else {
      failed += " [" + commands[i] + "]";
    }
  }
  fs::remove_all(dir);
  return {identical == commands.size(),
          fmt("%zu/%zu subcommand invocations byte-identical across two runs", identical, commands.size()) + failed};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"PASAC exactness", pasac_exactness},
      {"hand-traced counts", hand_traced_counts},
      {"CCLoss anchors", ccloss_anchors},
      {"gradient correctness", gradient_correctness},
      {"attack efficacy", attack_efficacy},
      {"defense efficacy", defense_efficacy},
      {"threshold ablation shape", threshold_shape},
      {"sampler comparison trend", sampler_trend},
      {"verification count shape", count_shape},
      {"CLI determinism", cli_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v{false, ""};
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s criterion %zu (%s): %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures ? 1 : 0;
}
