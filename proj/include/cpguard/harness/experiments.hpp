#pragma once

// Multi-trial drivers: aggregate statistics, the threshold sweep, the
// PASAC-vs-ROBOSAC sampler comparison and verification-count scaling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cpguard/harness/trial.hpp"

namespace cpguard::harness {

struct MetricStats {
  double mean{0.0};
  double stddev{0.0};
  double min{0.0};
  double max{0.0};

  friend bool operator==(const MetricStats&, const MetricStats&) = default;
};

// Sample standard deviation (0 for a single value). The mean is clamped
// into [min, max] so rounding never breaks min <= mean <= max.
inline MetricStats summarize(std::span<const double> values) {
  if (values.empty()) throw Error("cannot summarize an empty sample");
  MetricStats s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  s.mean = std::clamp(std::accumulate(values.begin(), values.end(), 0.0) / n, s.min, s.max);
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

struct AggregateStats {
  std::size_t n_trials{0};
  MetricStats miou_upper;
  MetricStats miou_all_clean;
  MetricStats miou_lower;
  MetricStats miou_no_defense;
  MetricStats miou_defended;
  MetricStats detection_precision;
  MetricStats detection_recall;
  MetricStats verification_count;

  friend bool operator==(const AggregateStats&, const AggregateStats&) = default;
};

// Named view over the aggregated metrics, in report order.
inline std::vector<std::pair<std::string, const MetricStats*>> named_metrics(const AggregateStats& a) {
  return {{"miou_upper", &a.miou_upper},
          {"miou_all_clean", &a.miou_all_clean},
          {"miou_lower", &a.miou_lower},
          {"miou_no_defense", &a.miou_no_defense},
          {"miou_defended", &a.miou_defended},
          {"detection_precision", &a.detection_precision},
          {"detection_recall", &a.detection_recall},
          {"verification_count", &a.verification_count}};
}

inline AggregateStats aggregate(std::span<const TrialResult> trials) {
  if (trials.empty()) throw Error("no trials to aggregate");
  auto column = [&](auto field) {
    std::vector<double> v;
    v.reserve(trials.size());
    for (const auto& t : trials) v.push_back(field(t));
    return summarize(v);
  };
  AggregateStats a;
  a.n_trials = trials.size();
  a.miou_upper = column([](const TrialResult& t) { return t.miou_upper; });
  a.miou_all_clean = column([](const TrialResult& t) { return t.miou_all_clean; });
  a.miou_lower = column([](const TrialResult& t) { return t.miou_lower; });
  a.miou_no_defense = column([](const TrialResult& t) { return t.miou_no_defense; });
  a.miou_defended = column([](const TrialResult& t) { return t.miou_defended; });
  a.detection_precision = column([](const TrialResult& t) { return t.detection_precision; });
  a.detection_recall = column([](const TrialResult& t) { return t.detection_recall; });
  a.verification_count =
      column([](const TrialResult& t) { return static_cast<double>(t.outcome.verification_count); });
  return a;
}

// Trial i runs with trial_seed = base_seed + i. `configure` may adjust each
// trial's config (after the seed is set). Results are stored by index, so
// the output does not depend on the worker count.
template <typename Configure>
std::vector<TrialResult> run_trials(const ScenarioConfig& tmpl, std::size_t n_trials, std::uint64_t base_seed,
                                    unsigned workers, Configure configure) {
  if (n_trials < 1) throw Error("n_trials must be at least 1");
  validate(tmpl);
  std::vector<TrialResult> results(n_trials);
  auto run_one = [&](std::size_t i) {
    ScenarioConfig cfg = tmpl;
    cfg.trial_seed = base_seed + i;
    configure(cfg, i);
    results[i] = run_trial(cfg);
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_trials)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n_trials; ++i) run_one(i);
    return results;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n_trials; i += workers) run_one(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

inline std::vector<TrialResult> run_trials(const ScenarioConfig& tmpl, std::size_t n_trials, std::uint64_t base_seed,
                                           unsigned workers = 1) {
  return run_trials(tmpl, n_trials, base_seed, workers, [](ScenarioConfig&, std::size_t) {});
}

inline AggregateStats run_experiment(const ScenarioConfig& tmpl, std::size_t n_trials, std::uint64_t base_seed,
                                     unsigned workers = 1) {
  const auto results = run_trials(tmpl, n_trials, base_seed, workers);
  return aggregate(results);
}

struct ThresholdRow {
  double epsilon{0.0};
  AggregateStats stats;
};

inline std::vector<ThresholdRow> sweep_threshold(const ScenarioConfig& tmpl, std::span<const double> epsilons,
                                                 std::size_t n_trials, std::uint64_t base_seed,
                                                 unsigned workers = 1) {
  if (epsilons.empty()) throw Error("epsilon list must not be empty");
  std::vector<ThresholdRow> rows;
  for (double eps : epsilons) {
    ScenarioConfig cfg = tmpl;
    cfg.epsilon = eps;
    rows.push_back({eps, run_experiment(cfg, n_trials, base_seed, workers)});
  }
  return rows;
}

// Uniformly random attacker set of size `count` among collaborators 1..n.
inline std::vector<std::uint32_t> random_attackers(std::size_t n, std::size_t count, std::uint64_t seed) {
  if (count > n) throw Error("more attackers than collaborators");
  std::vector<std::uint32_t> ids(n);
  std::iota(ids.begin(), ids.end(), 1u);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) std::swap(ids[i], ids[uniform_between(rng, i, n - 1)]);
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

enum class SamplerVerifier { PIPELINE, ORACLE };

struct CountStats {
  double min{0.0};
  double max{0.0};
  double avg{0.0};
};

inline CountStats count_stats(std::span<const double> counts) {
  const auto s = summarize(counts);
  return {s.min, s.max, s.mean};
}

struct SamplerRow {
  double attack_ratio{0.0};
  DefenseKind method{DefenseKind::PASAC};
  CountStats count;
  double miou_defended_mean{0.0};
};

namespace detail {

// Runs `method` over N collaborators with a separable oracle in place of
// the perception pipeline. Feature maps are placeholders.
inline DetectionOutcome oracle_detection(DefenseKind method, std::size_t n, std::span<const std::uint32_t> malicious,
                                         const ScenarioConfig& cfg, std::uint64_t seed) {
  static const FeatureMap placeholder = FeatureMap::zeros(GridDims{1, 1, 2});
  std::vector<AgentFeature> group;
  group.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) group.push_back({AgentId{static_cast<std::uint32_t>(i)}, std::cref(placeholder)});
  std::set<AgentId> bad;
  for (auto id : malicious) bad.insert(AgentId{id});
  SeparableOracle oracle(bad, cfg.epsilon);
  switch (method) {
    case DefenseKind::PASAC: return pasac(oracle, group, cfg.n_upper.value_or(n));
    case DefenseKind::ONE_BY_ONE: return one_by_one(oracle, group);
    case DefenseKind::ROBOSAC: return robosac(oracle, group, cfg.attack_ratio, cfg.robosac_max_attempts, seed);
    case DefenseKind::NONE: break;
  }
  throw Error("oracle detection needs a search strategy");
}

}  // namespace detail

// For each ratio, PASAC and ROBOSAC see identical trials: the same seeds
// and the same randomly placed attackers; ROBOSAC is given the true ratio
// as its prior.
inline std::vector<SamplerRow> compare_samplers(const ScenarioConfig& tmpl, std::span<const double> ratios,
                                                std::size_t n_trials, std::uint64_t base_seed,
                                                SamplerVerifier verifier = SamplerVerifier::PIPELINE,
                                                unsigned workers = 1) {
  if (n_trials < 1) throw Error("n_trials must be at least 1");
  std::vector<SamplerRow> rows;
  for (double ratio : ratios) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw Error("attack ratios must be in [0, 1)");
    const std::size_t n = tmpl.n_collaborators;
    const std::size_t m = attacker_count_for_ratio(ratio, n);
    for (DefenseKind method : {DefenseKind::ROBOSAC, DefenseKind::PASAC}) {
      ScenarioConfig cfg = tmpl;
      cfg.attack_ratio = ratio;
      cfg.defense = method;
      cfg.attacker_ids.reset();
      auto placement = [&](ScenarioConfig& c, std::size_t) {
        c.attacker_ids = random_attackers(n, m, derive_seed(c.trial_seed, seeds::kAttackStream));
      };
      std::vector<double> counts(n_trials);
      SamplerRow row{ratio, method, {}, 0.0};
      if (verifier == SamplerVerifier::PIPELINE) {
        const auto results = run_trials(cfg, n_trials, base_seed, workers, placement);
        double miou_sum = 0.0;
        for (std::size_t i = 0; i < n_trials; ++i) {
          counts[i] = static_cast<double>(results[i].outcome.verification_count);
          miou_sum += results[i].miou_defended;
        }
        row.miou_defended_mean = miou_sum / static_cast<double>(n_trials);
      } else {
        for (std::size_t i = 0; i < n_trials; ++i) {
          ScenarioConfig c = cfg;
          c.trial_seed = base_seed + i;
          placement(c, i);
          counts[i] = static_cast<double>(
              detail::oracle_detection(method, n, *c.attacker_ids, c, derive_seed(c.trial_seed, seeds::kDefenseStream))
                  .verification_count);
        }
      }
      row.count = count_stats(counts);
      rows.push_back(row);
    }
  }
  return rows;
}

struct ScalingRow {
  std::size_t n_benign{0};
  std::size_t n_malicious{0};
  CountStats count;
};

// PASAC verification counts under a separable oracle with n_benign + m
// collaborators, malicious ones placed uniformly at random.
inline std::vector<ScalingRow> count_scaling(std::span<const std::size_t> benign_counts,
                                             std::span<const std::size_t> malicious_counts, std::size_t n_trials,
                                             std::uint64_t base_seed) {
  if (n_trials < 1) throw Error("n_trials must be at least 1");
  std::vector<ScalingRow> rows;
  ScenarioConfig cfg;
  for (std::size_t m : malicious_counts) {
    for (std::size_t nb : benign_counts) {
      const std::size_t n = nb + m;
      if (n == 0) throw Error("count scaling needs at least one collaborator");
      std::vector<double> counts(n_trials);
      for (std::size_t i = 0; i < n_trials; ++i) {
        const std::uint64_t seed = derive_seed(base_seed + i, n * 1000 + m);
        const auto malicious = random_attackers(n, m, seed);
        counts[i] = static_cast<double>(
            detail::oracle_detection(DefenseKind::PASAC, n, malicious, cfg, seed).verification_count);
      }
      rows.push_back({nb, m, count_stats(counts)});
    }
  }
  return rows;
}

}  // namespace cpguard::harness
