#pragma once

// Consensus defense: the collaborative consistency loss between the ego's
// solo prediction and a fused prediction, the suspicion rule, and three
// ways of searching the collaborator set for malicious agents (recursive
// binary splitting, one-by-one checks, and random-subset sampling).
//
// Every strategy is generic over the verifier so that the search logic can
// be tested exhaustively against a separable oracle.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "cpguard/bev_core.hpp"
#include "cpguard/perception.hpp"
#include "cpguard/random.hpp"

namespace cpguard {

inline constexpr double kDefaultEpsilon = 0.08;
inline constexpr double kZeroMassGuard = 1e-12;

// w_j = 1 / (sum over cells of p0 + pfuse)^2; classes with no mass get 0.
inline std::vector<double> class_weights(const ProbMap& y0, const ProbMap& yfuse) {
  require_same_dims(y0.dims(), yfuse.dims());
  const auto& d = y0.dims();
  std::vector<double> mass(d.classes, 0.0);
  for (std::size_t cell = 0; cell < d.cells(); ++cell) {
    for (std::size_t j = 0; j < d.classes; ++j) mass[j] += y0.at(cell, j) + yfuse.at(cell, j);
  }
  std::vector<double> w(d.classes, 0.0);
  for (std::size_t j = 0; j < d.classes; ++j) {
    if (mass[j] >= kZeroMassGuard) w[j] = 1.0 / (mass[j] * mass[j]);
  }
  return w;
}

// Weighted soft overlap, in [0, 0.5]; 0.5 for identical one-hot maps.
inline double ccloss(const ProbMap& y0, const ProbMap& yfuse) {
  require_same_dims(y0.dims(), yfuse.dims());
  const auto& d = y0.dims();
  std::vector<double> sum0(d.classes, 0.0), sumf(d.classes, 0.0), overlap(d.classes, 0.0);
  for (std::size_t cell = 0; cell < d.cells(); ++cell) {
    for (std::size_t j = 0; j < d.classes; ++j) {
      const double p = y0.at(cell, j);
      const double q = yfuse.at(cell, j);
      sum0[j] += p;
      sumf[j] += q;
      overlap[j] += p * q;
    }
  }
  double numerator = 0.0;
  double denominator = 0.0;
  for (std::size_t j = 0; j < d.classes; ++j) {
    const double mass = sum0[j] + sumf[j];
    if (mass < kZeroMassGuard) continue;
    const double w = 1.0 / (mass * mass);
    numerator += w * overlap[j];
    denominator += w * mass;
  }
  if (denominator == 0.0) throw Error("empty maps");
  return numerator / denominator;
}

// A group is suspected of containing a malicious agent when its loss is at or below epsilon.
constexpr bool is_suspect(double loss, double epsilon) noexcept { return loss <= epsilon; }

struct GroupCheck {
  double loss{0.0};
  bool suspect{false};
};

struct CheckRecord {
  std::vector<AgentId> group;
  double loss{0.0};
  bool suspect{false};
};

struct DetectionOutcome {
  std::set<AgentId> benign;
  std::set<AgentId> excluded;
  std::size_t verification_count{0};
  std::vector<CheckRecord> check_log;
};

template <typename V>
concept GroupVerifier = requires(V& v, std::span<const AgentFeature> group) {
  { v.verify(group) } -> std::convertible_to<GroupCheck>;
};

inline std::vector<AgentId> ids_of(std::span<const AgentFeature> group) {
  std::vector<AgentId> ids;
  ids.reserve(group.size());
  for (const auto& g : group) ids.push_back(g.agent);
  return ids;
}

// Checks groups by fusing them with the ego and comparing against the ego's
// solo prediction, which is decoded once at construction.
class ConsensusVerifier {
 public:
  ConsensusVerifier(FeatureMap ego_feature, double epsilon)
      : ego_feature_(std::move(ego_feature)), ego_solo_(decode(ego_feature_)), epsilon_(epsilon) {
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw Error("epsilon must be in (0, 0.5)");
  }

  GroupCheck verify(std::span<const AgentFeature> group) {
    if (group.empty()) throw Error("cannot verify an empty group");
    const ProbMap fused = decode(fuse(ego_feature_, group));
    const double loss = ccloss(ego_solo_, fused);
    const GroupCheck check{loss, is_suspect(loss, epsilon_)};
    ++check_counter_;
    log_.push_back({ids_of(group), check.loss, check.suspect});
    return check;
  }

  const FeatureMap& ego_feature() const noexcept { return ego_feature_; }
  const ProbMap& ego_solo_probmap() const noexcept { return ego_solo_; }
  double epsilon() const noexcept { return epsilon_; }
  std::size_t check_counter() const noexcept { return check_counter_; }
  const std::vector<CheckRecord>& log() const noexcept { return log_; }

 private:
  FeatureMap ego_feature_;
  ProbMap ego_solo_;
  double epsilon_;
  std::size_t check_counter_{0};
  std::vector<CheckRecord> log_;
};

inline GroupCheck verify_group(ConsensusVerifier& v, std::span<const AgentFeature> group) { return v.verify(group); }

// Idealized verifier: a group is suspect exactly when it contains a
// malicious agent. Reports loss 0 for such groups and 0.5 otherwise.
class SeparableOracle {
 public:
  explicit SeparableOracle(std::set<AgentId> malicious, double epsilon = kDefaultEpsilon)
      : malicious_(std::move(malicious)), epsilon_(epsilon) {}

  GroupCheck verify(std::span<const AgentFeature> group) {
    ++check_counter_;
    const bool tainted = std::any_of(group.begin(), group.end(),
                                     [&](const AgentFeature& a) { return malicious_.contains(a.agent); });
    const double loss = tainted ? 0.0 : 0.5;
    return {loss, is_suspect(loss, epsilon_)};
  }

  std::size_t check_counter() const noexcept { return check_counter_; }

 private:
  std::set<AgentId> malicious_;
  double epsilon_;
  std::size_t check_counter_{0};
};

namespace detail {

template <GroupVerifier V>
GroupCheck record_check(V& v, std::span<const AgentFeature> group, DetectionOutcome& out) {
  const GroupCheck check = v.verify(group);
  out.check_log.push_back({ids_of(group), check.loss, check.suspect});
  out.verification_count = out.check_log.size();
  return check;
}

inline void mark_benign(std::span<const AgentFeature> group, DetectionOutcome& out) {
  for (const auto& a : group) out.benign.insert(a.agent);
}

template <GroupVerifier V>
void pasac_split(V& v, std::span<const AgentFeature> group, std::size_t n_upper, DetectionOutcome& out);

// A half whose check has already run. Suspect singletons are resolved from
// that check rather than verified a second time.
template <GroupVerifier V>
void pasac_resolve(V& v, std::span<const AgentFeature> half, const GroupCheck& check, std::size_t n_upper,
                   DetectionOutcome& out) {
  if (!check.suspect) {
    mark_benign(half, out);
  } else if (half.size() == 1) {
    out.excluded.insert(half.front().agent);
  } else {
    pasac_split(v, half, n_upper, out);
  }
}

template <GroupVerifier V>
void pasac_split(V& v, std::span<const AgentFeature> group, std::size_t n_upper, DetectionOutcome& out) {
  if (out.benign.size() >= n_upper) return;
  const std::size_t first_size = (group.size() + 1) / 2;
  const auto first = group.first(first_size);
  const auto second = group.subspan(first_size);
  const GroupCheck first_check = record_check(v, first, out);
  const GroupCheck second_check = record_check(v, second, out);
  pasac_resolve(v, first, first_check, n_upper, out);
  pasac_resolve(v, second, second_check, n_upper, out);
}

}  // namespace detail

// Recursive binary-split consensus. A half that passes is accepted
// wholesale; a suspect half is split again until singletons remain. The
// search stops early, at the entry of each recursion, once n_upper
// collaborators are known benign.
template <GroupVerifier V>
DetectionOutcome pasac(V& v, std::span<const AgentFeature> collaborators, std::size_t n_upper) {
  DetectionOutcome out;
  if (collaborators.empty()) return out;
  if (n_upper < 1 || n_upper > collaborators.size()) throw Error("n_upper must be in [1, N]");
  if (collaborators.size() == 1) {
    const GroupCheck check = detail::record_check(v, collaborators, out);
    if (check.suspect) {
      out.excluded.insert(collaborators.front().agent);
    } else {
      out.benign.insert(collaborators.front().agent);
    }
    return out;
  }
  detail::pasac_split(v, collaborators, n_upper, out);
  return out;
}

template <GroupVerifier V>
DetectionOutcome one_by_one(V& v, std::span<const AgentFeature> collaborators) {
  DetectionOutcome out;
  for (std::size_t i = 0; i < collaborators.size(); ++i) {
    const auto single = collaborators.subspan(i, 1);
    if (detail::record_check(v, single, out).suspect) {
      out.excluded.insert(single.front().agent);
    } else {
      out.benign.insert(single.front().agent);
    }
  }
  return out;
}

inline std::size_t robosac_subset_size(std::size_t n, double assumed_attacker_ratio) {
  const double s = std::ceil((1.0 - assumed_attacker_ratio) * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(s, 1.0)), 1, std::max<std::size_t>(n, 1));
}

// Random-subset consensus: sample subsets sized for the assumed attacker
// ratio until one passes, then trust that subset. If every attempt fails,
// check all collaborators individually.
template <GroupVerifier V>
DetectionOutcome robosac(V& v, std::span<const AgentFeature> collaborators, double assumed_attacker_ratio,
                         std::size_t max_attempts, std::uint64_t seed) {
  DetectionOutcome out;
  if (collaborators.empty()) return out;
  if (!(assumed_attacker_ratio >= 0.0 && assumed_attacker_ratio < 1.0)) {
    throw Error("assumed attacker ratio must be in [0, 1)");
  }
  if (max_attempts < 1) throw Error("max_attempts must be at least 1");
  const std::size_t n = collaborators.size();
  const std::size_t subset_size = robosac_subset_size(n, assumed_attacker_ratio);

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::vector<AgentFeature> subset;
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates: the first subset_size slots are a uniform sample without replacement.
    for (std::size_t i = 0; i < subset_size; ++i) std::swap(order[i], order[uniform_between(rng, i, n - 1)]);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(subset_size));
    subset.clear();
    for (std::size_t i = 0; i < subset_size; ++i) subset.push_back(collaborators[order[i]]);
    if (!detail::record_check(v, subset, out).suspect) {
      detail::mark_benign(subset, out);
      return out;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto single = collaborators.subspan(i, 1);
    if (detail::record_check(v, single, out).suspect) {
      out.excluded.insert(single.front().agent);
    } else {
      out.benign.insert(single.front().agent);
    }
  }
  return out;
}

}  // namespace cpguard
