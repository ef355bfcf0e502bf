#pragma once

// Scenario description for one trial and its validation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpguard/attacks.hpp"
#include "cpguard/consensus.hpp"
#include "cpguard/perception.hpp"

namespace cpguard::harness {

enum class DefenseKind { NONE, PASAC, ONE_BY_ONE, ROBOSAC };

inline std::string_view to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::NONE: return "none";
    case DefenseKind::PASAC: return "pasac";
    case DefenseKind::ONE_BY_ONE: return "one_by_one";
    case DefenseKind::ROBOSAC: return "robosac";
  }
  return "?";
}

inline DefenseKind parse_defense_kind(std::string_view s) {
  if (s == "none" || s == "NONE") return DefenseKind::NONE;
  if (s == "pasac" || s == "PASAC") return DefenseKind::PASAC;
  if (s == "one_by_one" || s == "ONE_BY_ONE") return DefenseKind::ONE_BY_ONE;
  if (s == "robosac" || s == "ROBOSAC") return DefenseKind::ROBOSAC;
  throw Error("unknown defense '" + std::string(s) + "'");
}

// Center and radius are in cells.
struct ViewSpec {
  double center_row{0.0};
  double center_col{0.0};
  double radius{0.0};

  friend bool operator==(const ViewSpec&, const ViewSpec&) = default;
};

// Ego at the grid center; collaborators evenly spaced on a ring, the first
// at angle 0 (to the right of the ego).
struct RingLayout {
  double ego_radius_frac{0.35};
  double ring_radius_frac{0.3};
  double view_radius_frac{0.35};

  std::vector<ViewSpec> build(const GridDims& dims, std::size_t n_collaborators) const {
    const double w = static_cast<double>(dims.width);
    const double cr = static_cast<double>(dims.height) / 2.0;
    const double cc = w / 2.0;
    std::vector<ViewSpec> views;
    views.push_back({cr, cc, ego_radius_frac * w});
    for (std::size_t k = 0; k < n_collaborators; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_collaborators);
      views.push_back({cr + ring_radius_frac * w * std::sin(angle), cc + ring_radius_frac * w * std::cos(angle),
                       view_radius_frac * w});
    }
    return views;
  }
};

// Working point of the synthetic scenario. The L-infinity budget is stated
// in logit units: twice the encoder's correct_logit, enough to overturn a
// cell on which up to three agents agree. Step count and the step/budget
// ratio are the usual PGD settings (15 steps of budget / 10).
inline constexpr double kStandardEpsilon = 0.135;

inline AttackConfig standard_attack() {
  AttackConfig a;
  a.kind = AttackKind::PGD;
  a.delta_max = 8.0;
  a.steps = 15;
  a.step_size = 0.8;
  return a;
}

struct ScenarioConfig {
  GridDims dims{64, 64, kDefaultClasses};
  std::vector<double> class_frequencies{default_class_frequencies()};
  std::size_t n_blobs{100};
  std::size_t n_collaborators{5};

  // Explicit attacker ids (1-based collaborator ids) take precedence over attack_ratio.
  std::optional<std::vector<std::uint32_t>> attacker_ids;
  double attack_ratio{0.2};

  AttackConfig attack{standard_attack()};
  EncoderConfig encoder{4.0, 0.15, 0};
  double epsilon{kStandardEpsilon};
  // Defaults to n_collaborators.
  std::optional<std::size_t> n_upper;
  DefenseKind defense{DefenseKind::PASAC};
  std::size_t robosac_max_attempts{100};

  RingLayout ring{};
  // Full layout, ego first. Empty means "build from ring".
  std::vector<ViewSpec> agent_layout;

  std::uint64_t world_seed{0};
  std::uint64_t trial_seed{0};
};

inline std::vector<ViewSpec> resolved_layout(const ScenarioConfig& cfg) {
  return cfg.agent_layout.empty() ? cfg.ring.build(cfg.dims, cfg.n_collaborators) : cfg.agent_layout;
}

inline std::size_t resolved_n_upper(const ScenarioConfig& cfg) { return cfg.n_upper.value_or(cfg.n_collaborators); }

// round-half-away-from-zero of ratio * N.
inline std::size_t attacker_count_for_ratio(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
}

// Sorted collaborator ids of the attackers: the explicit list if given,
// otherwise the lowest-indexed round(ratio * N) collaborators.
inline std::vector<std::uint32_t> resolved_attackers(const ScenarioConfig& cfg) {
  if (cfg.attacker_ids) {
    auto ids = *cfg.attacker_ids;
    std::sort(ids.begin(), ids.end());
    return ids;
  }
  std::vector<std::uint32_t> ids;
  const std::size_t count = attacker_count_for_ratio(cfg.attack_ratio, cfg.n_collaborators);
  for (std::size_t i = 0; i < count; ++i) ids.push_back(static_cast<std::uint32_t>(i + 1));
  return ids;
}

inline void validate(const ScenarioConfig& cfg) {
  validate(cfg.dims);
  if (cfg.class_frequencies.size() != cfg.dims.classes) throw Error("class_frequencies length must equal classes");
  if (cfg.n_collaborators < 1) throw Error("n_collaborators must be at least 1");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 0.5)) throw Error("epsilon must be in (0, 0.5)");
  if (!(cfg.attack_ratio >= 0.0 && cfg.attack_ratio < 1.0)) throw Error("attack_ratio must be in [0, 1)");
  validate(cfg.attack);
  if (!(cfg.encoder.correct_logit > 0.0)) throw Error("encoder.correct_logit must be positive");
  if (!(cfg.encoder.observation_noise_rate >= 0.0 && cfg.encoder.observation_noise_rate <= 1.0)) {
    throw Error("encoder.observation_noise_rate must be in [0, 1]");
  }
  const std::size_t n_upper = resolved_n_upper(cfg);
  if (n_upper < 1 || n_upper > cfg.n_collaborators) throw Error("n_upper must be in [1, n_collaborators]");
  if (cfg.robosac_max_attempts < 1) throw Error("robosac_max_attempts must be at least 1");
  if (!cfg.agent_layout.empty() && cfg.agent_layout.size() != cfg.n_collaborators + 1) {
    throw Error("agent_layout must list the ego plus every collaborator");
  }
  for (const auto& v : resolved_layout(cfg)) {
    if (!(v.radius >= 0.0)) throw Error("view radius must be nonnegative");
  }
  const auto attackers = resolved_attackers(cfg);
  if (attackers.size() > cfg.n_collaborators) throw Error("more attackers than collaborators");
  for (std::size_t i = 0; i < attackers.size(); ++i) {
    if (attackers[i] < 1 || attackers[i] > cfg.n_collaborators) throw Error("attacker id out of range");
    if (i > 0 && attackers[i] == attackers[i - 1]) throw Error("duplicate attacker id");
  }
}

}  // namespace cpguard::harness
