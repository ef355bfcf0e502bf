#pragma once

// One seeded trial: world, encoders, attacks, defense and the metrics that
// bracket them.

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "cpguard/harness/scenario.hpp"

namespace cpguard::harness {

struct TrialResult {
  ClassIoUReport upper;       // benign collaborators only, clean
  ClassIoUReport lower;       // ego only
  ClassIoUReport no_defense;  // all collaborators, attacked
  ClassIoUReport defended;    // ego plus the collaborators the defense accepted

  double miou_upper{0.0};
  // Every collaborator fused clean, attackers included. Not achievable by a defense.
  double miou_all_clean{0.0};
  double miou_lower{0.0};
  double miou_no_defense{0.0};
  double miou_defended{0.0};

  std::vector<std::uint32_t> attackers;
  DetectionOutcome outcome;
  double detection_precision{1.0};
  double detection_recall{1.0};
};

// Everything a trial derives deterministically from its config, before any
// defense runs. Exposed so tests can rebuild intermediate quantities.
struct TrialInputs {
  WorldState world;
  FeatureMap ego;
  std::vector<FeatureMap> clean;     // collaborator k + 1 at index k
  std::vector<FeatureMap> attacked;  // same, with perturbations applied
  std::vector<std::uint32_t> attackers;
};

namespace seeds {
inline constexpr std::uint64_t kEncoderStream = 1000;
inline constexpr std::uint64_t kAttackStream = 2000;
inline constexpr std::uint64_t kDefenseStream = 3000;
}  // namespace seeds

inline TrialInputs prepare_trial(const ScenarioConfig& cfg) {
  validate(cfg);
  const auto layout = resolved_layout(cfg);
  WorldState world =
      generate_world(cfg.dims, cfg.class_frequencies, cfg.n_blobs, derive_seed(cfg.world_seed, cfg.trial_seed));

  auto encode_agent = [&](std::size_t agent) {
    EncoderConfig enc = cfg.encoder;
    enc.seed = derive_seed(cfg.encoder.seed ^ cfg.trial_seed, seeds::kEncoderStream + agent);
    const auto& v = layout[agent];
    return encode(world, ViewMask(cfg.dims, v.center_row, v.center_col, v.radius), enc);
  };

  FeatureMap ego = encode_agent(0);
  std::vector<FeatureMap> clean;
  clean.reserve(cfg.n_collaborators);
  for (std::size_t k = 1; k <= cfg.n_collaborators; ++k) clean.push_back(encode_agent(k));

  // Each attacker optimizes against the clean fusion on its own.
  const auto attackers = resolved_attackers(cfg);
  std::vector<FeatureMap> attacked = clean;
  for (std::uint32_t id : attackers) {
    AttackConfig ac = cfg.attack;
    ac.seed = derive_seed(cfg.attack.seed ^ cfg.trial_seed, seeds::kAttackStream + id);
    const std::size_t index = id - 1;
    attacked[index] = apply(clean[index], generate_attack(ego, clean, index, world.truth, ac));
  }
  return TrialInputs{std::move(world), std::move(ego), std::move(clean), std::move(attacked), attackers};
}

inline std::vector<AgentFeature> tag_collaborators(std::span<const FeatureMap> maps) {
  std::vector<AgentFeature> tagged;
  tagged.reserve(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    tagged.push_back({AgentId{static_cast<std::uint32_t>(i + 1)}, std::cref(maps[i])});
  }
  return tagged;
}

inline ClassIoUReport fused_report(const FeatureMap& ego, std::span<const AgentFeature> group, const LabelMap& truth) {
  return miou(argmax_decode(decode(fuse(ego, group))), truth);
}

// Runs the configured defense over the attacked collaborator features.
inline DetectionOutcome run_defense(const ScenarioConfig& cfg, const TrialInputs& in) {
  const auto tagged = tag_collaborators(in.attacked);
  if (cfg.defense == DefenseKind::NONE) {
    DetectionOutcome out;
    for (const auto& t : tagged) out.benign.insert(t.agent);
    return out;
  }
  ConsensusVerifier verifier(in.ego, cfg.epsilon);
  switch (cfg.defense) {
    case DefenseKind::PASAC: return pasac(verifier, tagged, resolved_n_upper(cfg));
    case DefenseKind::ONE_BY_ONE: return one_by_one(verifier, tagged);
    case DefenseKind::ROBOSAC:
      return robosac(verifier, tagged, cfg.attack_ratio, cfg.robosac_max_attempts,
                     derive_seed(cfg.trial_seed, seeds::kDefenseStream));
    case DefenseKind::NONE: break;
  }
  throw Error("unknown defense");
}

// Rejected collaborators are all those the defense did not accept; they
// are scored against the configured attacker set. Precision is 1 when
// nothing is rejected and recall is 1 when there are no attackers.
inline void score_detection(std::size_t n_collaborators, TrialResult& r) {
  const std::set<std::uint32_t> attackers(r.attackers.begin(), r.attackers.end());
  std::size_t rejected = 0;
  std::size_t true_positive = 0;
  for (std::uint32_t id = 1; id <= n_collaborators; ++id) {
    if (r.outcome.benign.contains(AgentId{id})) continue;
    ++rejected;
    if (attackers.contains(id)) ++true_positive;
  }
  r.detection_precision = rejected ? static_cast<double>(true_positive) / static_cast<double>(rejected) : 1.0;
  r.detection_recall =
      attackers.empty() ? 1.0 : static_cast<double>(true_positive) / static_cast<double>(attackers.size());
}

inline TrialResult run_trial(const ScenarioConfig& cfg) {
  const TrialInputs in = prepare_trial(cfg);
  const auto& truth = in.world.truth;
  const auto clean = tag_collaborators(in.clean);
  const auto attacked = tag_collaborators(in.attacked);

  TrialResult r;
  r.attackers = in.attackers;
  std::vector<AgentFeature> benign_clean;
  for (const auto& a : clean) {
    if (!std::binary_search(in.attackers.begin(), in.attackers.end(), a.agent.value)) benign_clean.push_back(a);
  }
  r.upper = fused_report(in.ego, benign_clean, truth);
  r.miou_all_clean = fused_report(in.ego, clean, truth).miou;
  r.lower = miou(argmax_decode(decode(in.ego)), truth);
  r.no_defense = fused_report(in.ego, attacked, truth);

  r.outcome = run_defense(cfg, in);
  std::vector<AgentFeature> accepted;
  for (const auto& a : attacked) {
    if (r.outcome.benign.contains(a.agent)) accepted.push_back(a);
  }
  r.defended = fused_report(in.ego, accepted, truth);

  r.miou_upper = r.upper.miou;
  r.miou_lower = r.lower.miou;
  r.miou_no_defense = r.no_defense.miou;
  r.miou_defended = r.defended.miou;
  score_detection(cfg.n_collaborators, r);
  return r;
}

}  // namespace cpguard::harness
