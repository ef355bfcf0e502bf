#pragma once

// White-box perturbations of a malicious collaborator's feature map that
// push the ego's fused segmentation loss up, under an L-infinity budget.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpguard/perception.hpp"

namespace cpguard {

enum class AttackKind { FGSM, PGD, NOISE };

inline std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::FGSM: return "fgsm";
    case AttackKind::PGD: return "pgd";
    case AttackKind::NOISE: return "noise";
  }
  return "?";
}

inline AttackKind parse_attack_kind(std::string_view s) {
  if (s == "fgsm" || s == "FGSM") return AttackKind::FGSM;
  if (s == "pgd" || s == "PGD") return AttackKind::PGD;
  if (s == "noise" || s == "NOISE") return AttackKind::NOISE;
  throw Error("unknown attack kind '" + std::string(s) + "'");
}

struct AttackConfig {
  AttackKind kind{AttackKind::PGD};
  double delta_max{0.1};
  std::size_t steps{15};
  double step_size{0.01};
  double noise_scale{10.0};
  std::uint64_t seed{0};

  // L-infinity radius of the perturbations this config produces.
  double bound() const noexcept { return kind == AttackKind::NOISE ? delta_max * noise_scale : delta_max; }
};

inline void validate(const AttackConfig& cfg) {
  if (!(cfg.delta_max > 0.0)) throw Error("delta_max must be positive");
  if (cfg.steps < 1) throw Error("steps must be at least 1");
  if (!(cfg.step_size > 0.0)) throw Error("step_size must be positive");
  if (!(cfg.noise_scale > 0.0)) throw Error("noise_scale must be positive");
}

struct Perturbation {
  GridDims dims;
  std::vector<double> delta;

  static Perturbation zeros(GridDims d) { return {d, std::vector<double>(d.entries(), 0.0)}; }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double v : delta) m = std::max(m, std::abs(v));
    return m;
  }
};

inline Perturbation negate(Perturbation p) {
  for (double& v : p.delta) v = -v;
  return p;
}

inline FeatureMap apply(const FeatureMap& f, const Perturbation& p) {
  require_same_dims(f.dims(), p.dims);
  std::vector<double> logits(f.logits().begin(), f.logits().end());
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += p.delta[i];
  return f.with_logits(std::move(logits));
}

namespace detail {

constexpr double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

inline Perturbation attack_fgsm(const FeatureMap& ego, std::span<const FeatureMap> others, std::size_t target_index,
                                const LabelMap& truth, const AttackConfig& cfg) {
  if (cfg.kind != AttackKind::FGSM) throw Error("attack_fgsm requires an FGSM config");
  validate(cfg);
  const auto grad = seg_loss_grad(ego, others, target_index, truth);
  Perturbation p{grad.dims, std::vector<double>(grad.values.size())};
  for (std::size_t i = 0; i < p.delta.size(); ++i) p.delta[i] = cfg.delta_max * detail::sign(grad.values[i]);
  return p;
}

// Starts from zero, takes `steps` signed steps of `step_size` and projects
// back onto the ball after each one.
inline Perturbation attack_pgd(const FeatureMap& ego, std::span<const FeatureMap> others, std::size_t target_index,
                               const LabelMap& truth, const AttackConfig& cfg) {
  if (cfg.kind != AttackKind::PGD) throw Error("attack_pgd requires a PGD config");
  validate(cfg);
  if (target_index >= others.size()) throw Error("target index out of range");
  std::vector<FeatureMap> working(others.begin(), others.end());
  const FeatureMap& clean = others[target_index];
  auto p = Perturbation::zeros(clean.dims());
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const auto grad = seg_loss_grad(ego, working, target_index, truth);
    for (std::size_t i = 0; i < p.delta.size(); ++i) {
      p.delta[i] = std::clamp(p.delta[i] + cfg.step_size * detail::sign(grad.values[i]), -cfg.delta_max, cfg.delta_max);
    }
    working[target_index] = apply(clean, p);
  }
  return p;
}

// I.i.d. Gaussian with standard deviation noise_scale, clipped to
// delta_max * noise_scale. Gradient-free baseline.
inline Perturbation attack_noise(GridDims dims, const AttackConfig& cfg) {
  if (cfg.kind != AttackKind::NOISE) throw Error("attack_noise requires a NOISE config");
  validate(cfg);
  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, cfg.noise_scale);
  const double bound = cfg.bound();
  auto p = Perturbation::zeros(dims);
  for (double& v : p.delta) v = std::clamp(gauss(rng), -bound, bound);
  return p;
}

// Dispatches on cfg.kind.
inline Perturbation generate_attack(const FeatureMap& ego, std::span<const FeatureMap> others,
                                    std::size_t target_index, const LabelMap& truth, const AttackConfig& cfg) {
  switch (cfg.kind) {
    case AttackKind::FGSM: return attack_fgsm(ego, others, target_index, truth, cfg);
    case AttackKind::PGD: return attack_pgd(ego, others, target_index, truth, cfg);
    case AttackKind::NOISE: return attack_noise(ego.dims(), cfg);
  }
  throw Error("unknown attack kind");
}

}  // namespace cpguard
