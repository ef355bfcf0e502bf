#pragma once

// Synthetic collaborative BEV segmentation pipeline: world generation, a
// per-agent encoder producing class logits, confidence-weighted fusion,
// a softmax decoder and the cross-entropy segmentation loss with its
// analytic gradient.
//
// Feature maps are at full grid resolution with one channel per class, so
// the decoder is a per-cell softmax.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cpguard/bev_core.hpp"
#include "cpguard/random.hpp"

namespace cpguard {

inline constexpr std::size_t kDefaultClasses = 7;

inline const std::vector<std::string>& default_class_names() {
  static const std::vector<std::string> names{"Vehicle",   "Sidewalk",   "Terrain",   "Road",
                                              "Buildings", "Pedestrian", "Vegetation"};
  return names;
}

inline const std::vector<double>& default_class_frequencies() {
  static const std::vector<double> freqs{0.10, 0.12, 0.12, 0.30, 0.10, 0.02, 0.24};
  return freqs;
}

// 0 is the ego vehicle; collaborators are numbered from 1.
struct AgentId {
  std::uint32_t value{0};

  static constexpr AgentId ego() noexcept { return AgentId{0}; }
  constexpr bool is_ego() const noexcept { return value == 0; }

  friend constexpr auto operator<=>(const AgentId&, const AgentId&) = default;
};

struct WorldState {
  GridDims dims;
  LabelMap truth;
  std::vector<double> class_frequencies;
};

class ViewMask {
 public:
  // Cell (r, c) is visible when its center (r + 0.5, c + 0.5) lies within
  // `radius` of (center_row, center_col).
  ViewMask(GridDims dims, double center_row, double center_col, double radius)
      : dims_(dims), center_row_(center_row), center_col_(center_col), radius_(radius) {
    validate(dims_);
    if (!(radius >= 0.0)) throw Error("view radius must be nonnegative");
    visible_.resize(dims_.cells());
    for (std::size_t r = 0; r < dims_.height; ++r) {
      for (std::size_t c = 0; c < dims_.width; ++c) {
        const double dr = static_cast<double>(r) + 0.5 - center_row_;
        const double dc = static_cast<double>(c) + 0.5 - center_col_;
        visible_[r * dims_.width + c] = std::hypot(dr, dc) <= radius_;
      }
    }
  }

  static ViewMask full(GridDims dims) {
    return ViewMask(dims, 0.0, 0.0, std::hypot(double(dims.width), double(dims.height)) + 1.0);
  }
  static ViewMask empty(GridDims dims) { return ViewMask(dims, -1e9, -1e9, 0.0); }

  const GridDims& dims() const noexcept { return dims_; }
  bool visible(std::size_t cell) const noexcept { return visible_[cell]; }
  std::size_t visible_count() const noexcept {
    return static_cast<std::size_t>(std::count(visible_.begin(), visible_.end(), true));
  }
  double center_row() const noexcept { return center_row_; }
  double center_col() const noexcept { return center_col_; }
  double radius() const noexcept { return radius_; }

 private:
  GridDims dims_;
  double center_row_;
  double center_col_;
  double radius_;
  std::vector<bool> visible_;
};

class FeatureMap {
 public:
  FeatureMap(GridDims dims, std::vector<double> logits, std::vector<double> confidence)
      : dims_(dims), logits_(std::move(logits)), confidence_(std::move(confidence)) {
    validate(dims_);
    if (logits_.size() != dims_.entries()) throw Error("feature logits have wrong size");
    if (confidence_.size() != dims_.cells()) throw Error("feature confidence has wrong size");
    for (double c : confidence_) {
      if (!(c >= 0.0 && c <= 1.0)) throw Error("confidence outside [0, 1]");
    }
  }

  static FeatureMap zeros(GridDims dims) {
    return FeatureMap(dims, std::vector<double>(dims.entries(), 0.0), std::vector<double>(dims.cells(), 0.0));
  }

  const GridDims& dims() const noexcept { return dims_; }
  std::span<const double> logits() const noexcept { return logits_; }
  std::span<const double> confidence() const noexcept { return confidence_; }
  std::span<const double> cell_logits(std::size_t cell) const noexcept {
    return std::span<const double>(logits_).subspan(cell * dims_.classes, dims_.classes);
  }

  // Same confidence, logits replaced. Used by perturbation application.
  FeatureMap with_logits(std::vector<double> logits) const { return FeatureMap(dims_, std::move(logits), confidence_); }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  GridDims dims_;
  std::vector<double> logits_;
  std::vector<double> confidence_;
};

// Non-owning (agent, features) pair. Fusion orders contributions by agent.
struct AgentFeature {
  AgentId agent;
  std::reference_wrapper<const FeatureMap> features;
};

struct EncoderConfig {
  double correct_logit{4.0};
  double observation_noise_rate{0.0};
  std::uint64_t seed{0};
};

// Dense W x H x C tensor of loss derivatives with respect to a feature map's logits.
struct LogitGradient {
  GridDims dims;
  std::vector<double> values;
};

inline WorldState generate_world(GridDims dims, std::span<const double> class_frequencies, std::size_t n_blobs,
                                 std::uint64_t seed) {
  validate(dims);
  if (class_frequencies.size() != dims.classes) throw Error("class frequency vector has wrong length");
  double total = 0.0;
  for (double f : class_frequencies) {
    if (!(f >= 0.0)) throw Error("class frequencies must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("class frequencies must sum to 1");

  const auto background = static_cast<LabelMap::Label>(
      std::max_element(class_frequencies.begin(), class_frequencies.end()) - class_frequencies.begin());
  std::vector<LabelMap::Label> labels(dims.cells(), background);

  Rng rng(seed);
  const std::size_t max_w = std::min(dims.width, std::max<std::size_t>(2, dims.width / 4));
  const std::size_t max_h = std::min(dims.height, std::max<std::size_t>(2, dims.height / 4));
  for (std::size_t b = 0; b < n_blobs; ++b) {
    const double u = uniform01(rng);
    std::size_t cls = 0;
    double cumulative = class_frequencies[0];
    while (cls + 1 < dims.classes && u >= cumulative) cumulative += class_frequencies[++cls];
    const std::size_t w = uniform_between(rng, 1, max_w);
    const std::size_t h = uniform_between(rng, 1, max_h);
    const std::size_t col0 = uniform_between(rng, 0, dims.width - w);
    const std::size_t row0 = uniform_between(rng, 0, dims.height - h);
    for (std::size_t r = row0; r < row0 + h; ++r) {
      for (std::size_t c = col0; c < col0 + w; ++c) labels[r * dims.width + c] = static_cast<LabelMap::Label>(cls);
    }
  }
  return WorldState{dims, LabelMap(dims, std::move(labels)),
                    std::vector<double>(class_frequencies.begin(), class_frequencies.end())};
}

inline FeatureMap encode(const WorldState& world, const ViewMask& mask, const EncoderConfig& cfg) {
  require_same_dims(world.dims, mask.dims());
  if (!(cfg.correct_logit > 0.0)) throw Error("correct_logit must be positive");
  if (!(cfg.observation_noise_rate >= 0.0 && cfg.observation_noise_rate <= 1.0)) {
    throw Error("observation_noise_rate must be in [0, 1]");
  }
  const auto& d = world.dims;
  std::vector<double> logits(d.entries(), 0.0);
  std::vector<double> confidence(d.cells(), 0.0);
  Rng rng(cfg.seed);
  for (std::size_t cell = 0; cell < d.cells(); ++cell) {
    if (!mask.visible(cell)) continue;
    std::size_t observed = world.truth[cell];
    if (uniform01(rng) < cfg.observation_noise_rate) observed = uniform_between(rng, 0, d.classes - 1);
    logits[cell * d.classes + observed] = cfg.correct_logit;
    confidence[cell] = 1.0;
  }
  return FeatureMap(d, std::move(logits), std::move(confidence));
}

namespace detail {

inline std::vector<AgentFeature> sorted_contributions(const FeatureMap& ego, std::span<const AgentFeature> others) {
  std::vector<AgentFeature> all;
  all.reserve(others.size() + 1);
  all.push_back({AgentId::ego(), std::cref(ego)});
  for (const auto& o : others) {
    if (o.agent.is_ego()) throw Error("collaborator list must not contain the ego agent");
    require_same_dims(ego.dims(), o.features.get().dims());
    all.push_back(o);
  }
  std::sort(all.begin() + 1, all.end(), [](const AgentFeature& a, const AgentFeature& b) { return a.agent < b.agent; });
  for (std::size_t i = 2; i < all.size(); ++i) {
    if (all[i].agent == all[i - 1].agent) throw Error("duplicate agent id in fusion input");
  }
  return all;
}

inline std::vector<AgentFeature> positional(std::span<const FeatureMap> others) {
  std::vector<AgentFeature> tagged;
  tagged.reserve(others.size());
  for (std::size_t i = 0; i < others.size(); ++i) {
    tagged.push_back({AgentId{static_cast<std::uint32_t>(i + 1)}, std::cref(others[i])});
  }
  return tagged;
}

// Confidence-weighted mean of cell logits into `out`; returns the raw confidence sum.
inline double fuse_cell(std::span<const AgentFeature> sorted, std::size_t cell, std::size_t classes,
                        std::span<double> out) {
  double conf_sum = 0.0;
  for (const auto& a : sorted) conf_sum += a.features.get().confidence()[cell];
  const double denom = std::max(conf_sum, 1.0);
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& a : sorted) {
    const double w = a.features.get().confidence()[cell];
    if (w == 0.0) continue;
    auto l = a.features.get().cell_logits(cell);
    for (std::size_t j = 0; j < classes; ++j) out[j] += w * l[j];
  }
  for (double& v : out) v /= denom;
  return conf_sum;
}

inline void softmax(std::span<const double> logits, std::span<double> out) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(logits[j] - peak);
    sum += out[j];
  }
  for (double& v : out) v /= sum;
}

}  // namespace detail

// Contributions are summed in ascending agent order (ego first), so the
// result is bitwise independent of the order of `others`.
inline FeatureMap fuse(const FeatureMap& ego, std::span<const AgentFeature> others) {
  const auto sorted = detail::sorted_contributions(ego, others);
  const auto& d = ego.dims();
  std::vector<double> logits(d.entries());
  std::vector<double> confidence(d.cells());
  for (std::size_t cell = 0; cell < d.cells(); ++cell) {
    const double conf_sum =
        detail::fuse_cell(sorted, cell, d.classes, std::span<double>(logits).subspan(cell * d.classes, d.classes));
    confidence[cell] = std::min(1.0, conf_sum);
  }
  return FeatureMap(d, std::move(logits), std::move(confidence));
}

// Collaborator i of `others` is treated as agent i + 1.
inline FeatureMap fuse(const FeatureMap& ego, std::span<const FeatureMap> others) {
  const auto tagged = detail::positional(others);
  return fuse(ego, std::span<const AgentFeature>(tagged));
}

inline ProbMap decode(const FeatureMap& f) {
  const auto& d = f.dims();
  for (double v : f.logits()) {
    if (!std::isfinite(v)) throw Error("non-finite logit");
  }
  std::vector<double> probs(d.entries());
  for (std::size_t cell = 0; cell < d.cells(); ++cell) {
    detail::softmax(f.cell_logits(cell), std::span<double>(probs).subspan(cell * d.classes, d.classes));
  }
  return ProbMap(d, std::move(probs));
}

inline constexpr double kProbabilityFloor = 1e-12;

inline double seg_loss(const ProbMap& y, const LabelMap& truth) {
  require_same_dims(y.dims(), truth.dims());
  double total = 0.0;
  for (std::size_t cell = 0; cell < y.dims().cells(); ++cell) {
    total -= std::log(std::max(y.at(cell, truth[cell]), kProbabilityFloor));
  }
  return total / static_cast<double>(y.dims().cells());
}

// d seg_loss(decode(fuse(ego, others)), truth) / d logits of others[target_index].
// The clamp in seg_loss is ignored; it is inactive unless a probability
// underflows below 1e-12.
inline LogitGradient seg_loss_grad(const FeatureMap& ego, std::span<const FeatureMap> others, std::size_t target_index,
                                   const LabelMap& truth) {
  if (target_index >= others.size()) throw Error("target index out of range");
  require_same_dims(ego.dims(), truth.dims());
  const auto tagged = detail::positional(others);
  const auto sorted = detail::sorted_contributions(ego, tagged);
  const auto& d = ego.dims();
  const FeatureMap& target = others[target_index];
  const double inv_cells = 1.0 / static_cast<double>(d.cells());

  LogitGradient grad{d, std::vector<double>(d.entries(), 0.0)};
  std::vector<double> fused(d.classes);
  std::vector<double> probs(d.classes);
  for (std::size_t cell = 0; cell < d.cells(); ++cell) {
    const double w = target.confidence()[cell];
    if (w == 0.0) continue;
    const double conf_sum = detail::fuse_cell(sorted, cell, d.classes, fused);
    detail::softmax(fused, probs);
    const double scale = w / std::max(conf_sum, 1.0) * inv_cells;
    double* g = grad.values.data() + cell * d.classes;
    for (std::size_t j = 0; j < d.classes; ++j) {
      g[j] = (probs[j] - (j == truth[cell] ? 1.0 : 0.0)) * scale;
    }
  }
  return grad;
}

}  // namespace cpguard
