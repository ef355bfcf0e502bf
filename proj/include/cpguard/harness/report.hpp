#pragma once

// CSV and JSON emission for harness results. Every document carries the
// resolved scenario config. CSV puts it in leading '# key = value' lines
// ahead of a fixed header row.

#include <json.hpp>

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpguard/harness/config_io.hpp"
#include "cpguard/harness/experiments.hpp"

namespace cpguard::harness {

enum class OutputFormat { JSON, CSV };

using Json = nlohmann::ordered_json;

namespace detail {

// RFC 4180 quoting: fields containing a comma, quote or line break are quoted.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\r\n";
}

inline std::string csv_preamble(const ScenarioConfig& cfg, const std::vector<std::pair<std::string, std::string>>& extra) {
  std::string out;
  for (const auto& [k, v] : to_key_values(cfg)) out += "# " + k + " = " + v + "\r\n";
  for (const auto& [k, v] : extra) out += "# " + k + " = " + v + "\r\n";
  return out;
}

inline Json config_json(const ScenarioConfig& cfg) {
  Json j = Json::object();
  for (const auto& [k, v] : to_key_values(cfg)) j[k] = v;
  return j;
}

inline std::string ids_text(const std::set<AgentId>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ' ';
    out += std::to_string(id.value);
  }
  return out;
}

inline Json ids_json(const std::set<AgentId>& ids) {
  Json a = Json::array();
  for (const auto& id : ids) a.push_back(id.value);
  return a;
}

inline Json iou_json(const ClassIoUReport& r) {
  Json per = Json::array();
  for (const auto& v : r.per_class_iou) per.push_back(v ? Json(*v) : Json(nullptr));
  return Json{{"miou", r.miou}, {"miou_all_classes", r.miou_all_classes}, {"per_class_iou", per}};
}

inline Json stats_json(const MetricStats& s) {
  return Json{{"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}};
}

inline Json aggregate_json(const AggregateStats& a) {
  Json j = Json::object();
  j["n_trials"] = a.n_trials;
  for (const auto& [name, stats] : named_metrics(a)) j[name] = stats_json(*stats);
  return j;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

inline Json trial_json(const TrialResult& r) {
  Json log = Json::array();
  for (const auto& c : r.outcome.check_log) {
    Json group = Json::array();
    for (const auto& id : c.group) group.push_back(id.value);
    log.push_back(Json{{"group", group}, {"ccloss", c.loss}, {"suspect", c.suspect}});
  }
  return Json{{"miou_upper", r.miou_upper},
              {"miou_all_clean", r.miou_all_clean},
              {"miou_lower", r.miou_lower},
              {"miou_no_defense", r.miou_no_defense},
              {"miou_defended", r.miou_defended},
              {"detection_precision", r.detection_precision},
              {"detection_recall", r.detection_recall},
              {"attackers", r.attackers},
              {"outcome",
               Json{{"benign", detail::ids_json(r.outcome.benign)},
                    {"excluded", detail::ids_json(r.outcome.excluded)},
                    {"verification_count", r.outcome.verification_count},
                    {"check_log", log}}},
              {"class_iou",
               Json{{"classes", default_class_names().size() == r.upper.per_class_iou.size() ? Json(default_class_names())
                                                                                             : Json(nullptr)},
                    {"upper", detail::iou_json(r.upper)},
                    {"lower", detail::iou_json(r.lower)},
                    {"no_defense", detail::iou_json(r.no_defense)},
                    {"defended", detail::iou_json(r.defended)}}}};
}

inline std::string render_trial(const ScenarioConfig& cfg, const TrialResult& r, OutputFormat fmt) {
  if (fmt == OutputFormat::JSON) {
    return detail::dump(Json{{"command", "run"}, {"config", detail::config_json(cfg)}, {"result", trial_json(r)}});
  }
  std::string out = detail::csv_preamble(cfg, {});
  out += detail::csv_row({"trial_seed", "miou_upper", "miou_all_clean", "miou_lower", "miou_no_defense",
                          "miou_defended", "detection_precision", "detection_recall", "verification_count", "benign",
                          "excluded"});
  out += detail::csv_row({std::to_string(cfg.trial_seed), format_double(r.miou_upper), format_double(r.miou_all_clean),
                          format_double(r.miou_lower), format_double(r.miou_no_defense),
                          format_double(r.miou_defended), format_double(r.detection_precision),
                          format_double(r.detection_recall), std::to_string(r.outcome.verification_count),
                          detail::ids_text(r.outcome.benign), detail::ids_text(r.outcome.excluded)});
  return out;
}

inline std::string render_experiment(const ScenarioConfig& cfg, std::size_t n_trials, std::uint64_t base_seed,
                                     const AggregateStats& a, OutputFormat fmt) {
  if (fmt == OutputFormat::JSON) {
    return detail::dump(Json{{"command", "experiment"},
                             {"config", detail::config_json(cfg)},
                             {"trials", n_trials},
                             {"base_seed", base_seed},
                             {"stats", detail::aggregate_json(a)}});
  }
  std::string out =
      detail::csv_preamble(cfg, {{"trials", std::to_string(n_trials)}, {"base_seed", std::to_string(base_seed)}});
  out += detail::csv_row({"metric", "mean", "stddev", "min", "max"});
  for (const auto& [name, s] : named_metrics(a)) {
    out += detail::csv_row(
        {name, format_double(s->mean), format_double(s->stddev), format_double(s->min), format_double(s->max)});
  }
  return out;
}

inline std::string render_sweep(const ScenarioConfig& cfg, std::size_t n_trials, std::uint64_t base_seed,
                                std::span<const ThresholdRow> rows, OutputFormat fmt) {
  if (fmt == OutputFormat::JSON) {
    Json arr = Json::array();
    for (const auto& r : rows) {
      arr.push_back(Json{{"epsilon", r.epsilon},
                         {"miou_defended_mean", r.stats.miou_defended.mean},
                         {"detection_precision_mean", r.stats.detection_precision.mean},
                         {"detection_recall_mean", r.stats.detection_recall.mean},
                         {"stats", detail::aggregate_json(r.stats)}});
    }
    return detail::dump(Json{{"command", "sweep-threshold"},
                             {"config", detail::config_json(cfg)},
                             {"trials", n_trials},
                             {"base_seed", base_seed},
                             {"rows", arr}});
  }
  std::string out =
      detail::csv_preamble(cfg, {{"trials", std::to_string(n_trials)}, {"base_seed", std::to_string(base_seed)}});
  out += detail::csv_row({"epsilon", "miou_defended_mean", "detection_precision_mean", "detection_recall_mean",
                          "miou_no_defense_mean", "miou_upper_mean", "miou_lower_mean", "verification_count_mean"});
  for (const auto& r : rows) {
    out += detail::csv_row({format_double(r.epsilon), format_double(r.stats.miou_defended.mean),
                            format_double(r.stats.detection_precision.mean),
                            format_double(r.stats.detection_recall.mean), format_double(r.stats.miou_no_defense.mean),
                            format_double(r.stats.miou_upper.mean), format_double(r.stats.miou_lower.mean),
                            format_double(r.stats.verification_count.mean)});
  }
  return out;
}

inline std::string render_samplers(const ScenarioConfig& cfg, std::size_t n_trials, std::uint64_t base_seed,
                                   std::string_view verifier, std::span<const SamplerRow> rows, OutputFormat fmt) {
  if (fmt == OutputFormat::JSON) {
    Json arr = Json::array();
    for (const auto& r : rows) {
      arr.push_back(Json{{"attack_ratio", r.attack_ratio},
                         {"method", to_string(r.method)},
                         {"count_min", r.count.min},
                         {"count_max", r.count.max},
                         {"count_avg", r.count.avg}});
    }
    return detail::dump(Json{{"command", "compare-samplers"},
                             {"config", detail::config_json(cfg)},
                             {"trials", n_trials},
                             {"base_seed", base_seed},
                             {"verifier", verifier},
                             {"rows", arr}});
  }
  std::string out = detail::csv_preamble(cfg, {{"trials", std::to_string(n_trials)},
                                               {"base_seed", std::to_string(base_seed)},
                                               {"verifier", std::string(verifier)}});
  out += detail::csv_row({"attack_ratio", "method", "count_min", "count_max", "count_avg"});
  for (const auto& r : rows) {
    out += detail::csv_row({format_double(r.attack_ratio), std::string(to_string(r.method)), format_double(r.count.min),
                            format_double(r.count.max), format_double(r.count.avg)});
  }
  return out;
}

inline std::string render_scaling(std::size_t n_trials, std::uint64_t base_seed, std::span<const ScalingRow> rows,
                                  OutputFormat fmt) {
  if (fmt == OutputFormat::JSON) {
    Json arr = Json::array();
    for (const auto& r : rows) {
      arr.push_back(Json{{"n_benign", r.n_benign},
                         {"n_malicious", r.n_malicious},
                         {"count_min", r.count.min},
                         {"count_max", r.count.max},
                         {"count_avg", r.count.avg}});
    }
    return detail::dump(
        Json{{"command", "count-scaling"}, {"trials", n_trials}, {"base_seed", base_seed}, {"rows", arr}});
  }
  std::string out = "# trials = " + std::to_string(n_trials) + "\r\n# base_seed = " + std::to_string(base_seed) + "\r\n";
  out += detail::csv_row({"n_benign", "n_malicious", "count_min", "count_max", "count_avg"});
  for (const auto& r : rows) {
    out += detail::csv_row({std::to_string(r.n_benign), std::to_string(r.n_malicious), format_double(r.count.min),
                            format_double(r.count.max), format_double(r.count.avg)});
  }
  return out;
}

}  // namespace cpguard::harness
