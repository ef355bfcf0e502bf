#pragma once

// Flat key-value scenario files:
//
//   # comment
//   n_collaborators = 5
//   attack.kind = pgd
//   class_frequencies = 0.1, 0.12, 0.12, 0.3, 0.1, 0.02, 0.24
//   agent_layout = 32 32 22.4; 32 51.2 22.4; ...
//
// Keys mirror ScenarioConfig fields. Unknown or repeated keys are errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <utility>
#include <vector>

#include "cpguard/harness/scenario.hpp"

namespace cpguard::harness {

class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw ConfigError("invalid value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text, char sep = ',') {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  for (auto part : split(text, sep)) out.push_back(parse_number<T>(key, part));
  return out;
}

}  // namespace detail

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace detail {

template <typename T>
std::string join(const std::vector<T>& values, std::string_view sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

using Setter = std::function<void(ScenarioConfig&, std::string_view key, std::string_view value)>;

inline const std::map<std::string, Setter, std::less<>>& setters() {
  using namespace std::string_view_literals;
  auto sz = [](std::size_t ScenarioConfig::*field) {
    return Setter([field](ScenarioConfig& c, std::string_view k, std::string_view v) {
      c.*field = parse_number<std::size_t>(k, v);
    });
  };
  auto real = [](auto accessor) {
    return Setter([accessor](ScenarioConfig& c, std::string_view k, std::string_view v) {
      accessor(c) = parse_number<double>(k, v);
    });
  };
  auto u64 = [](auto accessor) {
    return Setter([accessor](ScenarioConfig& c, std::string_view k, std::string_view v) {
      accessor(c) = parse_number<std::uint64_t>(k, v);
    });
  };
  static const std::map<std::string, Setter, std::less<>> table{
      {"width", Setter([](ScenarioConfig& c, auto k, auto v) { c.dims.width = parse_number<std::size_t>(k, v); })},
      {"height", Setter([](ScenarioConfig& c, auto k, auto v) { c.dims.height = parse_number<std::size_t>(k, v); })},
      {"classes", Setter([](ScenarioConfig& c, auto k, auto v) { c.dims.classes = parse_number<std::size_t>(k, v); })},
      {"class_frequencies",
       Setter([](ScenarioConfig& c, auto k, auto v) { c.class_frequencies = parse_list<double>(k, v); })},
      {"n_blobs", sz(&ScenarioConfig::n_blobs)},
      {"n_collaborators", sz(&ScenarioConfig::n_collaborators)},
      {"attacker_ids",
       Setter([](ScenarioConfig& c, auto k, auto v) { c.attacker_ids = parse_list<std::uint32_t>(k, v); })},
      {"attack_ratio", real([](ScenarioConfig& c) -> double& { return c.attack_ratio; })},
      {"attack.kind", Setter([](ScenarioConfig& c, auto, auto v) {
         try {
           c.attack.kind = parse_attack_kind(trim(v));
         } catch (const Error& e) {
           throw ConfigError(e.what());
         }
       })},
      {"attack.delta_max", real([](ScenarioConfig& c) -> double& { return c.attack.delta_max; })},
      {"attack.steps", Setter([](ScenarioConfig& c, auto k, auto v) { c.attack.steps = parse_number<std::size_t>(k, v); })},
      {"attack.step_size", real([](ScenarioConfig& c) -> double& { return c.attack.step_size; })},
      {"attack.noise_scale", real([](ScenarioConfig& c) -> double& { return c.attack.noise_scale; })},
      {"attack.seed", u64([](ScenarioConfig& c) -> std::uint64_t& { return c.attack.seed; })},
      {"encoder.correct_logit", real([](ScenarioConfig& c) -> double& { return c.encoder.correct_logit; })},
      {"encoder.observation_noise_rate",
       real([](ScenarioConfig& c) -> double& { return c.encoder.observation_noise_rate; })},
      {"encoder.seed", u64([](ScenarioConfig& c) -> std::uint64_t& { return c.encoder.seed; })},
      {"epsilon", real([](ScenarioConfig& c) -> double& { return c.epsilon; })},
      {"n_upper", Setter([](ScenarioConfig& c, auto k, auto v) { c.n_upper = parse_number<std::size_t>(k, v); })},
      {"defense", Setter([](ScenarioConfig& c, auto, auto v) {
         try {
           c.defense = parse_defense_kind(trim(v));
         } catch (const Error& e) {
           throw ConfigError(e.what());
         }
       })},
      {"robosac_max_attempts", sz(&ScenarioConfig::robosac_max_attempts)},
      {"layout.ego_radius", real([](ScenarioConfig& c) -> double& { return c.ring.ego_radius_frac; })},
      {"layout.ring_radius", real([](ScenarioConfig& c) -> double& { return c.ring.ring_radius_frac; })},
      {"layout.view_radius", real([](ScenarioConfig& c) -> double& { return c.ring.view_radius_frac; })},
      {"agent_layout", Setter([](ScenarioConfig& c, auto k, auto v) {
         c.agent_layout.clear();
         if (trim(v).empty()) return;
         for (auto entry : split(v, ';')) {
           std::vector<double> nums;
           std::istringstream in{std::string(entry)};
           std::string tok;
           while (in >> tok) nums.push_back(parse_number<double>(k, tok));
           if (nums.size() != 3) throw ConfigError("agent_layout entries must be 'row col radius'");
           c.agent_layout.push_back({nums[0], nums[1], nums[2]});
         }
       })},
      {"world_seed", u64([](ScenarioConfig& c) -> std::uint64_t& { return c.world_seed; })},
      {"trial_seed", u64([](ScenarioConfig& c) -> std::uint64_t& { return c.trial_seed; })},
  };
  return table;
}

}  // namespace detail

// Parses `text` on top of `base` (defaults when omitted).
inline ScenarioConfig parse_config(std::string_view text, ScenarioConfig base = {}) {
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  for (auto raw : detail::split(text, '\n')) {
    ++line_no;
    const auto hash = raw.find('#');
    const auto line = detail::trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    const auto& table = detail::setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
    }
    it->second(base, key, value);
  }
  return base;
}

inline ScenarioConfig load_config(const std::string& path, ScenarioConfig base = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Fully resolved config as ordered key-value pairs, parseable by parse_config.
inline std::vector<std::pair<std::string, std::string>> to_key_values(const ScenarioConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  auto add = [&](std::string k, std::string v) { kv.emplace_back(std::move(k), std::move(v)); };
  add("width", std::to_string(c.dims.width));
  add("height", std::to_string(c.dims.height));
  add("classes", std::to_string(c.dims.classes));
  add("class_frequencies", detail::join(c.class_frequencies));
  add("n_blobs", std::to_string(c.n_blobs));
  add("n_collaborators", std::to_string(c.n_collaborators));
  if (c.attacker_ids) add("attacker_ids", detail::join(*c.attacker_ids));
  add("attack_ratio", format_double(c.attack_ratio));
  add("attack.kind", std::string(to_string(c.attack.kind)));
  add("attack.delta_max", format_double(c.attack.delta_max));
  add("attack.steps", std::to_string(c.attack.steps));
  add("attack.step_size", format_double(c.attack.step_size));
  add("attack.noise_scale", format_double(c.attack.noise_scale));
  add("attack.seed", std::to_string(c.attack.seed));
  add("encoder.correct_logit", format_double(c.encoder.correct_logit));
  add("encoder.observation_noise_rate", format_double(c.encoder.observation_noise_rate));
  add("encoder.seed", std::to_string(c.encoder.seed));
  add("epsilon", format_double(c.epsilon));
  add("n_upper", std::to_string(resolved_n_upper(c)));
  add("defense", std::string(to_string(c.defense)));
  add("robosac_max_attempts", std::to_string(c.robosac_max_attempts));
  add("layout.ego_radius", format_double(c.ring.ego_radius_frac));
  add("layout.ring_radius", format_double(c.ring.ring_radius_frac));
  add("layout.view_radius", format_double(c.ring.view_radius_frac));
  std::string layout;
  for (const auto& v : resolved_layout(c)) {
    if (!layout.empty()) layout += "; ";
    layout += format_double(v.center_row) + " " + format_double(v.center_col) + " " + format_double(v.radius);
  }
  add("agent_layout", layout);
  add("world_seed", std::to_string(c.world_seed));
  add("trial_seed", std::to_string(c.trial_seed));
  return kv;
}

inline std::string to_config_text(const ScenarioConfig& c) {
  std::string out;
  for (const auto& [k, v] : to_key_values(c)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace cpguard::harness
