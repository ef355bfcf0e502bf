#pragma once

// Brute-force checks of the group-testing search against a separable oracle:
// every malice pattern for N = 1..max_n.

#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "cpguard/consensus.hpp"

namespace cpguard::harness {

struct SelftestReport {
  std::size_t patterns{0};
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

inline SelftestReport pasac_selftest(std::size_t max_n = 8) {
  SelftestReport report;
  const FeatureMap placeholder = FeatureMap::zeros(GridDims{1, 1, 2});
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::vector<AgentFeature> group;
    for (std::size_t i = 1; i <= n; ++i) group.push_back({AgentId{static_cast<std::uint32_t>(i)}, std::cref(placeholder)});
    const double log2n = std::ceil(std::log2(static_cast<double>(n)));
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      std::set<AgentId> bad;
      std::set<AgentId> good;
      for (std::size_t i = 0; i < n; ++i) {
        const AgentId id{static_cast<std::uint32_t>(i + 1)};
        ((mask >> i) & 1u ? bad : good).insert(id);
      }
      ++report.patterns;
      auto fail = [&](const std::string& what) {
        report.failures.push_back("N=" + std::to_string(n) + " mask=" + std::to_string(mask) + ": " + what);
      };
      SeparableOracle oracle(bad);
      const auto out = pasac(oracle, group, n);
      if (out.benign != good) fail("benign set mismatch");
      if (out.excluded != bad) fail("excluded set mismatch");
      if (out.verification_count != oracle.check_counter()) fail("verification count disagrees with oracle");
      const double bound = 2.0 * static_cast<double>(bad.size()) * log2n + 2.0;
      if (static_cast<double>(out.verification_count) > bound) fail("verification count above bound");

      SeparableOracle single(bad);
      const auto obo = one_by_one(single, group);
      if (obo.benign != good || obo.excluded != bad || obo.verification_count != n) fail("one_by_one mismatch");
    }
  }
  return report;
}

}  // namespace cpguard::harness
