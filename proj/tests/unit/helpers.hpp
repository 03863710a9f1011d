#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "cogbound/agent.hpp"
#include "cogbound/pomdp.hpp"
#include "cogbound/task.hpp"

namespace testing {

using namespace cogbound;

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cogbound_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Tabular policy whose q row is `q` for every belief key.
inline CrPolicy constant_policy(std::size_t num_states, const std::vector<double>& q, double theta = 0.0) {
  TabularQ table(num_states, q.size(), 1);
  for (std::size_t k = 0; k < table.num_keys(); ++k) {
    auto row = table.row(k);
    for (std::size_t a = 0; a < q.size(); ++a) row[a] = q[a];
  }
  PolicyMeta meta;
  meta.theta = theta;
  return CrPolicy(std::move(table), meta);
}

/// Bank on `grid` where every entry uses the same constant q row.
inline PolicyBank shared_bank(std::size_t num_states, const std::vector<double>& q, std::vector<double> grid) {
  std::vector<CrPolicy> policies;
  for (double th : grid) policies.push_back(constant_policy(num_states, q, th));
  return PolicyBank(std::move(grid), std::move(policies));
}

inline DiscretePomdp::Tables empty_tables(std::size_t nS, std::size_t nA, std::size_t nO, std::size_t horizon = 4) {
  DiscretePomdp::Tables t;
  t.num_states = nS;
  t.num_actions = nA;
  t.num_observations = nO;
  t.transition.assign(nS * nA * nS, 0.0);
  t.observation.assign(nS * nO, 0.0);
  t.reward.assign(nS * nA, 0.0);
  t.max_steps = horizon;
  return t;
}

inline double& T(DiscretePomdp::Tables& t, std::size_t s, std::size_t a, std::size_t s2) {
  return t.transition[(s * t.num_actions + a) * t.num_states + s2];
}
inline double& O(DiscretePomdp::Tables& t, std::size_t s, std::size_t o) { return t.observation[s * t.num_observations + o]; }

}  // namespace testing
