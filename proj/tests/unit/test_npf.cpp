#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>

#include "cogbound/error.hpp"
#include "cogbound/harness.hpp"
#include "cogbound/micro.hpp"
#include "cogbound/npf.hpp"
#include "helpers.hpp"

using namespace cogbound;
using namespace testing;

namespace {

struct Evidence {
  std::vector<ObservationIndex> obs;
  std::vector<ActionIndex> acts;
};

Evidence simulate(const EpisodicTask& task, const CrPolicy& policy, double theta, std::size_t steps,
                  std::uint64_t seed) {
  Rng rng(seed);
  CrUser user(task, policy, MemoryBound(theta), 3.0);
  user.begin_episode(rng);
  Evidence ev;
  while (!user.done() && ev.obs.size() < steps) {
    const auto st = user.step(rng);
    ev.obs.push_back(st.obs);
    ev.acts.push_back(st.decision.action);
  }
  return ev;
}

/// Depth-first enumeration of every erase pattern, written independently of
/// the library's breadth-first version.
std::vector<std::map<std::vector<ObservationIndex>, double>> dfs_joint(const EpisodicTask& task, const PolicyBank& bank,
                                                                       const Evidence& ev, double tau) {
  const auto& model = task.model();
  std::vector<std::map<std::vector<ObservationIndex>, double>> joint(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double theta = bank.grid()[i];
    std::function<void(std::vector<ObservationIndex>, std::size_t, double)> rec =
        [&](std::vector<ObservationIndex> mem, std::size_t k, double w) {
          if (k == ev.obs.size()) {
            joint[i][mem] += w / static_cast<double>(bank.size());
            return;
          }
          mem.push_back(ev.obs[k]);
          std::vector<std::size_t> live;
          for (std::size_t e = 0; e < mem.size(); ++e) {
            if (model.decays(mem[e])) live.push_back(e);
          }
          for (std::size_t mask = 0; mask < (std::size_t{1} << live.size()); ++mask) {
            auto next = mem;
            double p = 1.0;
            for (std::size_t b = 0; b < live.size(); ++b) {
              const bool erase = (mask >> b) & 1;
              p *= erase ? theta : 1 - theta;
              if (erase) next[live[b]] = model.decayed(next[live[b]]);
            }
            if (p == 0.0) continue;
            InternalMemory im;
            for (std::size_t e = 0; e < next.size(); ++e) im.entries.push_back({next[e], e ? ev.acts[e - 1] : kNoAction});
            std::vector<double> belief, scratch;
            if (!biased_belief_into(model, im, task.initial_belief(), belief, scratch)) continue;
            const double l = bank.at(i).distribution(belief, k, tau).probs[ev.acts[k]];
            rec(next, k + 1, w * p * l);
          }
        };
    rec({}, 0, 1.0);
  }
  double z = 0;
  for (const auto& m : joint) {
    for (const auto& [h, w] : m) z += w;
  }
  for (auto& m : joint) {
    for (auto& [h, w] : m) w /= z;
  }
  return joint;
}

PolicyBank micro_bank(std::size_t c) {
  TabularConfig tab;
  tab.episodes = 3000;
  return train_micro_bank(micro_cases()[c].task, 3.0, 100 + c, tab);
}

}  // namespace

TEST_CASE("initial particle set") {
  const TmazeTask task(TmazeConfig{});
  const auto bank = shared_bank(task.model().num_states(), {0, 0, 0, 0, 0}, default_theta_grid());
  NpfConfig cfg;
  cfg.inner_particles = 40;
  const auto ps = npf_init(task, bank, cfg, 3.0, 1);
  CHECK(ps.num_outer() == 11);
  for (double w : ps.theta_weights()) CHECK(w == doctest::Approx(1.0 / 11));
  CHECK(posterior_mean(ps) == doctest::Approx(0.5));
  const auto s = summarize(ps);
  CHECK(s.outer_ess == doctest::Approx(11.0));
  CHECK(s.mean_inner_ess == doctest::Approx(40.0));
  CHECK(!ps.check_invariants());
  CHECK(ps.outer(3).memories[7].empty());
}

TEST_CASE("posterior summaries") {
  const std::vector<double> grid = default_theta_grid();
  CHECK(posterior_mean(grid, std::vector<double>(11, 1.0 / 11)) == doctest::Approx(0.5));
  CHECK(posterior_mean(std::vector<double>{0.2, 0.6}, std::vector<double>{0.1, 0.9}) == doctest::Approx(0.56));
  CHECK(posterior_map(std::vector<double>{0.3, 0.7}, std::vector<double>{0.5, 0.5}) == 0.3);
  std::vector<double> point(11, 0.0);
  point[4] = 1.0;
  CHECK(std::abs(posterior_mean(grid, point) - 0.4) < 1e-15);
  CHECK(posterior_map(grid, point) == grid[4]);
}

TEST_CASE("effective sample size") {
  CHECK(ess(std::vector<double>(8, 0.125)) == doctest::Approx(8.0));
  CHECK(ess(std::vector<double>{0, 1, 0}) == 1.0);
}

TEST_CASE("systematic resampling multiplicities") {
  const std::vector<double> w{0.1, 0.25, 0.05, 0.4, 0.2};
  const std::size_t N = 7;
  const int draws = 10000;
  Rng rng(21);
  std::vector<double> sum(w.size(), 0), sq(w.size(), 0);
  for (int d = 0; d < draws; ++d) {
    std::vector<double> count(w.size(), 0);
    for (auto j : systematic_indices(w, N, rng.uniform())) ++count[j];
    for (std::size_t j = 0; j < w.size(); ++j) {
      sum[j] += count[j];
      sq[j] += count[j] * count[j];
      CHECK(std::abs(count[j] - N * w[j]) < 1.0);  // systematic: floor or ceil
    }
  }
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double mean = sum[j] / draws;
    const double sd = std::sqrt(std::max(0.0, sq[j] / draws - mean * mean));
    CHECK(std::abs(mean - N * w[j]) <= 3 * sd / std::sqrt(static_cast<double>(draws)) + 1e-12);
  }
}

TEST_CASE("uninformative evidence leaves the posterior uniform") {
  auto t = empty_tables(2, 1, 3);
  T(t, 0, 0, 0) = 1;
  T(t, 1, 0, 1) = 1;
  O(t, 0, 0) = 1;
  O(t, 1, 1) = 1;
  t.decay_map = {2, 2, 2};
  const MicroTask task(DiscretePomdp(std::move(t)), Belief::uniform(2));
  const auto bank = shared_bank(2, {0.7}, {0.0, 0.5, 1.0});
  NpfConfig cfg;
  cfg.inner_particles = 30;
  auto ps = npf_init(task, bank, cfg, 3.0, 2);
  ActionIndex prev = kNoAction;
  for (std::size_t k = 0; k < 4; ++k) {
    npf_update(ps, 0, prev, 0);
    prev = 0;
    for (double w : ps.theta_weights()) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }
}

TEST_CASE("theta-independent bank leaves outer weights unchanged") {
  const TmazeTask task(TmazeConfig{});
  const auto bank = shared_bank(task.model().num_states(), {0.3, 0.9, 0.1, 0.0, 0.5}, {0.0, 0.5, 1.0});
  const auto ev = simulate(task, bank.at(1), 0.5, 12, 4);
  NpfConfig cfg;
  cfg.inner_particles = 25;
  auto ps = npf_init(task, bank, cfg, 3.0, 3);
  for (std::size_t k = 0; k < ev.obs.size(); ++k) {
    npf_update(ps, ev.obs[k], k ? ev.acts[k - 1] : kNoAction, ev.acts[k]);
    for (double w : ps.theta_weights()) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
}

TEST_CASE("action ordering is validated") {
  const TmazeTask task(TmazeConfig{});
  const auto bank = shared_bank(task.model().num_states(), {0, 0, 0, 0, 0}, {0.0, 1.0});
  auto ps = npf_init(task, bank, NpfConfig{}, 3.0, 1);
  const auto o = task.maze().observation_index(task.maze().render_observation({task.maze().start_cell(), 0}));
  CHECK_THROWS_AS(npf_update(ps, o, kUp, kUp), InvalidInput);
  npf_update(ps, o, kNoAction, kUp);
  CHECK_THROWS_AS(npf_update(ps, o, kNoAction, kUp), InvalidInput);
}

TEST_CASE("a rejected hint zeroes every accepting particle") {
  const TmazeTask task(TmazeConfig{});
  const auto bank = shared_bank(task.model().num_states(), {0, 0, 0, 0, 0}, {0.0, 1.0});
  NpfConfig cfg;
  cfg.inner_particles = 10;
  auto ps = npf_init(task, bank, cfg, 3.0, 1);
  const auto o = task.maze().observation_index(task.maze().render_observation({task.maze().start_cell(), 0}));
  npf_propagate(ps, o, kNoAction);
  const auto l = npf_likelihoods(ps, kDown, ActionHint{kUp}, 1.0);
  for (const auto& row : l) {
    for (double x : row) CHECK(x == 0.0);
  }
  CHECK_THROWS_AS(npf_apply_likelihoods(ps, l), AllWeightsZero);
  const auto accepted = npf_likelihoods(ps, kUp, ActionHint{kUp}, 1.0);
  CHECK(accepted[0][0] == 1.0);
}

TEST_CASE("filter runs are deterministic and serialisable") {
  const auto c = micro_cases()[1];
  const auto bank = micro_bank(1);
  const auto ev = simulate(c.task, bank.at(1), 0.5, 4, 9);
  NpfConfig cfg;
  cfg.inner_particles = 50;
  auto a = npf_init(c.task, bank, cfg, 3.0, 5);
  auto b = npf_init(c.task, bank, cfg, 3.0, 5);
  for (std::size_t k = 0; k < ev.obs.size(); ++k) {
    npf_update(a, ev.obs[k], k ? ev.acts[k - 1] : kNoAction, ev.acts[k]);
    npf_update(b, ev.obs[k], k ? ev.acts[k - 1] : kNoAction, ev.acts[k]);
    CHECK(summarize(a).weights == summarize(b).weights);
    CHECK(a.to_json() == b.to_json());
  }
  const auto back = NestedParticleSet::from_json(a.to_json(), c.task, bank);
  CHECK(back.to_json() == a.to_json());
}

TEST_CASE("exact posterior") {
  const auto c = micro_cases()[0];  // two states, static world
  const auto bank = micro_bank(0);
  const auto& model = c.task.model();

  SUBCASE("one step is one Bayes update") {
    const auto ev = simulate(c.task, bank.at(1), 0.5, 1, 3);
    const auto ex = exact_joint_posterior(c.task, bank, ev.obs, ev.acts, 3.0);
    std::vector<double> expect(bank.size());
    double z = 0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const double th = bank.grid()[i];
      const auto kept = belief_condition(model, c.task.initial_belief(), ev.obs[0]);
      const auto lost = belief_condition(model, c.task.initial_belief(), model.decayed(ev.obs[0]));
      expect[i] = (1 - th) * bank.at(i).distribution(kept.probs, 0, 3.0).probs[ev.acts[0]] +
                  th * bank.at(i).distribution(lost.probs, 0, 3.0).probs[ev.acts[0]];
      z += expect[i];
    }
    for (std::size_t i = 0; i < bank.size(); ++i) CHECK(ex.theta_marginal[i] == doctest::Approx(expect[i] / z));
  }

  SUBCASE("no forgetting gives a point mass on the true history") {
    const PolicyBank zero({0.0}, {bank.at(0)});
    const auto ev = simulate(c.task, bank.at(0), 0.0, 3, 4);
    const auto ex = exact_joint_posterior(c.task, zero, ev.obs, ev.acts, 3.0);
    REQUIRE(ex.joint[0].size() == 1);
    CHECK(ex.joint[0].begin()->first == ev.obs);
    CHECK(ex.joint[0].begin()->second == doctest::Approx(1.0));
  }

  SUBCASE("agrees with an independent enumeration") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto ev = simulate(c.task, bank.at(seed % 3), bank.grid()[seed % 3], 3, seed);
      const auto ex = exact_joint_posterior(c.task, bank, ev.obs, ev.acts, 3.0);
      const auto ref = dfs_joint(c.task, bank, ev, 3.0);
      double total = 0;
      for (std::size_t i = 0; i < bank.size(); ++i) {
        double marginal = 0;
        for (const auto& [h, w] : ref[i]) {
          marginal += w;
          const auto it = ex.joint[i].find(h);
          const double got = it == ex.joint[i].end() ? 0.0 : it->second;
          CHECK(got == doctest::Approx(w).epsilon(1e-10));
        }
        for (const auto& [h, w] : ex.joint[i]) total += w;
        CHECK(ex.theta_marginal[i] == doctest::Approx(marginal).epsilon(1e-10));
      }
      CHECK(total == doctest::Approx(1.0));
    }
  }

  SUBCASE("budget") {
    const auto ev = simulate(c.task, bank.at(1), 0.5, 4, 3);
    CHECK_THROWS_AS(exact_joint_posterior(c.task, bank, ev.obs, ev.acts, 3.0, 4), BudgetExceeded);
  }
}

TEST_CASE("filter error shrinks with more particles") {
  OracleConfig cfg;
  cfg.seeds = 6;
  cfg.inner_particles = 2000;
  cfg.particle_sweep = {20, 2000};
  cfg.tabular.episodes = 3000;
  const auto rep = run_oracle_check(cfg, 3);
  std::map<std::pair<std::string, std::string>, std::map<std::size_t, double>> tv;
  for (const auto& r : rep.cases) tv[{r.name, r.mode}][r.inner_particles] = r.mean_tv;
  CHECK(tv.size() == 6);  // three cases, both modes
  for (const auto& [key, byN] : tv) {
    CHECK(byN.at(2000) < byN.at(20));
    CHECK(byN.at(2000) < 0.05);
  }
}
