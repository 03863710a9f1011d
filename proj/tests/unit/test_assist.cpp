#include <doctest.h>

#include <deque>
#include <map>

#include "cogbound/assist.hpp"
#include "cogbound/error.hpp"
#include "helpers.hpp"

using namespace cogbound;
using namespace testing;

namespace {

/// Cell distances to `goal` by BFS over the move graph (terminals absorb).
std::map<Cell, std::size_t> distances_to(const Tmaze& maze, Cell goal) {
  std::map<Cell, std::size_t> d;
  // the move graph is symmetric apart from terminals, so search outward from the goal
  d[goal] = 0;
  std::deque<Cell> q{goal};
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop_front();
    for (const Cell& p : maze.positions()) {
      if (d.count(p) || maze.terminal(p)) continue;
      for (std::size_t a = 0; a < kNumMoves; ++a) {
        if (maze.step(p, a) == c) {
          d[p] = d[c] + 1;
          q.push_back(p);
          break;
        }
      }
    }
  }
  return d;
}

}  // namespace

TEST_CASE("assistant reward") {
  const AssistCosts costs;
  CHECK(ai_reward(1.0, DoNothing{}, costs) == 1.0);
  CHECK(ai_reward(0.0, ActionHint{kUp}, costs) == doctest::Approx(-0.05));
  CHECK(ai_reward(0.892, MemoryHint{1, 0}, costs) == doctest::Approx(0.872));
}

TEST_CASE("action hints follow the shortest path") {
  const TmazeTask task(TmazeConfig{});
  const auto& maze = task.maze();
  const auto mdp = mdp_policy(task);
  for (std::size_t s = 0; s < maze.model().num_states(); ++s) {
    const auto st = maze.state_of(s);
    if (maze.terminal(st.position)) continue;
    const auto d = distances_to(maze, maze.goal_cell(st.target));
    const auto content = select_assist_content(AssistType::ActionHint, s, {}, mdp);
    const auto* hint = std::get_if<ActionHint>(&content);
    REQUIRE(hint);
    CHECK(d.at(maze.step(st.position, hint->action)) + 1 == d.at(st.position));
  }
  // junction with the right-arm target
  const auto junction = maze.state_index({maze.junction(), 0});
  CHECK(std::get<ActionHint>(select_assist_content(AssistType::ActionHint, junction, {}, mdp)).action == kRight);
}

TEST_CASE("memory hint content") {
  const TmazeTask task(TmazeConfig{});
  const auto mdp = mdp_policy(task);
  const std::vector<CriticalRecord> one{{2, 17}};
  CHECK(select_assist_content(AssistType::MemoryHint, 0, one, mdp) == AssistAction{MemoryHint{2, 17}});
  const std::vector<CriticalRecord> two{{1, 5}, {3, 9}};
  CHECK(select_assist_content(AssistType::MemoryHint, 0, two, mdp) == AssistAction{MemoryHint{3, 9}});
  const auto fallback = select_assist_content(AssistType::MemoryHint, 0, {}, mdp);
  CHECK(type_of(fallback) == AssistType::DoNothing);
  CHECK(ai_reward(0.5, fallback, AssistCosts{}) == 0.5);
  CHECK(type_of(select_assist_content(AssistType::DoNothing, 0, one, mdp)) == AssistType::DoNothing);
}

TEST_CASE("assisted filter reduces to the plain filter without assistance") {
  const TmazeTask task(TmazeConfig{});
  const auto grid = default_theta_grid();
  std::vector<CrPolicy> policies;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    policies.push_back(constant_policy(task.model().num_states(), {0.1 * i, 0.2, 0.3, 0.05 * i, 0.0}, grid[i]));
  }
  const PolicyBank bank(grid, policies);
  NpfConfig cfg;
  cfg.inner_particles = 30;
  auto plain = npf_init(task, bank, cfg, 3.0, 17);
  auto assisted = npf_init(task, bank, cfg, 3.0, 17);
  Rng rng(4);
  CrUser user(task, bank.at(6), MemoryBound(0.6), 3.0);
  user.begin_episode(rng);
  while (!user.done()) {
    const auto prev = user.previous_action();
    const auto st = user.step(rng);
    npf_update(plain, st.obs, prev, st.decision.action);
    ai_belief_step(assisted, st.obs, prev, DoNothing{}, st.decision.action, 1.0);
    CHECK(plain.theta_weights() == assisted.theta_weights());
    CHECK(plain.to_json() == assisted.to_json());
  }
}

TEST_CASE("memory hints refresh every particle") {
  const TmazeTask task(TmazeConfig{});
  const auto& maze = task.maze();
  const auto bank = shared_bank(maze.model().num_states(), {0, 0, 0, 0, 0}, {0.5, 1.0});
  NpfConfig cfg;
  cfg.inner_particles = 40;
  auto ps = npf_init(task, bank, cfg, 3.0, 2);
  const auto obs_at = [&](Cell c) { return maze.observation_index(maze.render_observation({c, 1})); };
  const auto sighting = obs_at({1, 4});
  ai_belief_step(ps, obs_at({1, 3}), kNoAction, DoNothing{}, kDown, 1.0);
  ai_belief_step(ps, sighting, kDown, DoNothing{}, kUp, 1.0);
  ai_belief_propagate(ps, obs_at({1, 3}), kUp);
  ai_belief_reweight(ps, MemoryHint{1, sighting}, kUp, 1.0);
  for (std::size_t i = 0; i < ps.num_outer(); ++i) {
    for (const auto& mem : ps.outer(i).memories) CHECK(mem.entries[1].obs == sighting);
  }
}

TEST_CASE("assistance policies") {
  const auto nothing = AssistPolicy::constant(AssistType::DoNothing);
  AiBeliefFeatures f{std::vector<double>(11 + kAiFeatureExtras, 0.1)};
  Rng rng(1);
  CHECK(nothing.choose(f, rng, true) == AssistType::DoNothing);
  CHECK(nothing.distribution(f)[0] == 1.0);
  CHECK(AssistPolicy::from_json(nothing.to_json()).to_json() == nothing.to_json());

  Rng init(3);
  const AssistPolicy net(Mlp({11 + kAiFeatureExtras, 8, kNumAssistTypes}, init), "abc");
  const auto back = AssistPolicy::from_json(net.to_json());
  CHECK(back.distribution(f) == net.distribution(f));
  CHECK(back.config_digest() == "abc");
  CHECK(is_distribution(net.distribution(f)));
}

TEST_CASE("assistance configuration") {
  AssistConfig c;
  c.epochs = 7;
  c.costs.memory_hint = 0.03;
  const auto back = AssistConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.digest() == c.digest());
  c.epochs = 0;
  CHECK_THROWS_AS(AssistConfig::from_json(c.to_json()), ConfigError);
}

TEST_CASE("evaluation report shape and control arm") {
  const TmazeTask task(TmazeConfig{});
  const auto bank = shared_bank(task.model().num_states(), {0, 0, 0, 0, 0}, {0.0, 0.5, 1.0});
  AssistConfig cfg;
  cfg.npf.inner_particles = 8;
  const std::vector<double> thetas{0.0, 1.0};
  const auto rows = evaluate_assistance(task, bank, AssistPolicy::constant(AssistType::DoNothing), cfg, thetas, 2,
                                        3.0, 1, true);
  CHECK(rows.size() == thetas.size());
  for (const auto& r : rows) {
    CHECK(r.episodes == 2);
    CHECK(r.intervention_rate() == 0.0);
    CHECK(r.total_cost == 0.0);
  }
  const auto hints = evaluate_assistance(task, bank, AssistPolicy::constant(AssistType::ActionHint), cfg, thetas, 2,
                                         3.0, 1, true);
  for (const auto& r : hints) {
    CHECK(r.intervention_rate() == 1.0);
    // a uniform user always has entropy ln 5 > H, so it follows the hints to the goal
    CHECK(r.success_rate == 1.0);
  }
}
