#include "cogbound/micro.hpp"

namespace cogbound {

namespace {

constexpr std::size_t kMicroHorizon = 4;

DiscretePomdp::Tables blank_tables(std::size_t nS, std::size_t nA, std::size_t nO) {
  DiscretePomdp::Tables t;
  t.num_states = nS;
  t.num_actions = nA;
  t.num_observations = nO;
  t.transition.assign(nS * nA * nS, 0.0);
  t.observation.assign(nS * nO, 0.0);
  t.reward.assign(nS * nA, 0.0);
  t.max_steps = kMicroHorizon;
  return t;
}

void set_t(DiscretePomdp::Tables& t, std::size_t s, std::size_t a, std::size_t s2, double p) {
  t.transition[(s * t.num_actions + a) * t.num_states + s2] = p;
}
void set_o(DiscretePomdp::Tables& t, std::size_t s, std::size_t o, double p) {
  t.observation[s * t.num_observations + o] = p;
}
void set_r(DiscretePomdp::Tables& t, std::size_t s, std::size_t a, double r) { t.reward[s * t.num_actions + a] = r; }

MicroCase noisy_cue() {
  // states L, R; actions guess-L, guess-R, look; observations cue-L, cue-R, faded
  auto t = blank_tables(2, 3, 3);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t a = 0; a < 3; ++a) set_t(t, s, a, s, 1.0);
    set_o(t, s, s, 0.85);
    set_o(t, s, 1 - s, 0.15);
    set_r(t, s, s, 1.0);
    set_r(t, s, 1 - s, -1.0);
  }
  t.decay_map = {2, 2, 2};
  t.state_names = {"L", "R"};
  t.action_names = {"guess-L", "guess-R", "look"};
  t.observation_names = {"cue-L", "cue-R", "faded"};
  return {"noisy-cue", MicroTask(DiscretePomdp(std::move(t)), Belief::uniform(2))};
}

MicroCase switching() {
  // states A, B swap with probability 0.2; actions pick-A, pick-B
  auto t = blank_tables(2, 2, 3);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t a = 0; a < 2; ++a) {
      set_t(t, s, a, s, 0.8);
      set_t(t, s, a, 1 - s, 0.2);
    }
    set_o(t, s, s, 0.9);
    set_o(t, s, 1 - s, 0.1);
    set_r(t, s, s, 1.0);
  }
  t.decay_map = {2, 2, 2};
  t.state_names = {"A", "B"};
  t.action_names = {"pick-A", "pick-B"};
  t.observation_names = {"see-A", "see-B", "blank"};
  return {"switching", MicroTask(DiscretePomdp(std::move(t)), Belief::uniform(2))};
}

MicroCase cue_then_act() {
  // state = cell * 2 + goal; cell 0 shows the cue, cell 1 is where picks pay
  // actions move, pick-0, pick-1; observations cue-0, cue-1, blank, faded
  auto t = blank_tables(4, 3, 4);
  for (std::size_t cell = 0; cell < 2; ++cell) {
    for (std::size_t g = 0; g < 2; ++g) {
      const std::size_t s = cell * 2 + g;
      set_t(t, s, 0, (1 - cell) * 2 + g, 1.0);
      set_t(t, s, 1, s, 1.0);
      set_t(t, s, 2, s, 1.0);
      set_o(t, s, cell == 0 ? g : 2, 1.0);
      for (std::size_t pick = 0; pick < 2; ++pick) {
        set_r(t, s, 1 + pick, cell == 1 ? (pick == g ? 1.0 : -1.0) : -0.1);
      }
    }
  }
  t.decay_map = {3, 3, 2, 3};
  t.state_names = {"cue/0", "cue/1", "act/0", "act/1"};
  t.action_names = {"move", "pick-0", "pick-1"};
  t.observation_names = {"cue-0", "cue-1", "blank", "faded"};
  Belief initial{{0.5, 0.5, 0.0, 0.0}};
  return {"cue-then-act", MicroTask(DiscretePomdp(std::move(t)), std::move(initial))};
}

}  // namespace

std::vector<MicroCase> micro_cases() { return {noisy_cue(), switching(), cue_then_act()}; }

PolicyBank train_micro_bank(const MicroTask& task, double tau, std::uint64_t seed, const TabularConfig& cfg) {
  std::vector<double> grid{0.0, 0.5, 1.0};
  std::vector<CrPolicy> policies;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    policies.push_back(train_tabular_policy(task, MemoryBound(grid[i]), tau, cfg, derive_seed(seed, {i})));
  }
  return PolicyBank(std::move(grid), std::move(policies));
}

}  // namespace cogbound
