#pragma once

#include <string>
#include <vector>

#include "cogbound/agent.hpp"
#include "cogbound/pomdp.hpp"
#include "cogbound/task.hpp"
#include "cogbound/trainer.hpp"

namespace cogbound {

/// Small POMDPs (|S| ≤ 4, |Ω| ≤ 4, horizon 4) whose posterior over (θ, h̃)
/// can be enumerated exactly.
struct MicroCase {
  std::string name;
  MicroTask task;
};

/// noisy-cue: static two-state world, noisy cue, guess or look.
/// switching: two states that swap with probability 0.2 per step.
/// cue-then-act: a cue seen in one cell must be used in the other.
std::vector<MicroCase> micro_cases();

/// Grid {0, 0.5, 1} of tabular policies for one micro case.
PolicyBank train_micro_bank(const MicroTask& task, double tau, std::uint64_t seed,
                            const TabularConfig& cfg = {});

}  // namespace cogbound
