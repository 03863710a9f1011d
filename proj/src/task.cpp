#include "cogbound/task.hpp"

#include "cogbound/error.hpp"

namespace cogbound {

bool EpisodicTask::critical_state(StateIndex s) const {
  const auto row = model().observation_row(s);
  for (ObservationIndex o = 0; o < row.size(); ++o) {
    if (row[o] > 0.0 && critical(o)) return true;
  }
  return false;
}

StateIndex TmazeTask::sample_initial_state(Rng& rng) const {
  const auto target = rng.below(maze_->num_objects());
  return maze_->state_index({maze_->start_cell(), target});
}

bool TmazeTask::terminal(StateIndex s) const {
  return maze_->terminal(maze_->state_of(s).position);
}

double TmazeTask::reward(StateIndex s, ActionIndex a, StateIndex next, std::size_t t) const {
  return reward_fn(*maze_, maze_->state_of(s), a, maze_->state_of(next), t);
}

bool TmazeTask::critical_state(StateIndex s) const {
  return maze_->object_visible_from(maze_->state_of(s).position);
}

MicroTask::MicroTask(DiscretePomdp model, Belief initial)
    : model_(std::move(model)), initial_(std::move(initial)) {
  if (initial_.size() != model_.num_states() || !is_distribution(initial_.probs)) {
    throw InvalidInput("initial belief must be a distribution over the model's states");
  }
}

}  // namespace cogbound
