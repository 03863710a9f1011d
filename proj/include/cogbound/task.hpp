#pragma once

#include <memory>

#include "cogbound/pomdp.hpp"
#include "cogbound/rng.hpp"
#include "cogbound/tmaze.hpp"

namespace cogbound {

/// An episodic decision problem over a DiscretePomdp: initial state
/// distribution, terminal set and (possibly time-dependent) task reward.
class EpisodicTask {
 public:
  virtual ~EpisodicTask() = default;

  virtual const DiscretePomdp& model() const = 0;
  /// Agent's prior over the initial state.
  virtual Belief initial_belief() const = 0;
  virtual StateIndex sample_initial_state(Rng& rng) const = 0;
  virtual bool terminal(StateIndex s) const = 0;
  /// Reward for taking `a` in `s`, landing in `next`, as the t-th action
  /// (1-based) of the episode.
  virtual double reward(StateIndex s, ActionIndex a, StateIndex next, std::size_t t) const = 0;
  virtual std::size_t max_steps() const { return model().max_steps(); }
  /// Observations worth reminding the user of (object sightings).
  virtual bool critical(ObservationIndex o) const { return model().decays(o); }
  /// States from which a critical observation is emitted.
  virtual bool critical_state(StateIndex s) const;
};

class TmazeTask final : public EpisodicTask {
 public:
  explicit TmazeTask(TmazeConfig config) : maze_(std::make_shared<Tmaze>(std::move(config))) {}

  const Tmaze& maze() const { return *maze_; }
  const DiscretePomdp& model() const override { return maze_->model(); }
  Belief initial_belief() const override { return maze_->initial_belief(); }
  StateIndex sample_initial_state(Rng& rng) const override;
  bool terminal(StateIndex s) const override;
  double reward(StateIndex s, ActionIndex a, StateIndex next, std::size_t t) const override;
  bool critical(ObservationIndex o) const override { return maze_->shows_object(o); }
  bool critical_state(StateIndex s) const override;

 private:
  std::shared_ptr<const Tmaze> maze_;
};

/// Generic finite-horizon task over any DiscretePomdp: reward is R(s, a), no
/// terminal states, episodes last model().max_steps() actions.
class MicroTask final : public EpisodicTask {
 public:
  MicroTask(DiscretePomdp model, Belief initial);

  const DiscretePomdp& model() const override { return model_; }
  Belief initial_belief() const override { return initial_; }
  StateIndex sample_initial_state(Rng& rng) const override { return rng.categorical(initial_.probs); }
  bool terminal(StateIndex) const override { return false; }
  double reward(StateIndex s, ActionIndex a, StateIndex, std::size_t) const override {
    return model_.reward(s, a);
  }

 private:
  DiscretePomdp model_;
  Belief initial_;
};

}  // namespace cogbound
