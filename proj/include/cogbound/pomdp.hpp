#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogbound/rng.hpp"

namespace cogbound {

using StateIndex = std::size_t;
using ActionIndex = std::size_t;
using ObservationIndex = std::size_t;

inline constexpr double kProbTolerance = 1e-9;

/// Distribution over states.
struct Belief {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  static Belief uniform(std::size_t n);
  static Belief delta(std::size_t n, std::size_t at);
};

/// Distribution over actions.
struct ActionDistribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

/// True iff entries are in [0, 1] and sum to one within kProbTolerance.
bool is_distribution(std::span<const double> probs);

struct Successor {
  StateIndex state;
  double prob;
};

/// Tabular POMDP (S, A, Omega, T, R, O, gamma) with dense tables.
///
/// Observations condition on the state only, O(o|s). The optional decay map
/// names, for each observation, the value it degrades to when forgotten
/// (identity for observations that never decay). Observations that no state
/// can emit ("memory-only" symbols, e.g. an erased sighting) are given an
/// evidence likelihood equal to the total emission mass of every observation
/// that decays onto them; for emittable observations the evidence likelihood
/// is O itself.
class DiscretePomdp {
 public:
  struct Tables {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    std::size_t num_observations = 0;
    std::vector<double> transition;   // [s][a][s']
    std::vector<double> observation;  // [s][o]
    std::vector<double> reward;       // [s][a]
    std::vector<ObservationIndex> decay_map;  // empty = identity
    double discount = 1.0;
    std::size_t max_steps = 1;
    std::vector<std::string> state_names;
    std::vector<std::string> action_names;
    std::vector<std::string> observation_names;
  };

  /// Validates every table invariant; throws InvalidModel.
  explicit DiscretePomdp(Tables tables);

  std::size_t num_states() const { return t_.num_states; }
  std::size_t num_actions() const { return t_.num_actions; }
  std::size_t num_observations() const { return t_.num_observations; }
  double discount() const { return t_.discount; }
  std::size_t max_steps() const { return t_.max_steps; }
  const Tables& tables() const { return t_; }

  double transition(StateIndex s, ActionIndex a, StateIndex next) const {
    return t_.transition[(s * t_.num_actions + a) * t_.num_states + next];
  }
  std::span<const double> transition_row(StateIndex s, ActionIndex a) const {
    return {t_.transition.data() + (s * t_.num_actions + a) * t_.num_states,
            t_.num_states};
  }
  std::span<const Successor> successors(StateIndex s, ActionIndex a) const {
    const auto& r = succ_range_[s * t_.num_actions + a];
    return {successors_.data() + r.first, r.second};
  }
  double observation(StateIndex s, ObservationIndex o) const {
    return t_.observation[s * t_.num_observations + o];
  }
  std::span<const double> observation_row(StateIndex s) const {
    return {t_.observation.data() + s * t_.num_observations, t_.num_observations};
  }
  double reward(StateIndex s, ActionIndex a) const {
    return t_.reward[s * t_.num_actions + a];
  }

  /// Likelihood of a remembered observation under each state, indexed [s].
  std::span<const double> evidence(ObservationIndex o) const {
    return {evidence_.data() + o * t_.num_states, t_.num_states};
  }
  bool emittable(ObservationIndex o) const { return emittable_[o]; }
  ObservationIndex decayed(ObservationIndex o) const {
    return t_.decay_map.empty() ? o : t_.decay_map[o];
  }
  bool decays(ObservationIndex o) const { return decayed(o) != o; }

  nlohmann::json to_json() const;
  static DiscretePomdp from_json(const nlohmann::json& j);

 private:
  Tables t_;
  std::vector<Successor> successors_;
  std::vector<std::pair<std::size_t, std::size_t>> succ_range_;
  std::vector<double> evidence_;  // [o][s]
  std::vector<bool> emittable_;
};

DiscretePomdp load_pomdp(const std::string& path);
void save_pomdp(const DiscretePomdp& model, const std::string& path);

/// One step of exact Bayesian filtering:
/// b'(s') ∝ O(o|s') Σ_s T(s'|s,a) b(s). Throws InconsistentEvidence when the
/// observation has zero probability under the prediction.
Belief belief_update(const DiscretePomdp& model, const Belief& prior,
                     ActionIndex action, ObservationIndex observation);

/// Conditions a belief on an observation without a transition (the t = 0
/// step of a filter). Same failure mode as belief_update.
Belief belief_condition(const DiscretePomdp& model, const Belief& prior,
                        ObservationIndex observation);

/// π(a) ∝ exp(tau * q(a)), computed with max-subtraction.
ActionDistribution softmax_policy(std::span<const double> q_values, double tau);

/// Shannon entropy in nats with 0 ln 0 = 0.
double policy_entropy(const ActionDistribution& dist);

StateIndex sample_transition(const DiscretePomdp& model, StateIndex s,
                             ActionIndex a, Rng& rng);
ObservationIndex sample_observation(const DiscretePomdp& model, StateIndex s,
                                    Rng& rng);
ActionIndex sample_action(const ActionDistribution& dist, Rng& rng);

}  // namespace cogbound
