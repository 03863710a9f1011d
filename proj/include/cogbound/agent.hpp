#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogbound/assist_action.hpp"
#include "cogbound/memory.hpp"
#include "cogbound/nn.hpp"
#include "cogbound/pomdp.hpp"
#include "cogbound/task.hpp"

namespace cogbound {

struct PolicyMeta {
  double theta = 0.0;
  double tau = 3.0;  // temperature used while training
  std::uint64_t seed = 0;
  std::string trainer_digest;
  std::size_t step_horizon = 1;  // normaliser of the step-count feature
};

/// Q table keyed by a discretised belief: (argmax state, bucket of its mass).
class TabularQ {
 public:
  TabularQ() = default;
  TabularQ(std::size_t num_states, std::size_t num_actions, std::size_t bins);

  std::size_t num_keys() const { return num_states_ * bins_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t key(std::span<const double> belief) const;
  std::span<double> row(std::size_t key) { return {q_.data() + key * num_actions_, num_actions_}; }
  std::span<const double> row(std::size_t key) const {
    return {q_.data() + key * num_actions_, num_actions_};
  }
  const std::vector<double>& values() const { return q_; }

  nlohmann::json to_json() const;
  static TabularQ from_json(const nlohmann::json& j);

 private:
  std::size_t num_states_ = 0, num_actions_ = 0, bins_ = 1;
  std::vector<double> q_;
};

/// Network input: the belief followed by the normalised step count.
void policy_features(std::span<const double> belief, std::size_t step, std::size_t horizon,
                     std::vector<double>& out);

/// Q_*(b̃, ·; θ): maps a biased belief (plus step count) to action scores.
class CrPolicy {
 public:
  CrPolicy(Mlp net, PolicyMeta meta);
  CrPolicy(TabularQ table, PolicyMeta meta);

  const PolicyMeta& meta() const { return meta_; }
  std::size_t num_actions() const;
  void q_values(std::span<const double> belief, std::size_t step, std::vector<double>& out) const;
  ActionDistribution distribution(std::span<const double> belief, std::size_t step, double tau) const;
  ActionIndex greedy(std::span<const double> belief, std::size_t step) const;

  const std::variant<Mlp, TabularQ>& evaluator() const { return eval_; }
  /// Content digest over evaluator parameters and metadata.
  std::string digest() const;

  nlohmann::json to_json() const;
  static CrPolicy from_json(const nlohmann::json& j);

 private:
  PolicyMeta meta_;
  std::variant<Mlp, TabularQ> eval_;
};

struct Decision {
  ActionIndex action = 0;
  ActionDistribution dist;
  double entropy = 0.0;
  bool hint_accepted = false;
};

/// Action selection: softmax(τ q(b̃)) and a draw from it.
Decision act(const CrPolicy& policy, const Belief& belief, std::size_t step, double tau, Rng& rng);

/// `act` followed by the hint rule: an action hint replaces the drawn action
/// when the policy entropy reaches `entropy_threshold`. With `greedy` the
/// user's own choice is argmax q instead of a draw.
Decision decide(const CrPolicy& policy, const Belief& belief, std::size_t step, double tau,
                const AssistAction& assist, double entropy_threshold, Rng& rng, bool greedy = false);

/// θ-indexed collection of pretrained policies on an ascending grid.
class PolicyBank {
 public:
  PolicyBank(std::vector<double> grid, std::vector<CrPolicy> policies);

  const std::vector<double>& grid() const { return grid_; }
  std::size_t size() const { return grid_.size(); }
  const CrPolicy& at(std::size_t i) const { return policies_.at(i); }
  /// Throws MissingPolicy when θ is not a grid value.
  const CrPolicy& for_theta(double theta) const;
  std::size_t index_of(double theta) const;
  std::optional<std::size_t> find(double theta) const;

 private:
  std::vector<double> grid_;
  std::vector<CrPolicy> policies_;
};

std::vector<double> default_theta_grid();
std::string theta_label(double theta);

/// Writes `bank.json` (manifest) and one `policy_theta_<θ>.json` per grid value.
void save_bank(const PolicyBank& bank, const std::filesystem::path& dir);
/// Verifies schema version, presence of every grid policy and digests.
PolicyBank load_bank(const std::filesystem::path& dir);

struct StepRecord {
  std::size_t t = 0;
  StateIndex state = 0;
  ObservationIndex obs = 0;
  std::string memory_digest;
  StateIndex belief_argmax = 0;
  double belief_max = 0.0;
  ActionIndex action = 0;
  double entropy = 0.0;
  double reward = 0.0;
  AssistType assist = AssistType::DoNothing;
  bool hint_accepted = false;
};

struct Trajectory {
  double theta = 0.0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  bool success = false;
  double total_return = 0.0;
  std::vector<StepRecord> steps;

  nlohmann::json to_json() const;
};

std::string memory_digest(const InternalMemory& mem);

/// Outcome of one user step.
struct UserStep {
  StateIndex state = 0;
  ObservationIndex obs = 0;
  Decision decision;
  StateIndex next_state = 0;
  double reward = 0.0;
  bool done = false;
};

/// A CR user acting in an episodic task: observe, update memory (with an
/// optional memory refresh), form the biased belief and act (with an optional
/// action hint accepted when the policy entropy reaches the threshold).
class CrUser {
 public:
  CrUser(const EpisodicTask& task, const CrPolicy& policy, MemoryBound bound, double tau);

  void begin_episode(Rng& rng);
  /// Starts an episode from a given state (tests and replays).
  void begin_episode_at(StateIndex s);
  UserStep step(Rng& rng, const AssistAction& assist = DoNothing{}, double entropy_threshold = 0.0,
                bool greedy = false);
  /// First half of a step: receive o_t and let the memory decay.
  ObservationIndex observe(Rng& rng);
  /// Second half: optional refresh, biased belief, action, transition.
  UserStep respond(Rng& rng, const AssistAction& assist = DoNothing{}, double entropy_threshold = 0.0,
                   bool greedy = false);

  void set_tau(double tau) { tau_ = tau; }
  StateIndex state() const { return state_; }
  std::size_t t() const { return t_; }
  bool done() const { return done_; }
  const InternalMemory& memory() const { return memory_; }
  const Belief& belief() const { return belief_; }
  ActionIndex previous_action() const { return prev_action_; }
  const MemoryBound& bound() const { return bound_; }

 private:
  const EpisodicTask* task_;
  const CrPolicy* policy_;
  MemoryBound bound_;
  double tau_;
  Belief initial_;
  StateIndex state_ = 0;
  std::size_t t_ = 0;
  bool done_ = true;
  bool observed_ = false;
  ObservationIndex obs_ = 0;
  ActionIndex prev_action_ = kNoAction;
  InternalMemory memory_;
  Belief belief_;
  std::vector<double> scratch_;
};

/// One full episode of a CR agent; `greedy` replaces sampling by argmax q.
Trajectory run_cr_episode(const EpisodicTask& task, const CrPolicy& policy, const MemoryBound& bound,
                          double tau, Rng& rng, bool greedy = false);

}  // namespace cogbound
