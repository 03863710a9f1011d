#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogbound/agent.hpp"
#include "cogbound/assist_action.hpp"
#include "cogbound/npf.hpp"
#include "cogbound/trainer.hpp"

namespace cogbound {

struct AssistCosts {
  double action_hint = 0.05;
  double memory_hint = 0.02;

  double of(const AssistAction& a) const;
};

struct AssistConfig {
  double entropy_threshold = 0.35;  // nats
  AssistCosts costs;
  /// Episodes per simulated user; the AI's particle set persists across them.
  std::size_t episodes_per_session = 4;
  /// Sessions collected per policy update.
  std::size_t sessions_per_epoch = 16;
  std::size_t epochs = 60;
  NpfConfig npf{64, true, 0.5};
  PpoConfig ppo = default_ppo();

  static PpoConfig default_ppo();
  nlohmann::json to_json() const;
  /// Validates H ≤ ln|A| for the given action count.
  static AssistConfig from_json(const nlohmann::json& j);
  void validate(std::size_t num_actions) const;
  std::string digest() const;
};

/// The user's action under assistance: an action hint wins when the user's
/// own policy entropy reaches H; otherwise the user samples its own policy.
ActionIndex assisted_user_action(const CrPolicy& policy, const Belief& belief, std::size_t step, double tau,
                                 const AssistAction& assist, double entropy_threshold, Rng& rng);

double ai_reward(double task_reward, const AssistAction& assist, const AssistCosts& costs);

/// True iff the observation shows a target object.
bool critical_observation(const EpisodicTask& task, ObservationIndex o);

/// Greedy policy of the fully observed MDP by value iteration (ties toward
/// the lower action index). Terminal states have value zero.
std::vector<ActionIndex> mdp_policy(const EpisodicTask& task, double gamma = 0.95, double tolerance = 1e-12);

/// A remembered critical observation: memory index and its true value.
struct CriticalRecord {
  std::size_t index = 0;
  ObservationIndex obs = 0;
};

/// Content for a chosen assistance type. A memory hint with no recorded
/// critical observation falls back to DoNothing.
AssistAction select_assist_content(AssistType type, StateIndex true_state,
                                   const std::vector<CriticalRecord>& critical_set,
                                   const std::vector<ActionIndex>& mdp_actions);

/// Fixed-length summary of the AI's particle belief, computed after the
/// current observation has been propagated through the inner memories.
///   [0, G)   outer weight per grid value
///   G + 0    expected intactness of the latest object sighting
///   G + 1    step fraction t / max_steps
///   G + 2    entropy of the predicted user action distribution
///   G + 3    probability that the user would accept an action hint
///   G + 4    predicted probability of the MDP-optimal action
///   G + 5    object seen this episode (0 / 1)
inline constexpr std::size_t kAiFeatureExtras = 6;
inline constexpr int kAiFeatureVersion = 1;

struct AiBeliefFeatures {
  std::vector<double> values;
};

AiBeliefFeatures ai_belief_features(const NestedParticleSet& ps, const std::vector<CriticalRecord>& critical_set,
                                    ActionIndex optimal_action, std::size_t step, double entropy_threshold);

/// Assisted NPF step, in two phases so the AI can decide in between:
/// propagate the decay with o_t, then (after the AI acts) refresh and weigh
/// the observed user action under the assisted policy.
void ai_belief_propagate(NestedParticleSet& ps, ObservationIndex obs, ActionIndex prev_action);
void ai_belief_reweight(NestedParticleSet& ps, const AssistAction& assist, ActionIndex user_action,
                        double entropy_threshold);
/// Both phases at once.
void ai_belief_step(NestedParticleSet& ps, ObservationIndex obs, ActionIndex prev_action,
                    const AssistAction& assist, ActionIndex user_action, double entropy_threshold);

/// Maps AI belief features to a distribution over assistance types.
class AssistPolicy {
 public:
  /// Always returns `type`.
  static AssistPolicy constant(AssistType type);
  AssistPolicy(Mlp net, std::string digest);

  bool is_constant() const { return !net_.has_value(); }
  std::array<double, kNumAssistTypes> distribution(const AiBeliefFeatures& f) const;
  AssistType choose(const AiBeliefFeatures& f, Rng& rng, bool greedy) const;
  const std::string& config_digest() const { return digest_; }

  nlohmann::json to_json() const;
  static AssistPolicy from_json(const nlohmann::json& j);

 private:
  AssistPolicy() = default;
  std::optional<Mlp> net_;
  AssistType fixed_ = AssistType::DoNothing;
  std::string digest_;
};

struct AssistCurvePoint {
  std::size_t epoch = 0;
  double mean_reward = 0.0;  // per episode
  double success_rate = 0.0;
  double intervention_rate = 0.0;  // per step
};

struct AssistTrainingResult {
  AssistPolicy policy;
  std::vector<AssistCurvePoint> curve;
};

AssistTrainingResult train_assist_policy(const EpisodicTask& task, const PolicyBank& bank, const AssistConfig& cfg,
                                         double tau, std::uint64_t seed);

struct AssistEvent {
  std::size_t episode = 0;
  std::size_t step = 0;
  AssistType type = AssistType::DoNothing;
  bool accepted = false;
};

struct AssistReport {
  double theta = 0.0;
  std::size_t episodes = 0;
  std::size_t steps = 0;
  std::array<std::size_t, kNumAssistTypes> counts{};
  std::size_t accepted_action_hints = 0;
  double mean_reward = 0.0;  // per episode, after costs
  double total_cost = 0.0;
  double success_rate = 0.0;
  std::vector<AssistEvent> events;

  double intervention_rate() const;
  double fraction(AssistType t) const;
};

/// Frozen-policy rollouts, one report per θ. `greedy` takes the most likely
/// assistance type instead of sampling.
std::vector<AssistReport> evaluate_assistance(const EpisodicTask& task, const PolicyBank& bank,
                                              const AssistPolicy& policy, const AssistConfig& cfg,
                                              const std::vector<double>& thetas, std::size_t episodes, double tau,
                                              std::uint64_t seed, bool greedy = true);

}  // namespace cogbound
