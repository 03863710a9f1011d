#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogbound/agent.hpp"
#include "cogbound/nn.hpp"
#include "cogbound/rng.hpp"

namespace cogbound {

struct PpoConfig {
  std::size_t iterations = 250;
  std::size_t episodes_per_iteration = 32;
  std::size_t epochs = 4;
  std::size_t minibatch = 256;
  std::size_t hidden = 32;
  double learning_rate = 3e-3;
  double value_learning_rate = 3e-3;
  double clip = 0.2;
  double entropy_coef = 0.01;
  double gamma = 1.0;
  double gae_lambda = 0.95;
  std::size_t eval_every = 10;
  std::size_t eval_episodes = 200;
  /// Evaluations in a row with zero mean return before TrainingDiverged.
  std::size_t patience = 8;
  /// Learning rates decay linearly to zero over the run.
  bool anneal = true;
  /// Independent runs from derived seeds; the best evaluated snapshot wins.
  std::size_t restarts = 4;

  nlohmann::json to_json() const;
  static PpoConfig from_json(const nlohmann::json& j);
  std::string digest() const;
};

struct Transition {
  std::vector<double> features;
  std::size_t action = 0;
  double logp = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool last = false;  // final transition of its episode
  double advantage = 0.0;
  double ret = 0.0;
};

/// Actor-critic pair optimised with the clipped surrogate objective. The
/// actor's outputs are scaled by `logit_scale` before the softmax, so the
/// actor of a CR policy directly represents q with π ∝ exp(τ q).
class PpoLearner {
 public:
  PpoLearner(std::size_t input_size, std::size_t num_actions, const PpoConfig& cfg, double logit_scale, Rng& rng);

  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  double logit_scale() const { return scale_; }

  ActionDistribution distribution(std::span<const double> features) const;
  double value(std::span<const double> features) const;

  /// Fills advantages (GAE) and returns for a batch of whole episodes.
  void compute_advantages(std::vector<Transition>& batch) const;
  /// Runs the configured epochs of minibatch updates.
  void update(std::vector<Transition>& batch, Rng& rng);
  /// Fraction of the run completed, in [0, 1]; drives learning-rate annealing.
  void set_progress(double fraction);
  /// Replaces both networks (warm start); shapes must match.
  void load(const Mlp& actor, const Mlp& critic);

 private:
  PpoConfig cfg_;
  double scale_;
  Mlp actor_, critic_;
  Adam actor_opt_, critic_opt_;
};

struct CurvePoint {
  std::size_t restart = 0;
  std::size_t iteration = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct TrainingResult {
  CrPolicy policy;
  Mlp critic;
  std::vector<CurvePoint> curve;
};

/// Trains π_*(a | b̃; θ) for one memory bound with the clipped policy-gradient
/// learner. Deterministic given (cfg, seed, warm). When `warm` is given, the
/// first restart starts from its networks and the others from scratch.
/// Throws TrainingDiverged.
TrainingResult train_policy(const EpisodicTask& task, const MemoryBound& bound, double tau,
                            const PpoConfig& cfg, std::uint64_t seed, const TrainingResult* warm = nullptr);

struct TabularConfig {
  std::size_t episodes = 20000;
  std::size_t bins = 4;
  double learning_rate = 0.1;
  double epsilon = 0.2;
  double gamma = 0.95;
};

/// ε-greedy Q-learning over the discretised biased belief; used for micro
/// models where a network is unnecessary.
CrPolicy train_tabular_policy(const EpisodicTask& task, const MemoryBound& bound, double tau,
                              const TabularConfig& cfg, std::uint64_t seed);

/// Greedy (or τ-sampled) evaluation: mean return and success rate.
CurvePoint evaluate_policy(const EpisodicTask& task, const CrPolicy& policy, const MemoryBound& bound,
                           double tau, std::size_t episodes, std::uint64_t seed, bool greedy);

}  // namespace cogbound
