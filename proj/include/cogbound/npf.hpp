#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogbound/agent.hpp"
#include "cogbound/assist_action.hpp"
#include "cogbound/memory.hpp"
#include "cogbound/task.hpp"

namespace cogbound {

struct NpfConfig {
  std::size_t inner_particles = 200;
  /// Systematic resampling of an inner set when its ESS drops below
  /// `resample_fraction * inner_particles`. Disabled in strict mode.
  bool resample = true;
  double resample_fraction = 0.5;

  nlohmann::json to_json() const;
  static NpfConfig from_json(const nlohmann::json& j);
};

/// One grid value of θ with its weight and the inner memory hypotheses.
struct OuterParticle {
  double theta = 0.0;
  double weight = 0.0;
  std::vector<InternalMemory> memories;
  std::vector<double> weights;
};

/// Joint filter over (θ, h̃). The outer level is the full θ grid with exact
/// weights; each outer particle carries N_h̃ weighted memory hypotheses.
class NestedParticleSet {
 public:
  NestedParticleSet(const EpisodicTask& task, const PolicyBank& bank, NpfConfig cfg, double tau,
                    std::uint64_t seed);

  const EpisodicTask& task() const { return *task_; }
  const PolicyBank& bank() const { return *bank_; }
  const NpfConfig& config() const { return cfg_; }
  double tau() const { return tau_; }
  void set_tau(double tau);
  std::uint64_t seed() const { return seed_; }
  /// Number of updates applied so far (global clock, across episodes).
  std::size_t clock() const { return clock_; }
  /// Length of every inner memory (steps seen in the current episode).
  std::size_t memory_length() const { return memory_length_; }

  std::size_t num_outer() const { return outer_.size(); }
  const OuterParticle& outer(std::size_t i) const { return outer_.at(i); }
  std::vector<double> theta_weights() const;

  /// Clears every inner memory to the empty episode start; outer weights
  /// persist.
  void begin_episode();

  /// Returns a description of the first violated invariant, if any.
  std::optional<std::string> check_invariants() const;

  nlohmann::json to_json() const;
  /// Restores a snapshot; `task` and `bank` must be the ones it was taken with.
  static NestedParticleSet from_json(const nlohmann::json& j, const EpisodicTask& task, const PolicyBank& bank);

  // Mutable access used by the update routines.
  std::vector<OuterParticle>& particles() { return outer_; }
  void advance(std::size_t memory_length) {
    ++clock_;
    memory_length_ = memory_length;
  }

 private:
  const EpisodicTask* task_;
  const PolicyBank* bank_;
  NpfConfig cfg_;
  double tau_;
  std::uint64_t seed_;
  std::size_t clock_ = 0;
  std::size_t memory_length_ = 0;
  std::vector<OuterParticle> outer_;
};

NestedParticleSet npf_init(const EpisodicTask& task, const PolicyBank& bank, const NpfConfig& cfg, double tau,
                           std::uint64_t seed);

/// Moves every inner memory forward: h̃ ~ f_θ(h̃, obs_prev, act_prev2), then
/// applies `refresh` (a memory hint shown to the user on the same step).
void npf_propagate(NestedParticleSet& ps, ObservationIndex obs_prev, ActionIndex act_prev2,
                   const std::optional<MemoryHint>& refresh = std::nullopt);

/// Likelihood of the observed action for every (i, j): the user's softmax
/// policy, or the assisted policy when an action hint was shown.
std::vector<std::vector<double>> npf_likelihoods(const NestedParticleSet& ps, ActionIndex act_evidence,
                                                 const std::optional<ActionHint>& hint = std::nullopt,
                                                 double entropy_threshold = 0.0);

/// w_ij ← w_ij L_ij; w_i ← w_i Σ_j w_ij; then both levels renormalised.
/// Throws AllWeightsZero when every outer weight vanishes.
void npf_apply_likelihoods(NestedParticleSet& ps, const std::vector<std::vector<double>>& likelihoods);

/// Inner resampling where the ESS is below the configured fraction.
void npf_resample(NestedParticleSet& ps);

/// One filtering step on (o_{t-1}, a_{t-2}) with evidence a_{t-1}.
void npf_update(NestedParticleSet& ps, ObservationIndex obs_prev, ActionIndex act_prev2, ActionIndex act_evidence);

double ess(std::span<const double> weights);

/// Equal-weight set of size `count` drawn by systematic resampling with a
/// single uniform offset `u` in [0, 1). Returns the chosen source indices.
std::vector<std::size_t> systematic_indices(std::span<const double> weights, std::size_t count, double u);
void systematic_resample(std::vector<InternalMemory>& memories, std::vector<double>& weights, Rng& rng);

struct PosteriorSummary {
  std::vector<double> grid;
  std::vector<double> weights;
  double mean = 0.0;
  double map = 0.0;
  double outer_ess = 0.0;
  double mean_inner_ess = 0.0;
};

PosteriorSummary summarize(const NestedParticleSet& ps);
double posterior_mean(std::span<const double> grid, std::span<const double> weights);
/// Ties resolve toward the smaller θ.
double posterior_map(std::span<const double> grid, std::span<const double> weights);
double posterior_mean(const NestedParticleSet& ps);
double posterior_map(const NestedParticleSet& ps);
double pm_error(const NestedParticleSet& ps, double theta_true);
double map_error(const NestedParticleSet& ps, double theta_true);

/// Exact posterior over (θ, h̃_t) for a single episode of evidence, computed
/// by enumerating every corruption outcome.
struct ExactPosterior {
  std::vector<double> grid;
  std::vector<double> theta_marginal;
  /// For each grid index, memory hypotheses with their joint probability.
  std::vector<std::map<std::vector<ObservationIndex>, double>> joint;
};

/// `observations[k]` and `actions[k]` are the k-th observation and the
/// action taken after it. Throws BudgetExceeded when |Ω|^t |grid| exceeds
/// `budget`, and AllWeightsZero when the evidence is impossible.
ExactPosterior exact_joint_posterior(const EpisodicTask& task, const PolicyBank& bank,
                                     std::span<const ObservationIndex> observations,
                                     std::span<const ActionIndex> actions, double tau,
                                     std::size_t budget = 1u << 20);

double total_variation(std::span<const double> p, std::span<const double> q);

}  // namespace cogbound
