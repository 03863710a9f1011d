#include "cogbound/npf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cogbound/error.hpp"

namespace cogbound {

namespace {

constexpr std::uint64_t kPropagateStream = 1;
constexpr std::uint64_t kResampleStream = 2;

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

nlohmann::json NpfConfig::to_json() const {
  return {{"inner_particles", inner_particles}, {"resample", resample}, {"resample_fraction", resample_fraction}};
}

NpfConfig NpfConfig::from_json(const nlohmann::json& j) {
  NpfConfig c;
  c.inner_particles = j.value("inner_particles", c.inner_particles);
  c.resample = j.value("resample", c.resample);
  c.resample_fraction = j.value("resample_fraction", c.resample_fraction);
  if (c.inner_particles == 0) throw ConfigError("inner_particles must be at least 1");
  if (!(c.resample_fraction >= 0.0 && c.resample_fraction <= 1.0)) {
    throw ConfigError("resample_fraction must lie in [0, 1]");
  }
  return c;
}

NestedParticleSet::NestedParticleSet(const EpisodicTask& task, const PolicyBank& bank, NpfConfig cfg, double tau,
                                     std::uint64_t seed)
    : task_(&task), bank_(&bank), cfg_(cfg), tau_(tau), seed_(seed) {
  if (bank.size() == 0) throw InvalidInput("empty theta grid");
  if (cfg.inner_particles == 0) throw InvalidInput("inner particle count must be at least 1");
  set_tau(tau);
  const double w = 1.0 / static_cast<double>(bank.size());
  const double wj = 1.0 / static_cast<double>(cfg.inner_particles);
  outer_.resize(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    outer_[i].theta = bank.grid()[i];
    outer_[i].weight = w;
    outer_[i].memories.assign(cfg.inner_particles, InternalMemory{});
    outer_[i].weights.assign(cfg.inner_particles, wj);
  }
}

void NestedParticleSet::set_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("tau must be positive and finite");
  tau_ = tau;
}

std::vector<double> NestedParticleSet::theta_weights() const {
  std::vector<double> w(outer_.size());
  for (std::size_t i = 0; i < outer_.size(); ++i) w[i] = outer_[i].weight;
  return w;
}

void NestedParticleSet::begin_episode() {
  const double wj = 1.0 / static_cast<double>(cfg_.inner_particles);
  for (auto& op : outer_) {
    for (auto& m : op.memories) m.entries.clear();
    std::fill(op.weights.begin(), op.weights.end(), wj);
  }
  memory_length_ = 0;
}

std::optional<std::string> NestedParticleSet::check_invariants() const {
  double total = 0.0;
  for (std::size_t i = 0; i < outer_.size(); ++i) {
    const auto& op = outer_[i];
    if (!(op.weight >= 0.0) || !std::isfinite(op.weight)) return "outer weight " + std::to_string(i) + " invalid";
    total += op.weight;
    if (op.memories.size() != cfg_.inner_particles || op.weights.size() != cfg_.inner_particles) {
      return "inner set " + std::to_string(i) + " has the wrong size";
    }
    double inner = 0.0;
    for (std::size_t j = 0; j < op.weights.size(); ++j) {
      if (!(op.weights[j] >= 0.0) || !std::isfinite(op.weights[j])) {
        return "inner weight (" + std::to_string(i) + "," + std::to_string(j) + ") invalid";
      }
      inner += op.weights[j];
      if (op.memories[j].size() != memory_length_) {
        return "memory (" + std::to_string(i) + "," + std::to_string(j) + ") out of sync";
      }
    }
    if (std::abs(inner - 1.0) > 1e-9) return "inner weights " + std::to_string(i) + " do not sum to one";
  }
  if (std::abs(total - 1.0) > 1e-9) return "outer weights do not sum to one";
  return std::nullopt;
}

nlohmann::json NestedParticleSet::to_json() const {
  nlohmann::json outer = nlohmann::json::array();
  for (const auto& op : outer_) {
    nlohmann::json mems = nlohmann::json::array();
    for (const auto& m : op.memories) mems.push_back(m.to_json());
    outer.push_back({{"theta", op.theta}, {"weight", op.weight}, {"weights", op.weights}, {"memories", mems}});
  }
  return {{"format", "cogbound.npf"},
          {"version", 1},
          {"config", cfg_.to_json()},
          {"tau", tau_},
          {"seed", seed_},
          {"clock", clock_},
          {"memory_length", memory_length_},
          {"outer", outer}};
}

NestedParticleSet NestedParticleSet::from_json(const nlohmann::json& j, const EpisodicTask& task,
                                               const PolicyBank& bank) {
  if (j.value("format", "") != "cogbound.npf") throw InvalidInput("not a particle-set snapshot");
  if (j.value("version", 0) != 1) throw VersionMismatch("unsupported particle-set snapshot version");
  NestedParticleSet ps(task, bank, NpfConfig::from_json(j.at("config")), j.at("tau").get<double>(),
                       j.at("seed").get<std::uint64_t>());
  ps.clock_ = j.at("clock").get<std::size_t>();
  ps.memory_length_ = j.at("memory_length").get<std::size_t>();
  const auto& outer = j.at("outer");
  if (outer.size() != ps.outer_.size()) throw InvalidInput("snapshot grid does not match the bank");
  for (std::size_t i = 0; i < outer.size(); ++i) {
    auto& op = ps.outer_[i];
    if (std::abs(outer[i].at("theta").get<double>() - op.theta) > 1e-12) {
      throw InvalidInput("snapshot grid does not match the bank");
    }
    op.weight = outer[i].at("weight").get<double>();
    op.weights = outer[i].at("weights").get<std::vector<double>>();
    op.memories.clear();
    for (const auto& m : outer[i].at("memories")) op.memories.push_back(InternalMemory::from_json(m));
  }
  if (auto bad = ps.check_invariants()) throw InvalidInput("snapshot violates invariants: " + *bad);
  return ps;
}

NestedParticleSet npf_init(const EpisodicTask& task, const PolicyBank& bank, const NpfConfig& cfg, double tau,
                           std::uint64_t seed) {
  return NestedParticleSet(task, bank, cfg, tau, seed);
}

void npf_propagate(NestedParticleSet& ps, ObservationIndex obs_prev, ActionIndex act_prev2,
                   const std::optional<MemoryHint>& refresh) {
  const auto& model = ps.task().model();
  if (obs_prev >= model.num_observations()) throw InvalidInput("observation index out of range");
  if (act_prev2 != kNoAction && act_prev2 >= model.num_actions()) throw InvalidInput("action index out of range");
  if ((ps.memory_length() == 0) != (act_prev2 == kNoAction)) {
    throw InvalidInput("previous action must be absent exactly at the episode start");
  }
  auto& outer = ps.particles();
  for (std::size_t i = 0; i < outer.size(); ++i) {
    const MemoryBound bound(outer[i].theta);
    const bool draws = bound.theta() > 0.0 && bound.theta() < 1.0;
    for (std::size_t j = 0; j < outer[i].memories.size(); ++j) {
      Rng rng(draws ? derive_seed(ps.seed(), {kPropagateStream, ps.clock(), i, j}) : 0);
      memory_step_inplace(model, outer[i].memories[j], obs_prev, act_prev2, bound, rng);
      if (refresh) {
        if (refresh->obs >= model.num_observations()) throw InvalidInput("hint observation out of range");
        apply_memory_hint_inplace(outer[i].memories[j], refresh->index, refresh->obs);
      }
    }
  }
}

std::vector<std::vector<double>> npf_likelihoods(const NestedParticleSet& ps, ActionIndex act_evidence,
                                                 const std::optional<ActionHint>& hint, double entropy_threshold) {
  const auto& task = ps.task();
  const auto& model = task.model();
  if (act_evidence >= model.num_actions()) throw InvalidInput("action index out of range");
  const Belief initial = task.initial_belief();
  std::vector<double> belief, scratch;
  std::vector<std::vector<double>> out(ps.num_outer());
  for (std::size_t i = 0; i < ps.num_outer(); ++i) {
    const auto& op = ps.outer(i);
    out[i].assign(op.memories.size(), 0.0);
    if (op.weight <= 0.0) continue;
    const auto& policy = ps.bank().at(i);
    for (std::size_t j = 0; j < op.memories.size(); ++j) {
      const auto& mem = op.memories[j];
      if (mem.empty()) throw InvalidInput("likelihood requested before any observation");
      if (!biased_belief_into(model, mem, initial, belief, scratch)) continue;
      const auto dist = policy.distribution(belief, mem.size() - 1, ps.tau());
      double l = dist.probs[act_evidence];
      if (hint && policy_entropy(dist) >= entropy_threshold) l = act_evidence == hint->action ? 1.0 : 0.0;
      out[i][j] = l;
    }
  }
  return out;
}

void npf_apply_likelihoods(NestedParticleSet& ps, const std::vector<std::vector<double>>& likelihoods) {
  auto& outer = ps.particles();
  if (likelihoods.size() != outer.size()) throw InvalidInput("likelihood table has the wrong shape");
  // first pass validates and sums, so a throw leaves the set untouched
  std::vector<double> inner(outer.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < outer.size(); ++i) {
    const auto& op = outer[i];
    if (likelihoods[i].size() != op.weights.size()) throw InvalidInput("likelihood table has the wrong shape");
    for (std::size_t j = 0; j < op.weights.size(); ++j) {
      const double l = likelihoods[i][j];
      if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidInput("likelihoods must be finite and non-negative");
      inner[i] += op.weights[j] * l;
    }
    total += op.weight * inner[i];
  }
  if (!(total > 0.0)) throw AllWeightsZero("every particle assigns zero likelihood to the observed action");
  for (std::size_t i = 0; i < outer.size(); ++i) {
    auto& op = outer[i];
    op.weight = op.weight * inner[i] / total;
    if (inner[i] > 0.0) {
      for (std::size_t j = 0; j < op.weights.size(); ++j) op.weights[j] = op.weights[j] * likelihoods[i][j] / inner[i];
    } else {
      op.weight = 0.0;
      std::fill(op.weights.begin(), op.weights.end(), 1.0 / static_cast<double>(op.weights.size()));
    }
  }
}

void npf_resample(NestedParticleSet& ps) {
  if (!ps.config().resample) return;
  auto& outer = ps.particles();
  const double floor = ps.config().resample_fraction * static_cast<double>(ps.config().inner_particles);
  for (std::size_t i = 0; i < outer.size(); ++i) {
    if (outer[i].weight <= 0.0) continue;
    if (ess(outer[i].weights) >= floor) continue;
    Rng rng(derive_seed(ps.seed(), {kResampleStream, ps.clock(), i}));
    systematic_resample(outer[i].memories, outer[i].weights, rng);
  }
}

void npf_update(NestedParticleSet& ps, ObservationIndex obs_prev, ActionIndex act_prev2, ActionIndex act_evidence) {
  npf_propagate(ps, obs_prev, act_prev2);
  npf_apply_likelihoods(ps, npf_likelihoods(ps, act_evidence));
  npf_resample(ps);
  ps.advance(ps.memory_length() + 1);
#ifndef NDEBUG
  if (auto bad = ps.check_invariants()) throw IntegrityError("particle set invariant violated: " + *bad);
#endif
}

double ess(std::span<const double> weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return sq > 0.0 ? 1.0 / sq : 0.0;
}

std::vector<std::size_t> systematic_indices(std::span<const double> weights, std::size_t count, double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw AllWeightsZero("cannot resample from all-zero weights");
  std::vector<std::size_t> idx(count);
  const double step = total / static_cast<double>(count);
  double pos = u * step;
  double acc = weights.empty() ? 0.0 : weights[0];
  std::size_t src = 0;
  for (std::size_t k = 0; k < count; ++k) {
    while (pos >= acc && src + 1 < weights.size()) acc += weights[++src];
    idx[k] = src;
    pos += step;
  }
  return idx;
}

void systematic_resample(std::vector<InternalMemory>& memories, std::vector<double>& weights, Rng& rng) {
  const auto idx = systematic_indices(weights, memories.size(), rng.uniform());
  std::vector<InternalMemory> next(memories.size());
  for (std::size_t k = 0; k < idx.size(); ++k) next[k] = memories[idx[k]];
  memories = std::move(next);
  std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(weights.size()));
}

double posterior_mean(std::span<const double> grid, std::span<const double> weights) {
  double m = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) m += grid[i] * weights[i];
  return std::clamp(m, grid.front(), grid.back());
}

double posterior_map(std::span<const double> grid, std::span<const double> weights) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (weights[i] > weights[best]) best = i;
  }
  return grid[best];
}

PosteriorSummary summarize(const NestedParticleSet& ps) {
  PosteriorSummary s;
  s.grid = ps.bank().grid();
  s.weights = ps.theta_weights();
  s.mean = posterior_mean(s.grid, s.weights);
  s.map = posterior_map(s.grid, s.weights);
  s.outer_ess = ess(s.weights);
  for (std::size_t i = 0; i < ps.num_outer(); ++i) s.mean_inner_ess += ess(ps.outer(i).weights);
  s.mean_inner_ess /= static_cast<double>(ps.num_outer());
  return s;
}

double posterior_mean(const NestedParticleSet& ps) {
  const auto w = ps.theta_weights();
  return posterior_mean(ps.bank().grid(), w);
}

double posterior_map(const NestedParticleSet& ps) {
  const auto w = ps.theta_weights();
  return posterior_map(ps.bank().grid(), w);
}

double pm_error(const NestedParticleSet& ps, double theta_true) { return std::abs(posterior_mean(ps) - theta_true); }
double map_error(const NestedParticleSet& ps, double theta_true) { return std::abs(posterior_map(ps) - theta_true); }

ExactPosterior exact_joint_posterior(const EpisodicTask& task, const PolicyBank& bank,
                                     std::span<const ObservationIndex> observations,
                                     std::span<const ActionIndex> actions, double tau, std::size_t budget) {
  const auto& model = task.model();
  if (observations.size() != actions.size()) throw InvalidInput("observation and action counts differ");
  const double cost = std::pow(static_cast<double>(model.num_observations()), static_cast<double>(observations.size())) *
                      static_cast<double>(bank.size());
  if (cost > static_cast<double>(budget)) throw BudgetExceeded("exact posterior enumeration exceeds the budget");

  const double neg_inf = -std::numeric_limits<double>::infinity();
  const Belief initial = task.initial_belief();
  using Key = std::vector<ObservationIndex>;
  std::vector<std::map<Key, double>> logw(bank.size());
  for (auto& m : logw) m[Key{}] = -std::log(static_cast<double>(bank.size()));

  InternalMemory mem;
  std::vector<double> belief, scratch;
  for (std::size_t k = 0; k < observations.size(); ++k) {
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const double theta = bank.grid()[i];
      const auto& policy = bank.at(i);
      std::map<Key, double> next;
      for (const auto& [key, lw] : logw[i]) {
        Key grown = key;
        grown.push_back(observations[k]);
        std::vector<std::size_t> intact;
        for (std::size_t e = 0; e < grown.size(); ++e) {
          if (model.decays(grown[e])) intact.push_back(e);
        }
        const std::size_t outcomes = std::size_t{1} << intact.size();
        for (std::size_t mask = 0; mask < outcomes; ++mask) {
          double lp = 0.0;
          Key h = grown;
          for (std::size_t b = 0; b < intact.size(); ++b) {
            const bool erased = (mask >> b) & 1u;
            const double p = erased ? theta : 1.0 - theta;
            if (p <= 0.0) {
              lp = neg_inf;
              break;
            }
            lp += std::log(p);
            if (erased) h[intact[b]] = model.decayed(h[intact[b]]);
          }
          if (lp == neg_inf) continue;
          mem.entries.resize(h.size());
          for (std::size_t e = 0; e < h.size(); ++e) {
            mem.entries[e] = MemoryEntry{h[e], e == 0 ? kNoAction : actions[e - 1]};
          }
          if (!biased_belief_into(model, mem, initial, belief, scratch)) continue;
          const double l = policy.distribution(belief, k, tau).probs[actions[k]];
          if (l <= 0.0) continue;
          auto [it, fresh] = next.try_emplace(h, neg_inf);
          it->second = log_add(it->second, lw + lp + std::log(l));
        }
      }
      logw[i] = std::move(next);
    }
    std::size_t live = 0;
    for (const auto& m : logw) live += m.size();
    if (live > budget) throw BudgetExceeded("exact posterior enumeration exceeds the budget");
  }

  double top = neg_inf;
  for (const auto& m : logw) {
    for (const auto& [key, lw] : m) top = std::max(top, lw);
  }
  if (top == neg_inf) throw AllWeightsZero("the observed actions are impossible under every bound");
  double z = 0.0;
  for (const auto& m : logw) {
    for (const auto& [key, lw] : m) z += std::exp(lw - top);
  }
  ExactPosterior out;
  out.grid = bank.grid();
  out.theta_marginal.assign(bank.size(), 0.0);
  out.joint.resize(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    for (const auto& [key, lw] : logw[i]) {
      const double p = std::exp(lw - top) / z;
      out.joint[i][key] = p;
      out.theta_marginal[i] += p;
    }
  }
  return out;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidInput("distributions differ in size");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

}  // namespace cogbound
