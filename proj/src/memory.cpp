#include "cogbound/memory.hpp"

#include <cmath>

#include "cogbound/error.hpp"

namespace cogbound {

nlohmann::json InternalMemory::to_json() const {
  nlohmann::json obs = nlohmann::json::array();
  nlohmann::json act = nlohmann::json::array();
  for (const auto& e : entries) {
    obs.push_back(e.obs);
    if (e.act == kNoAction) {
      act.push_back(nullptr);
    } else {
      act.push_back(e.act);
    }
  }
  return {{"obs", std::move(obs)}, {"act", std::move(act)}};
}

InternalMemory InternalMemory::from_json(const nlohmann::json& j) {
  const auto& obs = j.at("obs");
  const auto& act = j.at("act");
  if (obs.size() != act.size()) throw InvalidInput("memory json: obs/act length mismatch");
  InternalMemory m;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    m.entries.push_back({obs[i].get<ObservationIndex>(), act[i].is_null() ? kNoAction : act[i].get<ActionIndex>()});
  }
  return m;
}

MemoryBound::MemoryBound(double theta) : theta_(theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidInput("memory bound must lie in [0,1]");
}

void memory_step_inplace(const DiscretePomdp& model, InternalMemory& mem,
                         ObservationIndex obs, ActionIndex act,
                         const MemoryBound& bound, Rng& rng) {
  if (obs >= model.num_observations()) throw InvalidInput("observation index out of range");
  if (act != kNoAction && act >= model.num_actions()) throw InvalidInput("action index out of range");
  mem.entries.push_back({obs, act});
  const double theta = bound.theta();
  if (theta == 0.0) return;
  for (auto& e : mem.entries) {
    if (!model.decays(e.obs)) continue;
    if (theta == 1.0 || rng.bernoulli(theta)) e.obs = model.decayed(e.obs);
  }
}

InternalMemory memory_step(const DiscretePomdp& model, InternalMemory prev,
                           ObservationIndex obs, ActionIndex act,
                           const MemoryBound& bound, Rng& rng) {
  memory_step_inplace(model, prev, obs, act, bound, rng);
  return prev;
}

bool biased_belief_into(const DiscretePomdp& model, const InternalMemory& mem,
                        const Belief& initial, std::vector<double>& out,
                        std::vector<double>& scratch) {
  const auto nS = model.num_states();
  out.assign(initial.probs.begin(), initial.probs.end());
  for (std::size_t i = 0; i < mem.entries.size(); ++i) {
    const auto& e = mem.entries[i];
    if (i > 0) {
      scratch.assign(nS, 0.0);
      for (StateIndex s = 0; s < nS; ++s) {
        const double p = out[s];
        if (p == 0.0) continue;
        for (const auto& succ : model.successors(s, e.act)) scratch[succ.state] += succ.prob * p;
      }
      out.swap(scratch);
    }
    const auto lik = model.evidence(e.obs);
    double z = 0.0;
    for (StateIndex s = 0; s < nS; ++s) {
      out[s] *= lik[s];
      z += out[s];
    }
    if (!(z > 0.0)) return false;
    for (auto& v : out) v /= z;
  }
  return true;
}

Belief biased_belief(const DiscretePomdp& model, const InternalMemory& mem,
                     const Belief& initial) {
  if (initial.size() != model.num_states()) throw InvalidInput("initial belief has wrong dimension");
  for (std::size_t i = 0; i < mem.entries.size(); ++i) {
    const auto& e = mem.entries[i];
    if (e.obs >= model.num_observations()) throw InvalidInput("memory observation out of range");
    if (i > 0 && e.act >= model.num_actions()) throw InvalidInput("memory action out of range");
  }
  Belief b;
  std::vector<double> scratch;
  if (!biased_belief_into(model, mem, initial, b.probs, scratch)) {
    throw CorruptedMemoryContradiction("remembered history has zero probability under the model");
  }
  return b;
}

}  // namespace cogbound
