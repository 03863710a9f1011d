#include "cogbound/pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "cogbound/error.hpp"

namespace cogbound {

namespace {

constexpr const char* kPomdpFormat = "cogbound.pomdp";
constexpr int kPomdpVersion = 1;

void check_row(std::span<const double> row, const std::string& what) {
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidModel(what + ": probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbTolerance) {
    throw InvalidModel(what + ": row sums to " + std::to_string(sum));
  }
}

Belief normalize_or_throw(std::vector<double> unnorm, const char* context) {
  double z = 0.0;
  for (double v : unnorm) z += v;
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw InconsistentEvidence(std::string(context) +
                               ": observation has zero probability under the prior");
  }
  for (double& v : unnorm) v /= z;
  return Belief{std::move(unnorm)};
}

}  // namespace

Belief Belief::uniform(std::size_t n) {
  return Belief{std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

Belief Belief::delta(std::size_t n, std::size_t at) {
  Belief b{std::vector<double>(n, 0.0)};
  b.probs.at(at) = 1.0;
  return b;
}

bool is_distribution(std::span<const double> probs) {
  if (probs.empty()) return false;
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0 + kProbTolerance)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= kProbTolerance;
}

DiscretePomdp::DiscretePomdp(Tables tables) : t_(std::move(tables)) {
  const auto nS = t_.num_states, nA = t_.num_actions, nO = t_.num_observations;
  if (nS == 0 || nA == 0 || nO == 0) throw InvalidModel("empty index set");
  if (t_.transition.size() != nS * nA * nS) throw InvalidModel("transition table has wrong size");
  if (t_.observation.size() != nS * nO) throw InvalidModel("observation table has wrong size");
  if (t_.reward.empty()) t_.reward.assign(nS * nA, 0.0);
  if (t_.reward.size() != nS * nA) throw InvalidModel("reward table has wrong size");
  if (!(t_.discount > 0.0 && t_.discount <= 1.0)) throw InvalidModel("discount must lie in (0,1]");
  if (t_.max_steps == 0) throw InvalidModel("max_steps must be positive");
  for (double r : t_.reward) {
    if (!std::isfinite(r)) throw InvalidModel("non-finite reward");
  }

  for (StateIndex s = 0; s < nS; ++s) {
    for (ActionIndex a = 0; a < nA; ++a) {
      check_row(transition_row(s, a), "T(.|s=" + std::to_string(s) + ",a=" + std::to_string(a) + ")");
    }
    check_row(observation_row(s), "O(.|s=" + std::to_string(s) + ")");
  }

  if (!t_.decay_map.empty()) {
    if (t_.decay_map.size() != nO) throw InvalidModel("decay map has wrong size");
    for (ObservationIndex o = 0; o < nO; ++o) {
      const auto d = t_.decay_map[o];
      if (d >= nO) throw InvalidModel("decay map target out of range");
      if (t_.decay_map[d] != d) throw InvalidModel("decay map must be idempotent");
    }
  }

  succ_range_.reserve(nS * nA);
  for (StateIndex s = 0; s < nS; ++s) {
    for (ActionIndex a = 0; a < nA; ++a) {
      const auto begin = successors_.size();
      const auto row = transition_row(s, a);
      for (StateIndex n = 0; n < nS; ++n) {
        if (row[n] > 0.0) successors_.push_back({n, row[n]});
      }
      succ_range_.emplace_back(begin, successors_.size() - begin);
    }
  }

  emittable_.assign(nO, false);
  for (StateIndex s = 0; s < nS; ++s) {
    for (ObservationIndex o = 0; o < nO; ++o) {
      if (observation(s, o) > 0.0) emittable_[o] = true;
    }
  }
  evidence_.assign(nO * nS, 0.0);
  for (ObservationIndex o = 0; o < nO; ++o) {
    for (StateIndex s = 0; s < nS; ++s) {
      if (emittable_[o]) {
        evidence_[o * nS + s] = observation(s, o);
        continue;
      }
      double mass = 0.0;
      for (ObservationIndex src = 0; src < nO; ++src) {
        if (src != o && decayed(src) == o) mass += observation(s, src);
      }
      evidence_[o * nS + s] = mass;
    }
  }

  auto fill_names = [](std::vector<std::string>& names, std::size_t n, const char* prefix) {
    if (names.empty()) {
      for (std::size_t i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
    }
    if (names.size() != n) throw InvalidModel(std::string("wrong number of ") + prefix + " names");
  };
  fill_names(t_.state_names, nS, "s");
  fill_names(t_.action_names, nA, "a");
  fill_names(t_.observation_names, nO, "o");
}

nlohmann::json DiscretePomdp::to_json() const {
  using nlohmann::json;
  json j;
  j["format"] = kPomdpFormat;
  j["version"] = kPomdpVersion;
  j["states"] = t_.state_names;
  j["actions"] = t_.action_names;
  j["observations"] = t_.observation_names;
  json trans = json::array();
  for (StateIndex s = 0; s < num_states(); ++s) {
    json per_action = json::array();
    for (ActionIndex a = 0; a < num_actions(); ++a) {
      auto row = transition_row(s, a);
      per_action.push_back(std::vector<double>(row.begin(), row.end()));
    }
    trans.push_back(std::move(per_action));
  }
  j["transition"] = std::move(trans);
  json obs = json::array();
  json rew = json::array();
  for (StateIndex s = 0; s < num_states(); ++s) {
    auto row = observation_row(s);
    obs.push_back(std::vector<double>(row.begin(), row.end()));
    rew.push_back(std::vector<double>(t_.reward.begin() + s * num_actions(),
                                      t_.reward.begin() + (s + 1) * num_actions()));
  }
  j["observation"] = std::move(obs);
  j["reward"] = std::move(rew);
  j["discount"] = t_.discount;
  j["max_steps"] = t_.max_steps;
  if (!t_.decay_map.empty()) j["decay"] = t_.decay_map;
  return j;
}

DiscretePomdp DiscretePomdp::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != kPomdpFormat) {
      throw InvalidModel("not a cogbound.pomdp document");
    }
    if (j.at("version").get<int>() != kPomdpVersion) {
      throw VersionMismatch("unsupported pomdp schema version");
    }
    Tables t;
    t.state_names = j.at("states").get<std::vector<std::string>>();
    t.action_names = j.at("actions").get<std::vector<std::string>>();
    t.observation_names = j.at("observations").get<std::vector<std::string>>();
    t.num_states = t.state_names.size();
    t.num_actions = t.action_names.size();
    t.num_observations = t.observation_names.size();
    const auto& trans = j.at("transition");
    if (trans.size() != t.num_states) throw InvalidModel("transition: wrong state count");
    for (const auto& per_action : trans) {
      if (per_action.size() != t.num_actions) throw InvalidModel("transition: wrong action count");
      for (const auto& row : per_action) {
        auto v = row.get<std::vector<double>>();
        if (v.size() != t.num_states) throw InvalidModel("transition: wrong row length");
        t.transition.insert(t.transition.end(), v.begin(), v.end());
      }
    }
    for (const auto& row : j.at("observation")) {
      auto v = row.get<std::vector<double>>();
      if (v.size() != t.num_observations) throw InvalidModel("observation: wrong row length");
      t.observation.insert(t.observation.end(), v.begin(), v.end());
    }
    if (j.contains("reward")) {
      for (const auto& row : j.at("reward")) {
        auto v = row.get<std::vector<double>>();
        if (v.size() != t.num_actions) throw InvalidModel("reward: wrong row length");
        t.reward.insert(t.reward.end(), v.begin(), v.end());
      }
    }
    t.discount = j.at("discount").get<double>();
    t.max_steps = j.at("max_steps").get<std::size_t>();
    if (j.contains("decay")) t.decay_map = j.at("decay").get<std::vector<ObservationIndex>>();
    return DiscretePomdp(std::move(t));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidModel(std::string("malformed pomdp json: ") + e.what());
  }
}

DiscretePomdp load_pomdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidModel(path + ": " + e.what());
  }
  return DiscretePomdp::from_json(j);
}

void save_pomdp(const DiscretePomdp& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  out << model.to_json().dump(1) << '\n';
}

Belief belief_update(const DiscretePomdp& model, const Belief& prior,
                     ActionIndex action, ObservationIndex observation) {
  const auto nS = model.num_states();
  if (prior.size() != nS) throw InvalidInput("belief has wrong dimension");
  if (action >= model.num_actions()) throw InvalidInput("action index out of range");
  if (observation >= model.num_observations()) throw InvalidInput("observation index out of range");

  std::vector<double> predicted(nS, 0.0);
  for (StateIndex s = 0; s < nS; ++s) {
    const double p = prior.probs[s];
    if (p == 0.0) continue;
    for (const auto& succ : model.successors(s, action)) predicted[succ.state] += succ.prob * p;
  }
  const auto lik = model.evidence(observation);
  for (StateIndex s = 0; s < nS; ++s) predicted[s] *= lik[s];
  return normalize_or_throw(std::move(predicted), "belief_update");
}

Belief belief_condition(const DiscretePomdp& model, const Belief& prior,
                        ObservationIndex observation) {
  const auto nS = model.num_states();
  if (prior.size() != nS) throw InvalidInput("belief has wrong dimension");
  if (observation >= model.num_observations()) throw InvalidInput("observation index out of range");
  std::vector<double> post(prior.probs);
  const auto lik = model.evidence(observation);
  for (StateIndex s = 0; s < nS; ++s) post[s] *= lik[s];
  return normalize_or_throw(std::move(post), "belief_condition");
}

ActionDistribution softmax_policy(std::span<const double> q_values, double tau) {
  if (q_values.empty()) throw InvalidInput("softmax over empty action set");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("tau must be positive and finite");
  double qmax = -std::numeric_limits<double>::infinity();
  for (double q : q_values) {
    if (!std::isfinite(q)) throw InvalidInput("non-finite q value");
    qmax = std::max(qmax, q);
  }
  ActionDistribution d{std::vector<double>(q_values.size())};
  double z = 0.0;
  for (std::size_t a = 0; a < q_values.size(); ++a) {
    d.probs[a] = std::exp(tau * (q_values[a] - qmax));
    z += d.probs[a];
  }
  for (double& p : d.probs) p /= z;
  return d;
}

double policy_entropy(const ActionDistribution& dist) {
  if (!is_distribution(dist.probs)) throw InvalidInput("entropy of an invalid distribution");
  double h = 0.0;
  for (double p : dist.probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

StateIndex sample_transition(const DiscretePomdp& model, StateIndex s, ActionIndex a, Rng& rng) {
  return rng.categorical(model.transition_row(s, a));
}

ObservationIndex sample_observation(const DiscretePomdp& model, StateIndex s, Rng& rng) {
  return rng.categorical(model.observation_row(s));
}

ActionIndex sample_action(const ActionDistribution& dist, Rng& rng) {
  return rng.categorical(dist.probs);
}

}  // namespace cogbound
