#include "cogbound/assist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cogbound/error.hpp"

namespace cogbound {

double AssistCosts::of(const AssistAction& a) const {
  switch (type_of(a)) {
    case AssistType::ActionHint:
      return action_hint;
    case AssistType::MemoryHint:
      return memory_hint;
    case AssistType::DoNothing:
      break;
  }
  return 0.0;
}

PpoConfig AssistConfig::default_ppo() {
  PpoConfig p;
  p.epochs = 4;
  p.minibatch = 256;
  p.hidden = 32;
  p.learning_rate = 3e-3;
  p.value_learning_rate = 3e-3;
  p.entropy_coef = 0.01;
  p.restarts = 1;
  return p;
}

nlohmann::json AssistConfig::to_json() const {
  return {{"entropy_threshold", entropy_threshold},
          {"costs", {{"action_hint", costs.action_hint}, {"memory_hint", costs.memory_hint}}},
          {"episodes_per_session", episodes_per_session},
          {"sessions_per_epoch", sessions_per_epoch},
          {"epochs", epochs},
          {"npf", npf.to_json()},
          {"ppo", ppo.to_json()},
          {"feature_version", kAiFeatureVersion}};
}

AssistConfig AssistConfig::from_json(const nlohmann::json& j) {
  AssistConfig c;
  c.entropy_threshold = j.value("entropy_threshold", c.entropy_threshold);
  if (j.contains("costs")) {
    c.costs.action_hint = j.at("costs").value("action_hint", c.costs.action_hint);
    c.costs.memory_hint = j.at("costs").value("memory_hint", c.costs.memory_hint);
  }
  c.episodes_per_session = j.value("episodes_per_session", c.episodes_per_session);
  c.sessions_per_epoch = j.value("sessions_per_epoch", c.sessions_per_epoch);
  c.epochs = j.value("epochs", c.epochs);
  if (j.contains("npf")) c.npf = NpfConfig::from_json(j.at("npf"));
  if (j.contains("ppo")) c.ppo = PpoConfig::from_json(j.at("ppo"));
  if (c.entropy_threshold < 0.0 || c.costs.action_hint < 0.0 || c.costs.memory_hint < 0.0) {
    throw ConfigError("assistance threshold and costs must be non-negative");
  }
  if (c.episodes_per_session == 0 || c.sessions_per_epoch == 0 || c.epochs == 0) {
    throw ConfigError("assistance training counts must be positive");
  }
  return c;
}

void AssistConfig::validate(std::size_t num_actions) const {
  if (entropy_threshold > std::log(static_cast<double>(num_actions)) + 1e-12) {
    throw ConfigError("entropy threshold exceeds ln|A|");
  }
}

std::string AssistConfig::digest() const {
  Fnv1a h;
  h.update(to_json().dump());
  return h.hex();
}

ActionIndex assisted_user_action(const CrPolicy& policy, const Belief& belief, std::size_t step, double tau,
                                 const AssistAction& assist, double entropy_threshold, Rng& rng) {
  return decide(policy, belief, step, tau, assist, entropy_threshold, rng).action;
}

double ai_reward(double task_reward, const AssistAction& assist, const AssistCosts& costs) {
  return task_reward - costs.of(assist);
}

bool critical_observation(const EpisodicTask& task, ObservationIndex o) { return task.critical(o); }

std::vector<ActionIndex> mdp_policy(const EpisodicTask& task, double gamma, double tolerance) {
  const auto& model = task.model();
  const std::size_t nS = model.num_states(), nA = model.num_actions();
  std::vector<double> v(nS, 0.0), next(nS, 0.0);
  std::vector<ActionIndex> pi(nS, 0);
  auto backup = [&](StateIndex s, ActionIndex a) {
    double q = 0.0;
    for (const auto& succ : model.successors(s, a)) {
      const double cont = task.terminal(succ.state) ? 0.0 : gamma * v[succ.state];
      q += succ.prob * (task.reward(s, a, succ.state, 1) + cont);
    }
    return q;
  };
  for (std::size_t sweep = 0; sweep < 100000; ++sweep) {
    double delta = 0.0;
    for (StateIndex s = 0; s < nS; ++s) {
      if (task.terminal(s)) {
        next[s] = 0.0;
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      for (ActionIndex a = 0; a < nA; ++a) best = std::max(best, backup(s, a));
      next[s] = best;
      delta = std::max(delta, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    if (delta < tolerance) break;
  }
  for (StateIndex s = 0; s < nS; ++s) {
    if (task.terminal(s)) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (ActionIndex a = 0; a < nA; ++a) {
      const double q = backup(s, a);
      if (q > best + 1e-12) {
        best = q;
        pi[s] = a;
      }
    }
  }
  return pi;
}

AssistAction select_assist_content(AssistType type, StateIndex true_state,
                                   const std::vector<CriticalRecord>& critical_set,
                                   const std::vector<ActionIndex>& mdp_actions) {
  switch (type) {
    case AssistType::ActionHint:
      return ActionHint{mdp_actions.at(true_state)};
    case AssistType::MemoryHint:
      if (critical_set.empty()) return DoNothing{};
      return MemoryHint{critical_set.back().index, critical_set.back().obs};
    case AssistType::DoNothing:
      break;
  }
  return DoNothing{};
}

AiBeliefFeatures ai_belief_features(const NestedParticleSet& ps, const std::vector<CriticalRecord>& critical_set,
                                    ActionIndex optimal_action, std::size_t step, double entropy_threshold) {
  const auto& task = ps.task();
  const auto& model = task.model();
  const std::size_t G = ps.num_outer();
  AiBeliefFeatures f;
  f.values.assign(G + kAiFeatureExtras, 0.0);
  for (std::size_t i = 0; i < G; ++i) f.values[i] = ps.outer(i).weight;

  const Belief initial = task.initial_belief();
  std::vector<double> belief, scratch, predictive(model.num_actions(), 0.0);
  double intact = 0.0, accept = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < G; ++i) {
    const auto& op = ps.outer(i);
    if (op.weight <= 0.0) continue;
    const auto& policy = ps.bank().at(i);
    for (std::size_t j = 0; j < op.memories.size(); ++j) {
      const double w = op.weight * op.weights[j];
      if (w <= 0.0) continue;
      const auto& mem = op.memories[j];
      if (!critical_set.empty() && mem.entries.at(critical_set.back().index).obs == critical_set.back().obs) {
        intact += w;
      }
      if (!biased_belief_into(model, mem, initial, belief, scratch)) continue;
      const auto dist = policy.distribution(belief, mem.size() - 1, ps.tau());
      for (std::size_t a = 0; a < dist.probs.size(); ++a) predictive[a] += w * dist.probs[a];
      if (policy_entropy(dist) >= entropy_threshold) accept += w;
      mass += w;
    }
  }
  double entropy = 0.0;
  if (mass > 0.0) {
    for (double& p : predictive) {
      p /= mass;
      if (p > 0.0) entropy -= p * std::log(p);
    }
    accept /= mass;
  }
  f.values[G + 0] = intact;
  f.values[G + 1] = static_cast<double>(step) / static_cast<double>(task.max_steps());
  f.values[G + 2] = entropy;
  f.values[G + 3] = accept;
  f.values[G + 4] = mass > 0.0 ? predictive.at(optimal_action) : 0.0;
  f.values[G + 5] = critical_set.empty() ? 0.0 : 1.0;
  return f;
}

void ai_belief_propagate(NestedParticleSet& ps, ObservationIndex obs, ActionIndex prev_action) {
  npf_propagate(ps, obs, prev_action);
}

void ai_belief_reweight(NestedParticleSet& ps, const AssistAction& assist, ActionIndex user_action,
                        double entropy_threshold) {
  if (const auto* mh = std::get_if<MemoryHint>(&assist)) {
    if (mh->obs >= ps.task().model().num_observations()) throw InvalidInput("hint observation out of range");
    for (auto& op : ps.particles()) {
      for (auto& m : op.memories) apply_memory_hint_inplace(m, mh->index, mh->obs);
    }
  }
  std::optional<ActionHint> hint;
  if (const auto* ah = std::get_if<ActionHint>(&assist)) hint = *ah;
  npf_apply_likelihoods(ps, npf_likelihoods(ps, user_action, hint, entropy_threshold));
  npf_resample(ps);
  ps.advance(ps.memory_length() + 1);
#ifndef NDEBUG
  if (auto bad = ps.check_invariants()) throw IntegrityError("particle set invariant violated: " + *bad);
#endif
}

void ai_belief_step(NestedParticleSet& ps, ObservationIndex obs, ActionIndex prev_action,
                    const AssistAction& assist, ActionIndex user_action, double entropy_threshold) {
  ai_belief_propagate(ps, obs, prev_action);
  ai_belief_reweight(ps, assist, user_action, entropy_threshold);
}

AssistPolicy AssistPolicy::constant(AssistType type) {
  AssistPolicy p;
  p.fixed_ = type;
  p.digest_ = std::string("constant-") + assist_type_name(type);
  return p;
}

AssistPolicy::AssistPolicy(Mlp net, std::string digest) : net_(std::move(net)), digest_(std::move(digest)) {
  if (net_->output_size() != kNumAssistTypes) throw InvalidInput("assistance network must have three outputs");
}

std::array<double, kNumAssistTypes> AssistPolicy::distribution(const AiBeliefFeatures& f) const {
  std::array<double, kNumAssistTypes> out{};
  if (!net_) {
    out[static_cast<std::size_t>(fixed_)] = 1.0;
    return out;
  }
  std::vector<double> logits;
  net_->forward(f.values, logits);
  const auto d = softmax_policy(logits, 1.0);
  std::copy(d.probs.begin(), d.probs.end(), out.begin());
  return out;
}

AssistType AssistPolicy::choose(const AiBeliefFeatures& f, Rng& rng, bool greedy) const {
  if (!net_) return fixed_;
  const auto d = distribution(f);
  if (greedy) return static_cast<AssistType>(std::max_element(d.begin(), d.end()) - d.begin());
  return static_cast<AssistType>(rng.categorical(d));
}

nlohmann::json AssistPolicy::to_json() const {
  nlohmann::json j{{"format", "cogbound.assist_policy"},
                   {"version", 1},
                   {"feature_version", kAiFeatureVersion},
                   {"config_digest", digest_}};
  if (net_) {
    j["network"] = net_->to_json();
  } else {
    j["constant"] = assist_type_name(fixed_);
  }
  return j;
}

AssistPolicy AssistPolicy::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cogbound.assist_policy") throw InvalidInput("not an assistance policy file");
  if (j.value("version", 0) != 1 || j.value("feature_version", 0) != kAiFeatureVersion) {
    throw VersionMismatch("unsupported assistance policy version");
  }
  if (j.contains("constant")) {
    const auto name = j.at("constant").get<std::string>();
    for (std::size_t t = 0; t < kNumAssistTypes; ++t) {
      if (name == assist_type_name(static_cast<AssistType>(t))) return constant(static_cast<AssistType>(t));
    }
    throw InvalidInput("unknown assistance type " + name);
  }
  return AssistPolicy(Mlp::from_json(j.at("network")), j.value("config_digest", ""));
}

double AssistReport::intervention_rate() const {
  if (steps == 0) return 0.0;
  return static_cast<double>(counts[1] + counts[2]) / static_cast<double>(steps);
}

double AssistReport::fraction(AssistType t) const {
  if (steps == 0) return 0.0;
  return static_cast<double>(counts[static_cast<std::size_t>(t)]) / static_cast<double>(steps);
}

namespace {

struct SessionStep {
  AiBeliefFeatures features;
  AssistType chosen = AssistType::DoNothing;
  AssistAction applied;
  double reward = 0.0;  // after costs
  bool last = false;
  bool accepted = false;
  std::size_t episode = 0;
  std::size_t step = 0;
};

struct SessionOutcome {
  std::vector<SessionStep> steps;
  std::vector<double> returns;  // task return per episode
};

SessionOutcome run_session(const EpisodicTask& task, const PolicyBank& bank, std::size_t theta_index,
                           const AssistPolicy& policy, const AssistConfig& cfg, double tau,
                           const std::vector<ActionIndex>& mdp, std::uint64_t seed, std::size_t episodes,
                           bool greedy) {
  const double theta = bank.grid()[theta_index];
  Rng user_rng(derive_seed(seed, {0}));
  Rng ai_rng(derive_seed(seed, {1}));
  NestedParticleSet ps(task, bank, cfg.npf, tau, derive_seed(seed, {2}));
  CrUser user(task, bank.at(theta_index), MemoryBound(theta), tau);
  const double H = cfg.entropy_threshold;
  SessionOutcome out;
  std::vector<CriticalRecord> critical;
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    user.begin_episode(user_rng);
    ps.begin_episode();
    critical.clear();
    double ret = 0.0;
    while (!user.done()) {
      const ActionIndex prev = user.previous_action();
      const std::size_t t = user.t();
      const StateIndex s = user.state();
      const ObservationIndex o = user.observe(user_rng);
      ai_belief_propagate(ps, o, prev);
      if (critical_observation(task, o)) critical.push_back({t, o});
      SessionStep rec;
      rec.features = ai_belief_features(ps, critical, mdp[s], t, H);
      rec.chosen = policy.choose(rec.features, ai_rng, greedy);
      rec.applied = select_assist_content(rec.chosen, s, critical, mdp);
      const auto us = user.respond(user_rng, rec.applied, H);
      ai_belief_reweight(ps, rec.applied, us.decision.action, H);
      rec.reward = ai_reward(us.reward, rec.applied, cfg.costs);
      rec.accepted = us.decision.hint_accepted;
      rec.last = us.done;
      rec.episode = ep;
      rec.step = t;
      ret += us.reward;
      out.steps.push_back(std::move(rec));
    }
    out.returns.push_back(ret);
  }
  return out;
}

}  // namespace

AssistTrainingResult train_assist_policy(const EpisodicTask& task, const PolicyBank& bank, const AssistConfig& cfg,
                                         double tau, std::uint64_t seed) {
  cfg.validate(task.model().num_actions());
  Rng rng(seed);
  const std::size_t G = bank.size();
  PpoLearner learner(G + kAiFeatureExtras, kNumAssistTypes, cfg.ppo, 1.0, rng);
  const auto mdp = mdp_policy(task);
  const std::string digest = cfg.digest();
  std::vector<AssistCurvePoint> curve;
  std::vector<Transition> batch;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const AssistPolicy current(learner.actor(), digest);
    batch.clear();
    AssistCurvePoint point;
    point.epoch = epoch + 1;
    std::size_t episodes = 0, steps = 0, interventions = 0;
    for (std::size_t s = 0; s < cfg.sessions_per_epoch; ++s) {
      const std::uint64_t session_seed = derive_seed(seed, {epoch, s});
      Rng pick(derive_seed(session_seed, {3}));
      const std::size_t k = pick.below(G);
      auto outcome = run_session(task, bank, k, current, cfg, tau, mdp, session_seed, cfg.episodes_per_session, false);
      for (auto& st : outcome.steps) {
        Transition tr;
        const auto dist = current.distribution(st.features);
        tr.action = static_cast<std::size_t>(st.chosen);
        tr.logp = std::log(std::max(dist[tr.action], 1e-300));
        tr.value = learner.value(st.features.values);
        tr.reward = st.reward;
        tr.last = st.last;
        tr.features = std::move(st.features.values);
        point.mean_reward += st.reward;
        ++steps;
        if (type_of(st.applied) != AssistType::DoNothing) ++interventions;
        batch.push_back(std::move(tr));
      }
      for (double r : outcome.returns) {
        point.success_rate += r > 0.0 ? 1.0 : 0.0;
        ++episodes;
      }
    }
    point.mean_reward /= static_cast<double>(episodes);
    point.success_rate /= static_cast<double>(episodes);
    point.intervention_rate = static_cast<double>(interventions) / static_cast<double>(std::max<std::size_t>(steps, 1));
    if (!std::isfinite(point.mean_reward)) throw TrainingDiverged("assistance reward is not finite");
    curve.push_back(point);
    learner.compute_advantages(batch);
    learner.set_progress(static_cast<double>(epoch) / static_cast<double>(cfg.epochs));
    learner.update(batch, rng);
  }
  return {AssistPolicy(learner.actor(), digest), std::move(curve)};
}

std::vector<AssistReport> evaluate_assistance(const EpisodicTask& task, const PolicyBank& bank,
                                              const AssistPolicy& policy, const AssistConfig& cfg,
                                              const std::vector<double>& thetas, std::size_t episodes, double tau,
                                              std::uint64_t seed, bool greedy) {
  cfg.validate(task.model().num_actions());
  const auto mdp = mdp_policy(task);
  std::vector<AssistReport> reports;
  for (std::size_t n = 0; n < thetas.size(); ++n) {
    const std::size_t k = bank.index_of(thetas[n]);
    AssistReport rep;
    rep.theta = bank.grid()[k];
    std::size_t session = 0;
    while (rep.episodes < episodes) {
      const std::size_t count = std::min(cfg.episodes_per_session, episodes - rep.episodes);
      const auto outcome = run_session(task, bank, k, policy, cfg, tau, mdp,
                                       derive_seed(seed, {static_cast<std::uint64_t>(k), session}), count, greedy);
      for (const auto& st : outcome.steps) {
        const auto type = type_of(st.applied);
        ++rep.counts[static_cast<std::size_t>(type)];
        ++rep.steps;
        if (st.accepted) ++rep.accepted_action_hints;
        rep.mean_reward += st.reward;
        rep.total_cost += cfg.costs.of(st.applied);
        rep.events.push_back({rep.episodes + st.episode, st.step, type, st.accepted});
      }
      for (double r : outcome.returns) rep.success_rate += r > 0.0 ? 1.0 : 0.0;
      rep.episodes += count;
      ++session;
    }
    rep.mean_reward /= static_cast<double>(rep.episodes);
    rep.success_rate /= static_cast<double>(rep.episodes);
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace cogbound
