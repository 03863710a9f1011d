#include "cogbound/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cogbound/error.hpp"

namespace cogbound {

namespace {

constexpr double kGradClipNorm = 1.0;
constexpr std::uint64_t kEvalStream = 0xe7a1;

void clip_gradient(std::vector<double>& g) {
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > kGradClipNorm) {
    for (double& v : g) v *= kGradClipNorm / norm;
  }
}

}  // namespace

nlohmann::json PpoConfig::to_json() const {
  return {{"iterations", iterations},
          {"episodes_per_iteration", episodes_per_iteration},
          {"epochs", epochs},
          {"minibatch", minibatch},
          {"hidden", hidden},
          {"learning_rate", learning_rate},
          {"value_learning_rate", value_learning_rate},
          {"clip", clip},
          {"entropy_coef", entropy_coef},
          {"gamma", gamma},
          {"gae_lambda", gae_lambda},
          {"eval_every", eval_every},
          {"eval_episodes", eval_episodes},
          {"patience", patience},
          {"anneal", anneal},
          {"restarts", restarts}};
}

PpoConfig PpoConfig::from_json(const nlohmann::json& j) {
  PpoConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.episodes_per_iteration = j.value("episodes_per_iteration", c.episodes_per_iteration);
  c.epochs = j.value("epochs", c.epochs);
  c.minibatch = j.value("minibatch", c.minibatch);
  c.hidden = j.value("hidden", c.hidden);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.value_learning_rate = j.value("value_learning_rate", c.value_learning_rate);
  c.clip = j.value("clip", c.clip);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.patience = j.value("patience", c.patience);
  c.anneal = j.value("anneal", c.anneal);
  c.restarts = j.value("restarts", c.restarts);
  if (c.iterations == 0 || c.episodes_per_iteration == 0 || c.epochs == 0 || c.minibatch == 0 ||
      c.hidden == 0 || c.eval_every == 0 || c.eval_episodes == 0 || c.restarts == 0) {
    throw ConfigError("trainer counts must be positive");
  }
  return c;
}

std::string PpoConfig::digest() const {
  Fnv1a h;
  h.update(to_json().dump());
  return h.hex();
}

PpoLearner::PpoLearner(std::size_t input_size, std::size_t num_actions, const PpoConfig& cfg,
                       double logit_scale, Rng& rng)
    : cfg_(cfg),
      scale_(logit_scale),
      actor_({input_size, cfg.hidden, cfg.hidden, num_actions}, rng, 0.01),
      critic_({input_size, cfg.hidden, cfg.hidden, 1}, rng, 1.0),
      actor_opt_(actor_.params().size(), cfg.learning_rate),
      critic_opt_(critic_.params().size(), cfg.value_learning_rate) {}

ActionDistribution PpoLearner::distribution(std::span<const double> features) const {
  thread_local std::vector<double> q;
  actor_.forward(features, q);
  return softmax_policy(q, scale_);
}

double PpoLearner::value(std::span<const double> features) const {
  thread_local std::vector<double> v;
  critic_.forward(features, v);
  return v[0];
}

void PpoLearner::set_progress(double fraction) {
  if (!cfg_.anneal) return;
  const double keep = std::clamp(1.0 - fraction, 0.0, 1.0);
  actor_opt_.set_lr(cfg_.learning_rate * keep);
  critic_opt_.set_lr(cfg_.value_learning_rate * keep);
}

void PpoLearner::load(const Mlp& actor, const Mlp& critic) {
  if (actor.params().size() != actor_.params().size() || critic.params().size() != critic_.params().size()) {
    throw InvalidInput("warm-start networks do not match the learner shape");
  }
  actor_ = actor;
  critic_ = critic;
}

void PpoLearner::compute_advantages(std::vector<Transition>& batch) const {
  double gae = 0.0;
  double next_value = 0.0;
  for (std::size_t k = batch.size(); k-- > 0;) {
    auto& tr = batch[k];
    if (tr.last) {
      gae = 0.0;
      next_value = 0.0;
    }
    const double delta = tr.reward + cfg_.gamma * next_value - tr.value;
    gae = delta + cfg_.gamma * cfg_.gae_lambda * gae;
    tr.advantage = gae;
    tr.ret = gae + tr.value;
    next_value = tr.value;
  }
}

void PpoLearner::update(std::vector<Transition>& batch, Rng& rng) {
  if (batch.empty()) return;
  double mean = 0.0;
  for (const auto& tr : batch) mean += tr.advantage;
  mean /= static_cast<double>(batch.size());
  double var = 0.0;
  for (const auto& tr : batch) var += (tr.advantage - mean) * (tr.advantage - mean);
  const double sd = std::sqrt(var / static_cast<double>(batch.size())) + 1e-8;

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> actor_grad, critic_grad, q, v, g_out;
  Mlp::Cache actor_cache, critic_cache;
  const std::size_t nA = actor_.output_size();

  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg_.minibatch) {
      const std::size_t end = std::min(order.size(), start + cfg_.minibatch);
      const double inv_n = 1.0 / static_cast<double>(end - start);
      actor_grad.assign(actor_.params().size(), 0.0);
      critic_grad.assign(critic_.params().size(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& tr = batch[order[k]];
        const double adv = (tr.advantage - mean) / sd;

        actor_.forward(tr.features, q, actor_cache);
        const auto pi = softmax_policy(q, scale_);
        const double logp = std::log(std::max(pi.probs[tr.action], 1e-300));
        const double ratio = std::exp(logp - tr.logp);
        const bool active = adv >= 0.0 ? ratio < 1.0 + cfg_.clip : ratio > 1.0 - cfg_.clip;
        double entropy = 0.0;
        for (double p : pi.probs) {
          if (p > 0.0) entropy -= p * std::log(p);
        }
        g_out.assign(nA, 0.0);
        for (std::size_t a = 0; a < nA; ++a) {
          double gz = 0.0;
          if (active) gz -= adv * ratio * ((a == tr.action ? 1.0 : 0.0) - pi.probs[a]);
          if (pi.probs[a] > 0.0) gz += cfg_.entropy_coef * pi.probs[a] * (std::log(pi.probs[a]) + entropy);
          g_out[a] = gz * scale_ * inv_n;
        }
        actor_.backward(actor_cache, g_out, actor_grad);

        critic_.forward(tr.features, v, critic_cache);
        g_out.assign(1, (v[0] - tr.ret) * inv_n);
        critic_.backward(critic_cache, g_out, critic_grad);
      }
      clip_gradient(actor_grad);
      clip_gradient(critic_grad);
      actor_opt_.step(actor_.params(), actor_grad);
      critic_opt_.step(critic_.params(), critic_grad);
    }
  }
}

CurvePoint evaluate_policy(const EpisodicTask& task, const CrPolicy& policy, const MemoryBound& bound,
                           double tau, std::size_t episodes, std::uint64_t seed, bool greedy) {
  CurvePoint p;
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng rng(derive_seed(seed, {e}));
    const auto traj = run_cr_episode(task, policy, bound, tau, rng, greedy);
    p.mean_return += traj.total_return;
    p.success_rate += traj.success ? 1.0 : 0.0;
  }
  p.mean_return /= static_cast<double>(episodes);
  p.success_rate /= static_cast<double>(episodes);
  return p;
}

namespace {

struct RunOutcome {
  std::optional<CrPolicy> best;
  std::optional<Mlp> critic;
  double score = -std::numeric_limits<double>::infinity();
};

RunOutcome train_run(const EpisodicTask& task, const MemoryBound& bound, double tau, const PpoConfig& cfg,
                     std::uint64_t seed, std::uint64_t run_seed, std::size_t restart,
                     const TrainingResult* warm, std::vector<CurvePoint>& curve) {
  const auto& model = task.model();
  Rng rng(run_seed);
  PpoLearner learner(model.num_states() + 1, model.num_actions(), cfg, tau, rng);
  if (warm != nullptr) {
    const auto* net = std::get_if<Mlp>(&warm->policy.evaluator());
    if (net == nullptr) throw InvalidInput("warm start requires a network policy");
    learner.load(*net, warm->critic);
  }
  PolicyMeta meta{bound.theta(), tau, seed, cfg.digest(), task.max_steps()};

  RunOutcome out;
  std::size_t zero_streak = 0;
  std::vector<Transition> batch;
  std::vector<double> features;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const CrPolicy current(learner.actor(), meta);
    CrUser user(task, current, bound, tau);
    batch.clear();
    for (std::size_t e = 0; e < cfg.episodes_per_iteration; ++e) {
      user.begin_episode(rng);
      while (!user.done()) {
        const auto step = user.step(rng);
        Transition tr;
        policy_features(user.belief().probs, user.t() - 1, task.max_steps(), tr.features);
        tr.action = step.decision.action;
        tr.logp = std::log(std::max(step.decision.dist.probs[tr.action], 1e-300));
        tr.value = learner.value(tr.features);
        tr.reward = step.reward;
        tr.last = step.done;
        batch.push_back(std::move(tr));
      }
    }
    learner.compute_advantages(batch);
    learner.set_progress(static_cast<double>(it) / static_cast<double>(cfg.iterations));
    learner.update(batch, rng);

    if ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations) {
      CrPolicy candidate(learner.actor(), meta);
      auto point = evaluate_policy(task, candidate, bound, tau, cfg.eval_episodes,
                                   derive_seed(seed, {kEvalStream}), false);
      point.restart = restart;
      point.iteration = it + 1;
      curve.push_back(point);
      if (!std::isfinite(point.mean_return)) {
        throw TrainingDiverged("evaluation return is not finite at iteration " + std::to_string(it + 1));
      }
      zero_streak = point.mean_return == 0.0 ? zero_streak + 1 : 0;
      if (zero_streak >= cfg.patience) {
        throw TrainingDiverged("evaluation return stayed at zero for " + std::to_string(zero_streak) +
                               " evaluations (theta " + theta_label(bound.theta()) + ")");
      }
      if (point.mean_return > out.score) {
        out.score = point.mean_return;
        out.best.emplace(std::move(candidate));
        out.critic = learner.critic();
      }
    }
  }
  return out;
}

}  // namespace

TrainingResult train_policy(const EpisodicTask& task, const MemoryBound& bound, double tau,
                            const PpoConfig& cfg, std::uint64_t seed, const TrainingResult* warm) {
  std::vector<CurvePoint> curve;
  RunOutcome best;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    auto run = train_run(task, bound, tau, cfg, seed, derive_seed(seed, {r}), r, r == 0 ? warm : nullptr, curve);
    if (run.score > best.score) best = std::move(run);
  }
  return {*std::move(best.best), *std::move(best.critic), std::move(curve)};
}

CrPolicy train_tabular_policy(const EpisodicTask& task, const MemoryBound& bound, double tau,
                              const TabularConfig& cfg, std::uint64_t seed) {
  const auto& model = task.model();
  TabularQ table(model.num_states(), model.num_actions(), cfg.bins);
  Rng rng(seed);
  const Belief initial = task.initial_belief();
  std::vector<double> belief, scratch;
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    StateIndex s = task.sample_initial_state(rng);
    InternalMemory mem;
    ActionIndex prev = kNoAction;
    std::size_t pending_key = 0;
    ActionIndex pending_action = 0;
    double pending_reward = 0.0;
    bool pending = false;
    for (std::size_t t = 0; t < task.max_steps(); ++t) {
      const auto o = sample_observation(model, s, rng);
      memory_step_inplace(model, mem, o, prev, bound, rng);
      if (!biased_belief_into(model, mem, initial, belief, scratch)) break;
      const auto key = table.key(belief);
      auto row = table.row(key);
      if (pending) {
        auto& q = table.row(pending_key)[pending_action];
        q += cfg.learning_rate * (pending_reward + cfg.gamma * *std::max_element(row.begin(), row.end()) - q);
      }
      ActionIndex a = static_cast<ActionIndex>(std::max_element(row.begin(), row.end()) - row.begin());
      if (rng.bernoulli(cfg.epsilon)) a = rng.below(model.num_actions());
      const auto next = sample_transition(model, s, a, rng);
      pending_key = key;
      pending_action = a;
      pending_reward = task.reward(s, a, next, t + 1);
      pending = true;
      prev = a;
      s = next;
      if (task.terminal(s)) break;
    }
    if (pending) {
      auto& q = table.row(pending_key)[pending_action];
      q += cfg.learning_rate * (pending_reward - q);
    }
  }
  Fnv1a h;
  h.update(static_cast<std::uint64_t>(cfg.episodes));
  h.update(static_cast<std::uint64_t>(cfg.bins));
  h.update(cfg.learning_rate);
  h.update(cfg.epsilon);
  h.update(cfg.gamma);
  return CrPolicy(std::move(table), PolicyMeta{bound.theta(), tau, seed, h.hex(), task.max_steps()});
}

}  // namespace cogbound
