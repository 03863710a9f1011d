#include "cogbound/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cogbound/error.hpp"

namespace cogbound {

namespace {

constexpr const char* kPolicyFormat = "cogbound.policy";
constexpr const char* kBankFormat = "cogbound.policy_bank";
constexpr int kBankVersion = 1;
constexpr double kThetaMatchTolerance = 1e-9;

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPolicy("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace

const char* assist_type_name(AssistType t) {
  switch (t) {
    case AssistType::DoNothing:
      return "DoNothing";
    case AssistType::ActionHint:
      return "ActionHint";
    case AssistType::MemoryHint:
      return "MemoryHint";
  }
  return "?";
}

void apply_memory_hint_inplace(InternalMemory& mem, std::size_t k, ObservationIndex o_k) {
  if (k >= mem.size()) {
    throw IndexOutOfRange("memory hint index " + std::to_string(k) + " beyond memory length " +
                          std::to_string(mem.size()));
  }
  mem.entries[k].obs = o_k;
}

InternalMemory apply_memory_hint(InternalMemory mem, std::size_t k, ObservationIndex o_k) {
  apply_memory_hint_inplace(mem, k, o_k);
  return mem;
}

TabularQ::TabularQ(std::size_t num_states, std::size_t num_actions, std::size_t bins)
    : num_states_(num_states), num_actions_(num_actions), bins_(bins),
      q_(num_states * bins * num_actions, 0.0) {
  if (num_states == 0 || num_actions == 0 || bins == 0) throw InvalidInput("empty tabular q");
}

std::size_t TabularQ::key(std::span<const double> belief) const {
  if (belief.size() != num_states_) throw InvalidInput("belief has wrong dimension for q table");
  std::size_t best = 0;
  for (std::size_t s = 1; s < belief.size(); ++s) {
    if (belief[s] > belief[best]) best = s;
  }
  // Mass of the mode lies in [1/|S|, 1]; bucket it uniformly.
  const double lo = 1.0 / static_cast<double>(num_states_);
  const double frac = num_states_ == 1 ? 1.0 : (belief[best] - lo) / (1.0 - lo);
  const auto bucket = std::min(bins_ - 1, static_cast<std::size_t>(std::max(0.0, frac) * static_cast<double>(bins_)));
  return best * bins_ + bucket;
}

nlohmann::json TabularQ::to_json() const {
  return {{"states", num_states_}, {"actions", num_actions_}, {"bins", bins_}, {"q", q_}};
}

TabularQ TabularQ::from_json(const nlohmann::json& j) {
  TabularQ t(j.at("states").get<std::size_t>(), j.at("actions").get<std::size_t>(), j.at("bins").get<std::size_t>());
  auto q = j.at("q").get<std::vector<double>>();
  if (q.size() != t.q_.size()) throw IntegrityError("q table size mismatch");
  t.q_ = std::move(q);
  return t;
}

void policy_features(std::span<const double> belief, std::size_t step, std::size_t horizon,
                     std::vector<double>& out) {
  out.assign(belief.begin(), belief.end());
  out.push_back(static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(horizon, 1)));
}

CrPolicy::CrPolicy(Mlp net, PolicyMeta meta) : meta_(std::move(meta)), eval_(std::move(net)) {}
CrPolicy::CrPolicy(TabularQ table, PolicyMeta meta) : meta_(std::move(meta)), eval_(std::move(table)) {}


std::size_t CrPolicy::num_actions() const {
  if (const auto* net = std::get_if<Mlp>(&eval_)) return net->output_size();
  return std::get<TabularQ>(eval_).num_actions();
}

void CrPolicy::q_values(std::span<const double> belief, std::size_t step, std::vector<double>& out) const {
  if (const auto* net = std::get_if<Mlp>(&eval_)) {
    thread_local std::vector<double> features;
    policy_features(belief, step, meta_.step_horizon, features);
    net->forward(features, out);
    return;
  }
  const auto& table = std::get<TabularQ>(eval_);
  const auto row = table.row(table.key(belief));
  out.assign(row.begin(), row.end());
}

ActionDistribution CrPolicy::distribution(std::span<const double> belief, std::size_t step, double tau) const {
  thread_local std::vector<double> q;
  q_values(belief, step, q);
  return softmax_policy(q, tau);
}

ActionIndex CrPolicy::greedy(std::span<const double> belief, std::size_t step) const {
  thread_local std::vector<double> q;
  q_values(belief, step, q);
  return static_cast<ActionIndex>(std::max_element(q.begin(), q.end()) - q.begin());
}

std::string CrPolicy::digest() const {
  Fnv1a h;
  h.update(meta_.theta);
  h.update(meta_.tau);
  h.update(meta_.seed);
  h.update(meta_.trainer_digest);
  h.update(static_cast<std::uint64_t>(meta_.step_horizon));
  if (const auto* net = std::get_if<Mlp>(&eval_)) {
    h.update(std::string("mlp"));
    for (auto n : net->layer_sizes()) h.update(static_cast<std::uint64_t>(n));
    for (double p : net->params()) h.update(p);
  } else {
    const auto& table = std::get<TabularQ>(eval_);
    h.update(std::string("tabular"));
    h.update(static_cast<std::uint64_t>(table.num_keys()));
    for (double q : table.values()) h.update(q);
  }
  return h.hex();
}

nlohmann::json CrPolicy::to_json() const {
  nlohmann::json j;
  j["format"] = kPolicyFormat;
  j["version"] = kBankVersion;
  j["meta"] = {{"theta", meta_.theta},
               {"tau", meta_.tau},
               {"seed", meta_.seed},
               {"trainer_digest", meta_.trainer_digest},
               {"step_horizon", meta_.step_horizon}};
  if (const auto* net = std::get_if<Mlp>(&eval_)) {
    j["evaluator"] = {{"kind", "mlp"}, {"net", net->to_json()}};
  } else {
    j["evaluator"] = {{"kind", "tabular"}, {"table", std::get<TabularQ>(eval_).to_json()}};
  }
  j["digest"] = digest();
  return j;
}

CrPolicy CrPolicy::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != kPolicyFormat) throw IntegrityError("not a cogbound.policy document");
    if (j.at("version").get<int>() != kBankVersion) throw VersionMismatch("unsupported policy schema version");
    const auto& m = j.at("meta");
    PolicyMeta meta{m.at("theta").get<double>(), m.at("tau").get<double>(), m.at("seed").get<std::uint64_t>(),
                    m.at("trainer_digest").get<std::string>(), m.at("step_horizon").get<std::size_t>()};
    const auto& e = j.at("evaluator");
    const auto kind = e.at("kind").get<std::string>();
    std::optional<CrPolicy> p;
    if (kind == "mlp") {
      p.emplace(Mlp::from_json(e.at("net")), meta);
    } else if (kind == "tabular") {
      p.emplace(TabularQ::from_json(e.at("table")), meta);
    } else {
      throw IntegrityError("unknown evaluator kind " + kind);
    }
    if (j.contains("digest") && j.at("digest").get<std::string>() != p->digest()) {
      throw IntegrityError("policy digest mismatch for theta " + theta_label(meta.theta));
    }
    return *std::move(p);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed policy json: ") + e.what());
  }
}

Decision act(const CrPolicy& policy, const Belief& belief, std::size_t step, double tau, Rng& rng) {
  Decision d;
  d.dist = policy.distribution(belief.probs, step, tau);
  d.entropy = policy_entropy(d.dist);
  d.action = sample_action(d.dist, rng);
  return d;
}

Decision decide(const CrPolicy& policy, const Belief& belief, std::size_t step, double tau,
                const AssistAction& assist, double entropy_threshold, Rng& rng, bool greedy) {
  Decision d;
  if (greedy) {
    d.dist = policy.distribution(belief.probs, step, tau);
    d.entropy = policy_entropy(d.dist);
    d.action = policy.greedy(belief.probs, step);
  } else {
    d = act(policy, belief, step, tau, rng);
  }
  if (const auto* ah = std::get_if<ActionHint>(&assist)) {
    if (d.entropy >= entropy_threshold) {
      d.action = ah->action;
      d.hint_accepted = true;
    }
  }
  return d;
}

PolicyBank::PolicyBank(std::vector<double> grid, std::vector<CrPolicy> policies)
    : grid_(std::move(grid)), policies_(std::move(policies)) {
  if (grid_.empty()) throw InvalidInput("policy bank grid is empty");
  if (grid_.size() != policies_.size()) throw MissingPolicy("policy bank needs one policy per grid value");
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (i > 0 && !(grid_[i] > grid_[i - 1])) throw InvalidInput("policy bank grid must be strictly ascending");
    if (std::abs(policies_[i].meta().theta - grid_[i]) > kThetaMatchTolerance) {
      throw MissingPolicy("policy at grid index " + std::to_string(i) + " was trained for theta " +
                          theta_label(policies_[i].meta().theta));
    }
  }
}

std::optional<std::size_t> PolicyBank::find(double theta) const {
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (std::abs(grid_[i] - theta) <= kThetaMatchTolerance) return i;
  }
  return std::nullopt;
}

std::size_t PolicyBank::index_of(double theta) const {
  auto i = find(theta);
  if (!i) throw MissingPolicy("no policy for theta " + theta_label(theta));
  return *i;
}

const CrPolicy& PolicyBank::for_theta(double theta) const { return policies_[index_of(theta)]; }

std::vector<double> default_theta_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

std::string theta_label(double theta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", theta);
  std::string s(buf);
  while (s.size() > 3 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

void save_bank(const PolicyBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = kBankFormat;
  manifest["version"] = kBankVersion;
  manifest["grid"] = bank.grid();
  manifest["policies"] = nlohmann::json::array();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto& p = bank.at(i);
    const std::string file = "policy_theta_" + theta_label(bank.grid()[i]) + ".json";
    write_json_file(dir / file, p.to_json());
    manifest["policies"].push_back({{"theta", bank.grid()[i]}, {"file", file}, {"digest", p.digest()}});
  }
  write_json_file(dir / "bank.json", manifest);
}

PolicyBank load_bank(const std::filesystem::path& dir) {
  const auto manifest = read_json_file(dir / "bank.json");
  try {
    if (manifest.value("format", std::string{}) != kBankFormat) throw IntegrityError("not a policy bank manifest");
    if (manifest.at("version").get<int>() != kBankVersion) {
      throw VersionMismatch("policy bank schema version " + manifest.at("version").dump() + " != " +
                            std::to_string(kBankVersion));
    }
    const auto grid = manifest.at("grid").get<std::vector<double>>();
    std::vector<CrPolicy> policies;
    for (double theta : grid) {
      const nlohmann::json* entry = nullptr;
      for (const auto& e : manifest.at("policies")) {
        if (std::abs(e.at("theta").get<double>() - theta) <= kThetaMatchTolerance) entry = &e;
      }
      if (entry == nullptr) throw MissingPolicy("bank manifest lacks theta " + theta_label(theta));
      const auto path = dir / entry->at("file").get<std::string>();
      if (!std::filesystem::exists(path)) throw MissingPolicy("missing policy file " + path.string());
      auto policy = CrPolicy::from_json(read_json_file(path));
      if (policy.digest() != entry->at("digest").get<std::string>()) {
        throw IntegrityError("digest of " + path.string() + " does not match the manifest");
      }
      policies.push_back(std::move(policy));
    }
    return PolicyBank(grid, std::move(policies));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed bank manifest: ") + e.what());
  }
}

std::string memory_digest(const InternalMemory& mem) {
  Fnv1a h;
  for (const auto& e : mem.entries) {
    h.update(static_cast<std::uint64_t>(e.obs));
    h.update(static_cast<std::uint64_t>(e.act));
  }
  return h.hex();
}

nlohmann::json Trajectory::to_json() const {
  nlohmann::json steps_json = nlohmann::json::array();
  for (const auto& s : steps) {
    steps_json.push_back({{"t", s.t},
                          {"state", s.state},
                          {"obs", s.obs},
                          {"memory", s.memory_digest},
                          {"belief_argmax", s.belief_argmax},
                          {"belief_max", s.belief_max},
                          {"action", s.action},
                          {"entropy", s.entropy},
                          {"reward", s.reward},
                          {"assist", assist_type_name(s.assist)},
                          {"hint_accepted", s.hint_accepted}});
  }
  return {{"theta", theta}, {"tau", tau},       {"seed", seed},
          {"success", success}, {"return", total_return}, {"steps", std::move(steps_json)}};
}

CrUser::CrUser(const EpisodicTask& task, const CrPolicy& policy, MemoryBound bound, double tau)
    : task_(&task), policy_(&policy), bound_(bound), tau_(tau), initial_(task.initial_belief()) {}

void CrUser::begin_episode(Rng& rng) { begin_episode_at(task_->sample_initial_state(rng)); }

void CrUser::begin_episode_at(StateIndex s) {
  state_ = s;
  t_ = 0;
  done_ = false;
  observed_ = false;
  prev_action_ = kNoAction;
  memory_.entries.clear();
}

UserStep CrUser::step(Rng& rng, const AssistAction& assist, double entropy_threshold, bool greedy) {
  observe(rng);
  return respond(rng, assist, entropy_threshold, greedy);
}

ObservationIndex CrUser::observe(Rng& rng) {
  if (done_) throw InvalidInput("episode already finished");
  if (observed_) throw InvalidInput("observation already received for this step");
  const auto& model = task_->model();
  obs_ = sample_observation(model, state_, rng);
  memory_step_inplace(model, memory_, obs_, prev_action_, bound_, rng);
  observed_ = true;
  return obs_;
}

UserStep CrUser::respond(Rng& rng, const AssistAction& assist, double entropy_threshold, bool greedy) {
  if (!observed_) throw InvalidInput("respond called before observe");
  const auto& model = task_->model();
  UserStep out;
  out.state = state_;
  out.obs = obs_;
  if (const auto* mh = std::get_if<MemoryHint>(&assist)) apply_memory_hint_inplace(memory_, mh->index, mh->obs);
  if (!biased_belief_into(model, memory_, initial_, belief_.probs, scratch_)) {
    throw CorruptedMemoryContradiction("user memory has zero probability under the model");
  }
  out.decision = decide(*policy_, belief_, t_, tau_, assist, entropy_threshold, rng, greedy);
  out.next_state = sample_transition(model, state_, out.decision.action, rng);
  ++t_;
  out.reward = task_->reward(state_, out.decision.action, out.next_state, t_);
  prev_action_ = out.decision.action;
  state_ = out.next_state;
  observed_ = false;
  done_ = task_->terminal(state_) || t_ >= task_->max_steps();
  out.done = done_;
  return out;
}

Trajectory run_cr_episode(const EpisodicTask& task, const CrPolicy& policy, const MemoryBound& bound,
                          double tau, Rng& rng, bool greedy) {
  Trajectory traj;
  traj.theta = bound.theta();
  traj.tau = tau;
  traj.seed = policy.meta().seed;
  CrUser user(task, policy, bound, tau);
  user.begin_episode(rng);
  while (!user.done()) {
    const auto step = user.step(rng, DoNothing{}, 0.0, greedy);
    StepRecord rec;
    rec.t = user.t() - 1;
    rec.state = step.state;
    rec.obs = step.obs;
    rec.memory_digest = memory_digest(user.memory());
    const auto& b = user.belief().probs;
    rec.belief_argmax = static_cast<StateIndex>(std::max_element(b.begin(), b.end()) - b.begin());
    rec.belief_max = b[rec.belief_argmax];
    rec.action = step.decision.action;
    rec.entropy = step.decision.entropy;
    rec.reward = step.reward;
    traj.total_return += step.reward;
    traj.steps.push_back(std::move(rec));
  }
  traj.success = traj.total_return > 0.0;
  return traj;
}

}  // namespace cogbound
