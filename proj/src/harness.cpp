#include "cogbound/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include "cogbound/error.hpp"
#include "cogbound/micro.hpp"

namespace cogbound {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kBankStream = 11;
constexpr std::uint64_t kGalleryStream = 12;
constexpr std::uint64_t kUserStream = 13;
constexpr std::uint64_t kFilterStream = 14;
constexpr std::uint64_t kAssistTrainStream = 15;
constexpr std::uint64_t kAssistEvalStream = 16;
constexpr std::uint64_t kOracleStream = 17;

/// Runs fn(0..n-1) on up to `workers` threads. Results must be written by
/// index so the schedule cannot influence outputs. The first failure (by
/// index) is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

template <class T>
T take(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void expect_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

// ---- τ schedule ---------------------------------------------------------------

TauSchedule TauSchedule::fixed(double tau) {
  TauSchedule s;
  s.mode = Mode::Fixed;
  s.value = tau;
  return s;
}

TauSchedule TauSchedule::adaptive(double start, double end, std::size_t steps) {
  TauSchedule s;
  s.mode = Mode::Adaptive;
  s.start = start;
  s.end = end;
  s.steps = steps;
  return s;
}

double TauSchedule::at(std::size_t t) const {
  if (mode == Mode::Fixed) return value;
  if (steps <= 1) return end;
  const std::size_t k = std::clamp<std::size_t>(t, 1, steps) - 1;
  return start * std::pow(end / start, static_cast<double>(k) / static_cast<double>(steps - 1));
}

std::string TauSchedule::label() const {
  if (mode == Mode::Fixed) return "tau_" + label_num(value);
  return "adaptive_" + label_num(start) + "_to_" + label_num(end);
}

nlohmann::json TauSchedule::to_json() const {
  if (mode == Mode::Fixed) return {{"mode", "fixed"}, {"value", value}};
  return {{"mode", "adaptive"}, {"start", start}, {"end", end}, {"steps", steps}};
}

TauSchedule TauSchedule::from_json(const nlohmann::json& j) {
  if (j.is_number()) return fixed(j.get<double>());
  expect_keys(j, {"mode", "value", "start", "end", "steps"}, "tau schedule");
  const auto mode = take<std::string>(j, "mode", "fixed");
  TauSchedule s;
  if (mode == "fixed") {
    s = fixed(take(j, "value", 3.0));
    if (!(s.value > 0.0)) throw ConfigError("tau must be positive");
  } else if (mode == "adaptive") {
    s = adaptive(take(j, "start", 5.0), take(j, "end", 1.0), take<std::size_t>(j, "steps", 100));
    if (!(s.start > 0.0) || !(s.end > 0.0) || s.steps == 0) {
      throw ConfigError("adaptive schedule values must be positive");
    }
  } else {
    throw ConfigError("tau mode must be 'fixed' or 'adaptive'");
  }
  return s;
}

// ---- configuration ------------------------------------------------------------

PpoConfig ExperimentConfig::default_trainer() {
  PpoConfig p;
  p.iterations = 500;
  p.entropy_coef = 0.02;
  return p;
}

nlohmann::json ExperimentConfig::to_json() const {
  const auto& tab = oracle.tabular;
  return {{"task", task.to_json()},
          {"theta_grid", theta_grid},
          {"train_tau", train_tau},
          {"tau", tau.to_json()},
          {"tau_grid", tau_grid},
          {"sweep_adaptive", sweep_adaptive},
          {"adaptive", adaptive.to_json()},
          {"seed", seed},
          {"seeds", seeds},
          {"trainer", trainer.to_json()},
          {"warm_start", warm_start},
          {"npf", npf.to_json()},
          {"infer_steps", infer_steps},
          {"gallery_episodes", gallery_episodes},
          {"gallery_trajectories", gallery_trajectories},
          {"assist", assist.to_json()},
          {"assist_eval_episodes", assist_eval_episodes},
          {"oracle",
           {{"seeds", oracle.seeds},
            {"inner_particles", oracle.inner_particles},
            {"particle_sweep", oracle.particle_sweep},
            {"tolerance", oracle.tolerance},
            {"tau", oracle.tau},
            {"budget", oracle.budget},
            {"tabular",
             {{"episodes", tab.episodes},
              {"bins", tab.bins},
              {"learning_rate", tab.learning_rate},
              {"epsilon", tab.epsilon},
              {"gamma", tab.gamma}}}}},
          {"memory_reset", true},
          {"parallelism", parallelism},
          {"out_dir", out_dir.string()}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  expect_keys(j,
              {"task", "theta_grid", "train_tau", "tau", "tau_grid", "sweep_adaptive", "adaptive", "seed", "seeds",
               "trainer", "warm_start", "npf", "infer_steps", "gallery_episodes", "gallery_trajectories", "assist",
               "assist_eval_episodes", "oracle", "memory_reset", "parallelism", "out_dir"},
              "configuration");
  ExperimentConfig c;
  try {
    if (j.contains("task")) c.task = TmazeConfig::from_json(j.at("task"));
    c.theta_grid = take(j, "theta_grid", c.theta_grid);
    c.train_tau = take(j, "train_tau", c.train_tau);
    if (j.contains("tau")) c.tau = TauSchedule::from_json(j.at("tau"));
    c.tau_grid = take(j, "tau_grid", c.tau_grid);
    c.sweep_adaptive = take(j, "sweep_adaptive", c.sweep_adaptive);
    if (j.contains("adaptive")) c.adaptive = TauSchedule::from_json(j.at("adaptive"));
    c.seed = take(j, "seed", c.seed);
    c.seeds = take(j, "seeds", c.seeds);
    if (j.contains("trainer")) {
      auto merged = c.trainer.to_json();
      merged.merge_patch(j.at("trainer"));
      c.trainer = PpoConfig::from_json(merged);
    }
    c.warm_start = take(j, "warm_start", c.warm_start);
    if (j.contains("npf")) c.npf = NpfConfig::from_json(j.at("npf"));
    c.infer_steps = take(j, "infer_steps", c.infer_steps);
    c.gallery_episodes = take(j, "gallery_episodes", c.gallery_episodes);
    c.gallery_trajectories = take(j, "gallery_trajectories", c.gallery_trajectories);
    if (j.contains("assist")) {
      auto merged = c.assist.to_json();
      merged.merge_patch(j.at("assist"));
      c.assist = AssistConfig::from_json(merged);
    }
    c.assist_eval_episodes = take(j, "assist_eval_episodes", c.assist_eval_episodes);
    if (j.contains("oracle")) {
      const auto& o = j.at("oracle");
      expect_keys(o, {"seeds", "inner_particles", "particle_sweep", "tolerance", "tau", "budget", "tabular"}, "oracle");
      c.oracle.seeds = take(o, "seeds", c.oracle.seeds);
      c.oracle.inner_particles = take(o, "inner_particles", c.oracle.inner_particles);
      c.oracle.particle_sweep = take(o, "particle_sweep", c.oracle.particle_sweep);
      c.oracle.tolerance = take(o, "tolerance", c.oracle.tolerance);
      c.oracle.tau = take(o, "tau", c.oracle.tau);
      c.oracle.budget = take(o, "budget", c.oracle.budget);
      if (o.contains("tabular")) {
        const auto& t = o.at("tabular");
        c.oracle.tabular.episodes = take(t, "episodes", c.oracle.tabular.episodes);
        c.oracle.tabular.bins = take(t, "bins", c.oracle.tabular.bins);
        c.oracle.tabular.learning_rate = take(t, "learning_rate", c.oracle.tabular.learning_rate);
        c.oracle.tabular.epsilon = take(t, "epsilon", c.oracle.tabular.epsilon);
        c.oracle.tabular.gamma = take(t, "gamma", c.oracle.tabular.gamma);
      }
    }
    if (!take(j, "memory_reset", true)) {
      throw ConfigError("memory_reset must be true: memories always restart empty at episode boundaries");
    }
    c.parallelism = take(j, "parallelism", c.parallelism);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }

  if (c.theta_grid.empty()) throw ConfigError("theta_grid must not be empty");
  for (std::size_t i = 0; i < c.theta_grid.size(); ++i) {
    if (c.theta_grid[i] < 0.0 || c.theta_grid[i] > 1.0) throw ConfigError("theta values must lie in [0, 1]");
    if (i > 0 && !(c.theta_grid[i] > c.theta_grid[i - 1])) throw ConfigError("theta_grid must be strictly ascending");
  }
  if (!(c.train_tau > 0.0)) throw ConfigError("train_tau must be positive");
  for (double t : c.tau_grid) {
    if (!(t > 0.0)) throw ConfigError("tau_grid values must be positive");
  }
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.infer_steps == 0 || c.gallery_episodes == 0 || c.assist_eval_episodes == 0) {
    throw ConfigError("episode and step budgets must be positive");
  }
  if (c.oracle.seeds == 0 || c.oracle.inner_particles == 0 || !(c.oracle.tau > 0.0) || c.oracle.budget == 0) {
    throw ConfigError("oracle settings must be positive");
  }
  return c;
}

std::string ExperimentConfig::digest() const {
  auto j = to_json();
  j.erase("out_dir");
  j.erase("parallelism");
  Fnv1a h;
  h.update(j.dump());
  return h.hex();
}

std::string ExperimentConfig::bank_digest() const {
  const nlohmann::json j{{"task", task.to_json()},         {"theta_grid", theta_grid}, {"train_tau", train_tau},
                         {"seed", seed},                   {"trainer", trainer.to_json()},
                         {"warm_start", warm_start},       {"code_version", kCodeVersion}};
  Fnv1a h;
  h.update(j.dump());
  return h.hex();
}

std::size_t ExperimentConfig::workers() const {
  if (parallelism > 0) return parallelism;
  return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

// ---- output -------------------------------------------------------------------

std::string fmt_num(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

CsvWriter::CsvWriter(fs::path path, std::vector<std::string> columns, const ExperimentConfig& cfg,
                     std::uint64_t seed)
    : path_(std::move(path)), columns_(std::move(columns)), digest_(cfg.digest()), seed_(seed) {
  for (std::size_t i = 0; i < columns_.size(); ++i) body_ += (i ? "," : "") + columns_[i];
  body_ += '\n';
}

CsvWriter::~CsvWriter() {
  if (!closed_) {
    try {
      close();
    } catch (...) {
    }
  }
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_.size()) throw InvalidInput("csv row width does not match the header");
  for (std::size_t i = 0; i < cells.size(); ++i) body_ += (i ? "," : "") + cells[i];
  body_ += '\n';
}

void CsvWriter::close() {
  if (closed_) return;
  closed_ = true;
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  {
    std::ofstream out(path_);
    if (!out) throw InvalidInput("cannot write " + path_.string());
    out << body_;
  }
  write_json(path_.string() + ".meta.json", {{"file", path_.filename().string()},
                                             {"columns", columns_},
                                             {"config_digest", digest_},
                                             {"code_version", kCodeVersion},
                                             {"seed", seed_}});
}

// ---- train-bank -----------------------------------------------------------------

BankTraining train_bank(const TmazeTask& task, const ExperimentConfig& cfg) {
  BankTraining out{PolicyBank({0.0}, {CrPolicy(TabularQ(1, 1, 1), PolicyMeta{})}), {}};
  std::vector<CrPolicy> policies;
  std::optional<TrainingResult> prev;
  for (std::size_t i = 0; i < cfg.theta_grid.size(); ++i) {
    const auto seed = derive_seed(cfg.seed, {kBankStream, i});
    auto res = train_policy(task, MemoryBound(cfg.theta_grid[i]), cfg.train_tau, cfg.trainer, seed,
                            cfg.warm_start && prev ? &*prev : nullptr);
    policies.push_back(res.policy);
    out.curves.push_back(res.curve);
    prev = std::move(res);
  }
  out.bank = PolicyBank(cfg.theta_grid, std::move(policies));
  return out;
}

BankStatus cmd_train_bank(const ExperimentConfig& cfg) { return ensure_bank(cfg, cfg.out_dir / "bank"); }

BankStatus ensure_bank(const ExperimentConfig& cfg, const fs::path& dir) {
  const fs::path stamp = dir / "training.json";
  if (fs::exists(stamp) && read_json(stamp).value("bank_digest", "") == cfg.bank_digest()) {
    return {load_bank(dir), false};
  }
  const TmazeTask task(cfg.task);
  auto trained = train_bank(task, cfg);
  fs::create_directories(dir);
  save_bank(trained.bank, dir);
  for (std::size_t i = 0; i < cfg.theta_grid.size(); ++i) {
    CsvWriter csv(dir / "curves" / ("theta_" + theta_label(cfg.theta_grid[i]) + ".csv"),
                  {"restart", "iteration", "mean_return", "success_rate"}, cfg, trained.bank.at(i).meta().seed);
    for (const auto& p : trained.curves[i]) {
      csv.row({std::to_string(p.restart), std::to_string(p.iteration), fmt_num(p.mean_return),
               fmt_num(p.success_rate)});
    }
  }
  write_json(stamp, {{"bank_digest", cfg.bank_digest()},
                     {"code_version", kCodeVersion},
                     {"seed", cfg.seed},
                     {"train_tau", cfg.train_tau},
                     {"theta_grid", cfg.theta_grid},
                     {"trainer", cfg.trainer.to_json()},
                     {"warm_start", cfg.warm_start}});
  return {std::move(trained.bank), true};
}

// ---- gallery ----------------------------------------------------------------------

std::vector<GalleryRow> run_gallery(const TmazeTask& task, const PolicyBank& bank, const ExperimentConfig& cfg,
                                    std::vector<std::vector<Trajectory>>* trajectories) {
  const auto& maze = task.maze();
  const std::size_t n = bank.size() * 2;
  std::vector<GalleryRow> rows(n);
  std::vector<std::vector<Trajectory>> kept(n);
  parallel_for(n, cfg.workers(), [&](std::size_t r) {
    const std::size_t i = r / 2;
    const bool greedy = r % 2 == 0;
    auto& row = rows[r];
    row.theta = bank.grid()[i];
    row.greedy = greedy;
    row.episodes = cfg.gallery_episodes;
    row.visits.assign(maze.positions().size(), 0);
    std::size_t visiting = 0, object_steps = 0, steps = 0, wins = 0;
    double ret = 0.0;
    for (std::size_t e = 0; e < cfg.gallery_episodes; ++e) {
      Rng rng(derive_seed(cfg.seed, {kGalleryStream, i, greedy ? 1u : 0u, e}));
      auto traj = run_cr_episode(task, bank.at(i), MemoryBound(row.theta), cfg.train_tau, rng, greedy);
      std::size_t seen = 0;
      for (const auto& st : traj.steps) {
        ++row.visits[maze.position_index(maze.state_of(st.state).position)];
        if (task.critical_state(st.state)) ++seen;
      }
      object_steps += seen;
      visiting += seen > 0 ? 1 : 0;
      steps += traj.steps.size();
      wins += traj.success ? 1 : 0;
      ret += traj.total_return;
      if (e < cfg.gallery_trajectories) kept[r].push_back(std::move(traj));
    }
    const double eps = static_cast<double>(cfg.gallery_episodes);
    row.success_rate = static_cast<double>(wins) / eps;
    row.mean_length = static_cast<double>(steps) / eps;
    row.mean_return = ret / eps;
    row.mean_object_visits = static_cast<double>(object_steps) / eps;
    row.object_visit_episode_fraction = static_cast<double>(visiting) / eps;
  });
  if (trajectories) *trajectories = std::move(kept);
  return rows;
}

std::vector<GalleryRow> cmd_gallery(const ExperimentConfig& cfg) {
  const auto bank = cmd_train_bank(cfg).bank;
  const TmazeTask task(cfg.task);
  const auto& maze = task.maze();
  std::vector<std::vector<Trajectory>> trajectories;
  const auto rows = run_gallery(task, bank, cfg, &trajectories);
  const fs::path dir = cfg.out_dir / "gallery";
  CsvWriter summary(dir / "summary.csv",
                    {"theta", "mode", "episodes", "success_rate", "mean_length", "mean_return", "mean_object_visits",
                     "object_visit_episode_fraction"},
                    cfg, cfg.seed);
  CsvWriter visits(dir / "visits.csv", {"theta", "mode", "x", "y", "visits"}, cfg, cfg.seed);
  for (const auto& r : rows) {
    const std::string mode = r.greedy ? "greedy" : "sampled";
    summary.row({fmt_num(r.theta), mode, std::to_string(r.episodes), fmt_num(r.success_rate), fmt_num(r.mean_length),
                 fmt_num(r.mean_return), fmt_num(r.mean_object_visits), fmt_num(r.object_visit_episode_fraction)});
    for (std::size_t p = 0; p < r.visits.size(); ++p) {
      const Cell c = maze.positions()[p];
      visits.row({fmt_num(r.theta), mode, std::to_string(c.x), std::to_string(c.y), std::to_string(r.visits[p])});
    }
  }
  for (std::size_t i = 0; i < bank.size(); ++i) {
    fs::create_directories(dir);
    std::ofstream out(dir / ("trajectories_theta_" + theta_label(bank.grid()[i]) + ".jsonl"));
    for (std::size_t mode = 0; mode < 2; ++mode) {
      for (const auto& traj : trajectories[i * 2 + mode]) {
        auto j = traj.to_json();
        j["mode"] = mode == 0 ? "greedy" : "sampled";
        nlohmann::json path = nlohmann::json::array();
        for (const auto& st : traj.steps) {
          const Cell c = maze.state_of(st.state).position;
          path.push_back({c.x, c.y});
        }
        j["path"] = std::move(path);
        out << j.dump() << '\n';
      }
    }
  }
  return rows;
}

// ---- infer --------------------------------------------------------------------------

double InferResult::pm_reduction() const {
  const double first = convergence.front().pm_mean;
  return first > 0.0 ? 1.0 - convergence.back().pm_mean / first : 0.0;
}

InferRun run_inference(const TmazeTask& task, const PolicyBank& bank, const NpfConfig& npf, std::size_t theta_index,
                       std::uint64_t seed, const TauSchedule& schedule, std::size_t steps) {
  const double theta = bank.grid().at(theta_index);
  Rng user_rng(derive_seed(seed, {kUserStream, theta_index}));
  NestedParticleSet ps(task, bank, npf, schedule.at(1), derive_seed(seed, {kFilterStream, theta_index}));
  CrUser user(task, bank.at(theta_index), MemoryBound(theta), schedule.at(1));
  InferRun run;
  run.theta_true = theta;
  run.seed = seed;
  std::size_t episode = 0;
  for (std::size_t t = 1; t <= steps; ++t) {
    const double tau = schedule.at(t);
    user.set_tau(tau);
    ps.set_tau(tau);
    if (t == 1 || user.done()) {
      if (t > 1) ++episode;
      user.begin_episode(user_rng);
      ps.begin_episode();
    }
    const ActionIndex prev = user.previous_action();
    const std::size_t episode_step = user.t();
    const auto st = user.step(user_rng);
    npf_update(ps, st.obs, prev, st.decision.action);
    InferStep rec;
    rec.t = t;
    rec.episode = episode;
    rec.episode_step = episode_step;
    rec.tau = tau;
    rec.summary = summarize(ps);
    rec.pm_error = std::abs(rec.summary.mean - theta);
    rec.map_error = std::abs(rec.summary.map - theta);
    run.steps.push_back(std::move(rec));
  }
  return run;
}

InferResult run_infer(const TmazeTask& task, const PolicyBank& bank, const ExperimentConfig& cfg,
                      const TauSchedule& schedule) {
  InferResult result;
  result.schedule = schedule;
  const std::size_t n = bank.size() * cfg.seeds.size();
  result.runs.resize(n);
  parallel_for(n, cfg.workers(), [&](std::size_t r) {
    const std::size_t i = r / cfg.seeds.size();
    const std::uint64_t s = cfg.seeds[r % cfg.seeds.size()];
    result.runs[r] = run_inference(task, bank, cfg.npf, i, derive_seed(cfg.seed, {s}), schedule, cfg.infer_steps);
    result.runs[r].seed = s;
  });
  for (std::size_t t = 0; t < cfg.infer_steps; ++t) {
    std::vector<double> pm, mp;
    for (const auto& run : result.runs) {
      pm.push_back(run.steps[t].pm_error);
      mp.push_back(run.steps[t].map_error);
    }
    result.convergence.push_back({t + 1, mean_of(pm), standard_error(pm), mean_of(mp), standard_error(mp)});
  }
  return result;
}

void write_infer(const InferResult& result, const fs::path& dir, const ExperimentConfig& cfg) {
  std::vector<std::string> columns{"t", "episode", "episode_step", "tau"};
  for (double th : cfg.theta_grid) columns.push_back("w_" + theta_label(th));
  for (const char* c : {"pm", "map", "pm_error", "map_error", "outer_ess", "mean_inner_ess"}) columns.emplace_back(c);
  for (const auto& run : result.runs) {
    CsvWriter csv(dir / ("trace_theta_" + theta_label(run.theta_true) + "_seed_" + std::to_string(run.seed) + ".csv"),
                  columns, cfg, run.seed);
    for (const auto& st : run.steps) {
      std::vector<std::string> cells{std::to_string(st.t), std::to_string(st.episode), std::to_string(st.episode_step),
                                     fmt_num(st.tau)};
      for (double w : st.summary.weights) cells.push_back(fmt_num(w));
      for (double v : {st.summary.mean, st.summary.map, st.pm_error, st.map_error, st.summary.outer_ess,
                       st.summary.mean_inner_ess}) {
        cells.push_back(fmt_num(v));
      }
      csv.row(cells);
    }
  }
  CsvWriter conv(dir / "convergence.csv", {"t", "pm_error_mean", "pm_error_se", "map_error_mean", "map_error_se"}, cfg,
                 cfg.seed);
  for (const auto& p : result.convergence) {
    conv.row({std::to_string(p.t), fmt_num(p.pm_mean), fmt_num(p.pm_se), fmt_num(p.map_mean), fmt_num(p.map_se)});
  }
  write_json(dir / "summary.json", {{"schedule", result.schedule.to_json()},
                                    {"runs", result.runs.size()},
                                    {"pm_error_t1", result.convergence.front().pm_mean},
                                    {"pm_error_final", result.final_pm()},
                                    {"map_error_final", result.final_map()},
                                    {"pm_reduction", result.pm_reduction()}});
}

InferResult cmd_infer(const ExperimentConfig& cfg) {
  const auto bank = cmd_train_bank(cfg).bank;
  const TmazeTask task(cfg.task);
  auto result = run_infer(task, bank, cfg, cfg.tau);
  write_infer(result, cfg.out_dir / "infer", cfg);
  return result;
}

PolicyBank bank_for_tau(const ExperimentConfig& cfg, double tau) {
  if (tau == cfg.train_tau) return cmd_train_bank(cfg).bank;
  auto c = cfg;
  c.train_tau = tau;
  return ensure_bank(c, cfg.out_dir / "tau_sweep" / ("bank_" + TauSchedule::fixed(tau).label())).bank;
}

std::vector<InferResult> cmd_tau_sweep(const ExperimentConfig& cfg) {
  const TmazeTask task(cfg.task);
  std::vector<TauSchedule> schedules;
  for (double tau : cfg.tau_grid) schedules.push_back(TauSchedule::fixed(tau));
  if (cfg.sweep_adaptive) schedules.push_back(cfg.adaptive);
  std::vector<InferResult> results;
  const fs::path dir = cfg.out_dir / "tau_sweep";
  CsvWriter summary(dir / "summary.csv",
                    {"schedule", "pm_error_t1", "pm_error_final", "pm_error_final_se", "map_error_final",
                     "pm_reduction"},
                    cfg, cfg.seed);
  for (const auto& s : schedules) {
    // fixed τ runs use a bank trained at that τ; the adaptive schedule uses the reference bank
    const auto bank = bank_for_tau(cfg, s.mode == TauSchedule::Mode::Adaptive ? cfg.train_tau : s.value);
    auto r = run_infer(task, bank, cfg, s);
    write_infer(r, dir / s.label(), cfg);
    summary.row({s.label(), fmt_num(r.convergence.front().pm_mean), fmt_num(r.final_pm()),
                 fmt_num(r.convergence.back().pm_se), fmt_num(r.final_map()), fmt_num(r.pm_reduction())});
    results.push_back(std::move(r));
  }
  return results;
}

// ---- assistance ----------------------------------------------------------------------

namespace {

std::string assist_digest(const ExperimentConfig& cfg) {
  Fnv1a h;
  h.update(cfg.bank_digest());
  h.update(cfg.assist.digest());
  h.update(static_cast<std::uint64_t>(cfg.seed));
  return h.hex();
}

}  // namespace

AssistTrainingResult cmd_assist_train(const ExperimentConfig& cfg) {
  const auto bank = cmd_train_bank(cfg).bank;
  const TmazeTask task(cfg.task);
  auto result =
      train_assist_policy(task, bank, cfg.assist, cfg.train_tau, derive_seed(cfg.seed, {kAssistTrainStream}));
  const fs::path dir = cfg.out_dir / "assist";
  auto j = result.policy.to_json();
  j["training_digest"] = assist_digest(cfg);
  write_json(dir / "policy.json", j);
  CsvWriter curve(dir / "curve.csv", {"epoch", "mean_reward", "success_rate", "intervention_rate"}, cfg, cfg.seed);
  for (const auto& p : result.curve) {
    curve.row({std::to_string(p.epoch), fmt_num(p.mean_reward), fmt_num(p.success_rate),
               fmt_num(p.intervention_rate)});
  }
  return result;
}

AssistEvaluation cmd_assist_eval(const ExperimentConfig& cfg) {
  const auto bank = cmd_train_bank(cfg).bank;
  const TmazeTask task(cfg.task);
  const fs::path dir = cfg.out_dir / "assist";
  std::optional<AssistPolicy> policy;
  if (fs::exists(dir / "policy.json")) {
    const auto j = read_json(dir / "policy.json");
    if (j.value("training_digest", "") == assist_digest(cfg)) policy = AssistPolicy::from_json(j);
  }
  if (!policy) policy = cmd_assist_train(cfg).policy;

  const auto seed = derive_seed(cfg.seed, {kAssistEvalStream});
  AssistEvaluation ev;
  ev.assisted = evaluate_assistance(task, bank, *policy, cfg.assist, cfg.theta_grid, cfg.assist_eval_episodes,
                                    cfg.train_tau, seed, true);
  ev.baseline = evaluate_assistance(task, bank, AssistPolicy::constant(AssistType::DoNothing), cfg.assist,
                                    cfg.theta_grid, cfg.assist_eval_episodes, cfg.train_tau, seed, true);
  CsvWriter csv(dir / "report.csv",
                {"policy", "theta", "episodes", "steps", "do_nothing", "action_hint", "memory_hint",
                 "intervention_rate", "accepted_action_hints", "mean_reward", "total_cost", "success_rate",
                 "cost_action_hint", "cost_memory_hint", "entropy_threshold"},
                cfg, cfg.seed);
  std::ofstream timing(dir / "timing.jsonl");
  for (const auto* reports : {&ev.assisted, &ev.baseline}) {
    const std::string name = reports == &ev.assisted ? "assisted" : "do_nothing";
    for (const auto& r : *reports) {
      csv.row({name, fmt_num(r.theta), std::to_string(r.episodes), std::to_string(r.steps),
               fmt_num(r.fraction(AssistType::DoNothing)), fmt_num(r.fraction(AssistType::ActionHint)),
               fmt_num(r.fraction(AssistType::MemoryHint)), fmt_num(r.intervention_rate()),
               std::to_string(r.accepted_action_hints), fmt_num(r.mean_reward), fmt_num(r.total_cost),
               fmt_num(r.success_rate), fmt_num(cfg.assist.costs.action_hint), fmt_num(cfg.assist.costs.memory_hint),
               fmt_num(cfg.assist.entropy_threshold)});
      if (reports != &ev.assisted) continue;
      for (const auto& e : r.events) {
        if (e.type == AssistType::DoNothing) continue;
        timing << nlohmann::json{{"theta", r.theta},
                                 {"episode", e.episode},
                                 {"step", e.step},
                                 {"assist", assist_type_name(e.type)},
                                 {"accepted", e.accepted}}
                      .dump()
               << '\n';
      }
    }
  }
  return ev;
}

// ---- oracle check ---------------------------------------------------------------------

bool OracleReport::pass() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.pass; });
}

OracleReport run_oracle_check(const OracleConfig& cfg, std::uint64_t seed) {
  OracleReport report;
  auto sweep = cfg.particle_sweep;
  if (std::find(sweep.begin(), sweep.end(), cfg.inner_particles) == sweep.end()) sweep.push_back(cfg.inner_particles);
  const auto cases = micro_cases();
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& task = cases[c].task;
    const auto bank = train_micro_bank(task, cfg.tau, derive_seed(seed, {kOracleStream, c}), cfg.tabular);
    std::vector<std::vector<ObservationIndex>> obs(cfg.seeds);
    std::vector<std::vector<ActionIndex>> acts(cfg.seeds);
    std::vector<ExactPosterior> exact;
    for (std::size_t s = 0; s < cfg.seeds; ++s) {
      const std::size_t k = s % bank.size();
      Rng rng(derive_seed(seed, {kOracleStream, c, s}));
      CrUser user(task, bank.at(k), MemoryBound(bank.grid()[k]), cfg.tau);
      user.begin_episode(rng);
      while (!user.done()) {
        const auto st = user.step(rng);
        obs[s].push_back(st.obs);
        acts[s].push_back(st.decision.action);
      }
      exact.push_back(exact_joint_posterior(task, bank, obs[s], acts[s], cfg.tau, cfg.budget));
    }
    for (const bool strict : {false, true}) {
      for (const std::size_t n : sweep) {
        OracleCaseResult r;
        r.name = cases[c].name;
        r.mode = strict ? "strict" : "resampling";
        r.inner_particles = n;
        NpfConfig npf;
        npf.inner_particles = n;
        npf.resample = !strict;
        for (std::size_t s = 0; s < cfg.seeds; ++s) {
          auto ps = npf_init(task, bank, npf, cfg.tau, derive_seed(seed, {kOracleStream, c, s, n}));
          for (std::size_t k = 0; k < obs[s].size(); ++k) {
            npf_update(ps, obs[s][k], k == 0 ? kNoAction : acts[s][k - 1], acts[s][k]);
          }
          const double tv = total_variation(ps.theta_weights(), exact[s].theta_marginal);
          r.mean_tv += tv;
          r.max_tv = std::max(r.max_tv, tv);
        }
        r.mean_tv /= static_cast<double>(cfg.seeds);
        r.checked = n == cfg.inner_particles;
        r.pass = !r.checked || r.mean_tv < cfg.tolerance;
        report.cases.push_back(r);
      }
    }
  }
  return report;
}

OracleReport cmd_oracle_check(const ExperimentConfig& cfg) {
  auto report = run_oracle_check(cfg.oracle, cfg.seed);
  const fs::path dir = cfg.out_dir / "oracle";
  CsvWriter csv(dir / "report.csv", {"case", "mode", "inner_particles", "mean_tv", "max_tv", "checked", "pass"}, cfg,
                cfg.seed);
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& r : report.cases) {
    csv.row({r.name, r.mode, std::to_string(r.inner_particles), fmt_num(r.mean_tv), fmt_num(r.max_tv),
             r.checked ? "true" : "false", r.pass ? "true" : "false"});
    cases.push_back({{"case", r.name},
                     {"mode", r.mode},
                     {"inner_particles", r.inner_particles},
                     {"mean_tv", r.mean_tv},
                     {"max_tv", r.max_tv},
                     {"checked", r.checked},
                     {"pass", r.pass}});
  }
  write_json(dir / "report.json", {{"tolerance", cfg.oracle.tolerance}, {"pass", report.pass()}, {"cases", cases}});
  return report;
}

}  // namespace cogbound
