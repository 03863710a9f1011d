#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogbound/agent.hpp"
#include "cogbound/assist.hpp"
#include "cogbound/npf.hpp"
#include "cogbound/tmaze.hpp"
#include "cogbound/trainer.hpp"

namespace cogbound {

inline constexpr const char* kCodeVersion = "0.1.0";

/// Softmax scale over the global inference step t = 1, 2, ...: either fixed
/// or decaying exponentially from `start` to `end` at step `steps`.
struct TauSchedule {
  enum class Mode { Fixed, Adaptive };
  Mode mode = Mode::Fixed;
  double value = 3.0;
  double start = 5.0;
  double end = 1.0;
  std::size_t steps = 100;

  static TauSchedule fixed(double tau);
  static TauSchedule adaptive(double start, double end, std::size_t steps);
  double at(std::size_t t) const;
  std::string label() const;
  nlohmann::json to_json() const;
  static TauSchedule from_json(const nlohmann::json& j);
};

struct OracleConfig {
  std::size_t seeds = 20;
  std::size_t inner_particles = 2000;
  std::vector<std::size_t> particle_sweep{50, 500, 2000};
  double tolerance = 0.05;
  double tau = 3.0;
  std::size_t budget = 1u << 20;
  TabularConfig tabular;
};

struct ExperimentConfig {
  TmazeConfig task;
  std::vector<double> theta_grid = default_theta_grid();
  /// Softmax scale the policy bank is trained with.
  double train_tau = 3.0;
  /// Schedule used by `infer`.
  TauSchedule tau = TauSchedule::fixed(3.0);
  std::vector<double> tau_grid{1.0, 3.0, 5.0, 10.0};
  bool sweep_adaptive = true;
  TauSchedule adaptive = TauSchedule::adaptive(5.0, 1.0, 100);
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  PpoConfig trainer = default_trainer();
  /// Each θ's first restart starts from the previous grid value's networks.
  bool warm_start = true;
  NpfConfig npf;
  std::size_t infer_steps = 100;
  std::size_t gallery_episodes = 500;
  /// Episodes per (θ, mode) written to the trajectory dump.
  std::size_t gallery_trajectories = 10;
  AssistConfig assist;
  std::size_t assist_eval_episodes = 200;
  OracleConfig oracle;
  std::size_t parallelism = 0;  // 0 = hardware concurrency
  std::filesystem::path out_dir = "out";

  static PpoConfig default_trainer();
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  std::string digest() const;
  /// Digest of everything the policy bank depends on.
  std::string bank_digest() const;
  std::size_t workers() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

// ---- output helpers ---------------------------------------------------------

/// Writes a CSV file and its `<name>.meta.json` sidecar (config digest, code
/// version, seed, columns).
class CsvWriter {
 public:
  CsvWriter(std::filesystem::path path, std::vector<std::string> columns, const ExperimentConfig& cfg,
            std::uint64_t seed);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::filesystem::path path_;
  std::vector<std::string> columns_;
  std::string body_;
  std::string digest_;
  std::uint64_t seed_;
  bool closed_ = false;
};

std::string fmt_num(double v);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// ---- commands ---------------------------------------------------------------

struct BankTraining {
  PolicyBank bank;
  std::vector<std::vector<CurvePoint>> curves;
};

/// Trains every grid θ in ascending order; no file output.
BankTraining train_bank(const TmazeTask& task, const ExperimentConfig& cfg);

struct BankStatus {
  PolicyBank bank;
  bool trained = false;
};

/// Loads `<out>/bank` when its recorded digest matches the configuration,
/// otherwise trains and writes it (policies, manifest, training curves).
BankStatus cmd_train_bank(const ExperimentConfig& cfg);

/// Same as cmd_train_bank with an explicit bank directory.
BankStatus ensure_bank(const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Bank whose training τ matches `tau`: the reference bank when `tau` equals
/// train_tau, otherwise one cached under `<out>/tau_sweep/bank_tau_<τ>`.
PolicyBank bank_for_tau(const ExperimentConfig& cfg, double tau);

struct GalleryRow {
  double theta = 0.0;
  bool greedy = false;
  std::size_t episodes = 0;
  double success_rate = 0.0;
  double mean_length = 0.0;
  double mean_return = 0.0;
  double mean_object_visits = 0.0;
  double object_visit_episode_fraction = 0.0;
  std::vector<std::size_t> visits;  // per position index
};

std::vector<GalleryRow> run_gallery(const TmazeTask& task, const PolicyBank& bank, const ExperimentConfig& cfg,
                                    std::vector<std::vector<Trajectory>>* trajectories = nullptr);
std::vector<GalleryRow> cmd_gallery(const ExperimentConfig& cfg);

struct InferStep {
  std::size_t t = 0;
  std::size_t episode = 0;
  std::size_t episode_step = 0;
  double tau = 0.0;
  PosteriorSummary summary;
  double pm_error = 0.0;
  double map_error = 0.0;
};

struct InferRun {
  double theta_true = 0.0;
  std::uint64_t seed = 0;
  std::vector<InferStep> steps;
};

struct ConvergencePoint {
  std::size_t t = 0;
  double pm_mean = 0.0, pm_se = 0.0;
  double map_mean = 0.0, map_se = 0.0;
};

struct InferResult {
  TauSchedule schedule;
  std::vector<InferRun> runs;
  std::vector<ConvergencePoint> convergence;

  double final_pm() const { return convergence.back().pm_mean; }
  double final_map() const { return convergence.back().map_mean; }
  /// 1 - PM(t_end) / PM(t = 1).
  double pm_reduction() const;
};

/// One simulated user and one online filter over `steps` global steps;
/// episodes restart whenever the user finishes one.
InferRun run_inference(const TmazeTask& task, const PolicyBank& bank, const NpfConfig& npf, std::size_t theta_index,
                       std::uint64_t seed, const TauSchedule& schedule, std::size_t steps);
InferResult run_infer(const TmazeTask& task, const PolicyBank& bank, const ExperimentConfig& cfg,
                      const TauSchedule& schedule);
void write_infer(const InferResult& result, const std::filesystem::path& dir, const ExperimentConfig& cfg);
InferResult cmd_infer(const ExperimentConfig& cfg);

std::vector<InferResult> cmd_tau_sweep(const ExperimentConfig& cfg);

AssistTrainingResult cmd_assist_train(const ExperimentConfig& cfg);

struct AssistEvaluation {
  std::vector<AssistReport> assisted;
  std::vector<AssistReport> baseline;
};

AssistEvaluation cmd_assist_eval(const ExperimentConfig& cfg);

struct OracleCaseResult {
  std::string name;
  std::string mode;  // "resampling" or "strict"
  std::size_t inner_particles = 0;
  double mean_tv = 0.0;
  double max_tv = 0.0;
  bool checked = false;  // compared against the tolerance
  bool pass = true;
};

struct OracleReport {
  std::vector<OracleCaseResult> cases;
  bool pass() const;
};

OracleReport run_oracle_check(const OracleConfig& cfg, std::uint64_t seed);
OracleReport cmd_oracle_check(const ExperimentConfig& cfg);

}  // namespace cogbound
