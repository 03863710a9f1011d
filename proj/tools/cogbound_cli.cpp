// Command-line entry point. Every subcommand takes --config, --seed, --out and
// prints a one-line JSON summary on success; failures print an error object
// and exit nonzero.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cogbound/error.hpp"
#include "cogbound/harness.hpp"

using namespace cogbound;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

json gallery_json(const std::vector<GalleryRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"theta", r.theta},
                   {"mode", r.greedy ? "greedy" : "sampled"},
                   {"success_rate", r.success_rate},
                   {"mean_length", r.mean_length},
                   {"mean_object_visits", r.mean_object_visits}});
  }
  return out;
}

json infer_json(const InferResult& r) {
  return {{"schedule", r.schedule.label()},
          {"pm_error_final", r.final_pm()},
          {"map_error_final", r.final_map()},
          {"pm_reduction", r.pm_reduction()}};
}

json reports_json(const std::vector<AssistReport>& reports) {
  json out = json::array();
  for (const auto& r : reports) {
    out.push_back({{"theta", r.theta},
                   {"intervention_rate", r.intervention_rate()},
                   {"action_hints", r.counts[1]},
                   {"memory_hints", r.counts[2]},
                   {"success_rate", r.success_rate}});
  }
  return out;
}

int fail(const std::string& command, const std::string& code, const std::string& message, int status) {
  std::cout << json{{"error", code}, {"message", message}, {"command", command}}.dump() << std::endl;
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cognitive-bound inference and assistance on a memory-decay T-maze"};
  app.require_subcommand(1);
  Common common;
  const std::vector<std::string> names{"train-bank",  "gallery",     "infer",       "tau-sweep",
                                       "assist-train", "assist-eval", "oracle-check"};
  for (const auto& n : names) {
    auto* sub = app.add_subcommand(n);
    sub->add_option("--config", common.config, "JSON configuration file");
    sub->add_option("--seed", common.seed, "master seed (overrides the configuration)");
    sub->add_option("--out", common.out, "output directory (overrides the configuration)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("", "UsageError", e.what(), 2);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = resolve(common);
    json summary{{"command", command}, {"out", cfg.out_dir.string()}, {"config_digest", cfg.digest()}};
    if (command == "train-bank") {
      const auto st = cmd_train_bank(cfg);
      summary["trained"] = st.trained;
      summary["bank_digest"] = cfg.bank_digest();
      summary["policies"] = st.bank.size();
    } else if (command == "gallery") {
      summary["rows"] = gallery_json(cmd_gallery(cfg));
    } else if (command == "infer") {
      summary["result"] = infer_json(cmd_infer(cfg));
    } else if (command == "tau-sweep") {
      json rs = json::array();
      for (const auto& r : cmd_tau_sweep(cfg)) rs.push_back(infer_json(r));
      summary["schedules"] = rs;
    } else if (command == "assist-train") {
      const auto r = cmd_assist_train(cfg);
      summary["epochs"] = r.curve.size();
      summary["policy_digest"] = r.policy.config_digest();
    } else if (command == "assist-eval") {
      const auto ev = cmd_assist_eval(cfg);
      summary["assisted"] = reports_json(ev.assisted);
      summary["baseline"] = reports_json(ev.baseline);
    } else if (command == "oracle-check") {
      const auto rep = cmd_oracle_check(cfg);
      summary["pass"] = rep.pass();
      json cases = json::array();
      for (const auto& c : rep.cases) {
        if (c.checked) cases.push_back({{"case", c.name}, {"mode", c.mode}, {"mean_tv", c.mean_tv}});
      }
      summary["checked"] = cases;
      if (!rep.pass()) {
        return fail(command, "OracleMismatch", "NPF posterior exceeds the tolerance against exact enumeration", 3);
      }
    }
    std::cout << summary.dump() << std::endl;
    return 0;
  } catch (const Error& e) {
    return fail(command, e.code(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail(command, "InternalError", e.what(), 1);
  }
}
