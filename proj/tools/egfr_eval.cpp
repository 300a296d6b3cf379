#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI/CLI.hpp>

#include "egfr/csv.hpp"
#include "egfr/errors.hpp"
#include "egfr/pipeline.hpp"

namespace {

// 0 ok, 1 validation/config error, 2 transport error, 3 internal error
constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitTransport = 2;
constexpr int kExitInternal = 3;

int classify(const std::exception& e) {
  if (dynamic_cast<const egfr::ConfigError*>(&e) ||
      dynamic_cast<const egfr::ValidationError*>(&e) ||
      dynamic_cast<const egfr::ParseError*>(&e))
    return kExitValidation;
  if (dynamic_cast<const egfr::TransportError*>(&e)) return kExitTransport;
  return kExitInternal;
}

egfr::RunConfig load_with_overrides(const std::string& config_path,
                                    const std::string& run_id,
                                    const std::vector<std::string>& seed_overrides,
                                    bool has_threads, int threads) {
  egfr::RunConfig cfg = egfr::load_config(config_path);
  if (!run_id.empty())
    cfg.output_dir =
        (std::filesystem::path(cfg.output_dir).parent_path() / run_id).string();
  for (const auto& s : seed_overrides) {
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw egfr::ConfigError("--seed expects name=value, got '" + s + "'");
    std::string name = s.substr(0, eq);
    uint64_t value = std::stoull(s.substr(eq + 1));
    if (name == "split")
      cfg.seeds.split = value;
    else if (name == "synthetic")
      cfg.seeds.synthetic = value;
    else if (name == "mocks")
      cfg.seeds.mocks = value;
    else
      throw egfr::ConfigError("unknown seed '" + name +
                              "' (expected split, synthetic or mocks)");
  }
  if (has_threads) cfg.threads = threads;
  egfr::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch eGFR forecasting evaluation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_id;
  std::vector<std::string> stages;
  std::vector<std::string> seed_overrides;
  bool all = false, offline = false;
  int threads = 0;
  bool has_threads = false;

  CLI::App* run = app.add_subcommand("run", "Run pipeline stages");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required();
  run->add_option("--stage", stages, "Stage(s) to run, in order");
  run->add_flag("--all", all, "Run every stage in order");
  run->add_flag("--offline", offline, "Fail instead of making remote calls");
  run->add_option("--run-id", run_id, "Override the output directory leaf");
  run->add_option("--seed", seed_overrides, "Override a seed, e.g. split=42");
  run->add_option("--threads", threads, "Worker threads (0 = all cores, 1 = serial)")
      ->each([&](const std::string&) { has_threads = true; });

  CLI::App* validate = app.add_subcommand("validate-config", "Check a config and exit");
  validate->add_option("--config", config_path, "Run configuration (JSON)")->required();

  CLI::App* audit = app.add_subcommand("show-audit", "Print the preprocessing audit");
  audit->add_option("--config", config_path, "Run configuration (JSON)")->required();
  audit->add_option("--run-id", run_id, "Override the output directory leaf");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      egfr::RunConfig cfg = egfr::load_config(config_path);
      std::cout << "config ok: digest " << egfr::config_digest(cfg) << "\n";
      return kExitOk;
    }

    egfr::RunConfig cfg =
        load_with_overrides(config_path, run_id, seed_overrides, has_threads, threads);

    if (audit->parsed()) {
      std::ifstream f(cfg.output_dir + "/audit.csv");
      if (!f) {
        std::cerr << "no audit at " << cfg.output_dir
                  << "/audit.csv; run the ingest stage first\n";
        return kExitInternal;
      }
      std::cout << f.rdbuf();
      return kExitOk;
    }

    // run
    if (!all && stages.empty()) {
      std::cerr << "nothing to do: pass --all or at least one --stage\n";
      return kExitValidation;
    }
    egfr::Pipeline pipeline(cfg, offline, egfr::real_clock(), egfr::http_transport());
    std::vector<std::string> to_run = all ? egfr::kStageNames : stages;
    for (const auto& stage : to_run) {
      bool ran = pipeline.run_stage(stage);
      std::cout << stage << ": " << (ran ? "done" : "up to date") << "\n";
    }
    if (pipeline.total_remote_calls() > 0)
      std::cout << "remote calls: " << pipeline.total_remote_calls() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return classify(e);
  }
}
