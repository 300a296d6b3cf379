#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egfr/backend.hpp"
#include "egfr/baselines.hpp"
#include "egfr/chart.hpp"
#include "egfr/extract.hpp"
#include "egfr/report.hpp"
#include "egfr/synthetic.hpp"

namespace egfr {

struct SeedConfig {
  uint64_t split = 0;
  uint64_t synthetic = 0;
  uint64_t mocks = 0;
};

struct ReportOptions {
  bool text_table = true;
  bool significance = true;
};

// Everything a run needs; loaded from one JSON file, no implicit randomness.
struct RunConfig {
  std::string output_dir = "runs/default";
  int w0 = 3;
  double train_fraction = 0.7;
  int repeats = 3;
  std::vector<int> templates = {1, 2, 3, 4};
  SeedConfig seeds;

  std::optional<SyntheticSpec> synthetic;  // else real files below
  std::string visits_file, profiles_file;

  ChartStyle chart;
  std::vector<BackendConfig> backends;
  ExtractionRange extraction;
  std::string secondary_backend;  // backend id for the secondary pass, "" = off
  std::map<std::string, double> ensemble_weights;

  bool baselines_enabled = true;
  RfParams rf;
  CnnTrainSettings cnn;

  ReportOptions report;
  int threads = 0;  // 0: all cores, 1: serial
  std::string template_dir;  // optional override of the built-in templates
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text, const std::string& origin = "config");
void validate_config(const RunConfig& cfg);
std::string config_digest(const RunConfig& cfg);

extern const std::vector<std::string> kStageNames;
// ingest -> windows -> render -> query -> extract -> ensemble -> baselines -> report

class Pipeline {
 public:
  Pipeline(RunConfig cfg, bool offline, Clock& clock = real_clock(),
           Transport transport = {});

  // Runs one stage; throws StageError when upstream artifacts are missing.
  // Already-current stages (matching input digest, artifacts on disk) are
  // skipped. Returns true if work was done, false if skipped.
  bool run_stage(const std::string& name);
  void run_all();

  const RunConfig& config() const { return cfg_; }
  std::string artifact_path(const std::string& name) const;
  int total_remote_calls() const { return remote_calls_; }

  // Assembled from on-disk artifacts; used by the report stage and by tests.
  ReportInputs collect_report_inputs() const;

 private:
  RunConfig cfg_;
  bool offline_;
  Clock& clock_;
  Transport transport_;
  int remote_calls_ = 0;

  std::string stage_input_digest(const std::string& name) const;
  bool stage_current(const std::string& name, const std::string& digest) const;
  void write_stage_marker(const std::string& name, const std::string& digest,
                          const std::vector<std::string>& outputs) const;
  std::string read_stage_digest(const std::string& name) const;  // "" when absent

  Cohort load_cohort() const;
  std::vector<PredictionWindow> load_windows(const Cohort& cohort) const;
  PatientSplit load_split() const;

  void stage_ingest();
  void stage_windows();
  void stage_render();
  void stage_query();
  void stage_extract();
  void stage_ensemble();
  void stage_baselines();
  void stage_report();
};

}  // namespace egfr
