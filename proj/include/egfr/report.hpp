#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "egfr/ensemble.hpp"
#include "egfr/extract.hpp"
#include "egfr/metrics.hpp"

namespace egfr {

struct WindowInfo {
  std::string patient_id;
  double actual = 0;  // target eGFR
};

struct ReportInputs {
  std::map<std::string, WindowInfo> windows;  // window_id -> info, all attempted
  std::set<std::string> train_patients;
  std::set<std::string> validation_patients;
  std::vector<std::string> backend_ids;  // row order
  std::vector<int> template_ids;         // usually 1..4
  std::vector<Prediction> predictions;   // raw table, failed rows included
  // system name -> window_id -> prediction
  std::map<std::string, std::map<std::string, double>> baseline_predictions;
  std::map<std::string, double> ensemble_weights;  // model ensemble, default uniform
};

struct MetricsCell {
  double mae = 0;
  double mape = 0;
  int n_windows = 0;  // scored
  int n_failed = 0;   // attempted but never extracted
};

struct ReportRow {
  std::string system;
  std::string prompt;  // "1".."4", "ensemble", or "-"
  std::map<std::string, MetricsCell> by_split;  // "train" / "validation"
};

struct MetricsReport {
  std::vector<ReportRow> model_rows;     // per backend: template rows + ensemble
  std::vector<ReportRow> ensemble_rows;  // model ensemble, one row per template
  std::vector<ReportRow> baseline_rows;
};

// Repeat-averaged value per (window, backend, template); the scoring unit
// for every prompt row.
std::map<std::string, std::map<std::string, std::map<int, EnsembleResult>>>
repeat_average_table(const std::vector<Prediction>& predictions);

MetricsReport build_report(const ReportInputs& inputs);

std::string report_to_csv(const MetricsReport& report);
std::string report_to_text(const MetricsReport& report);

// Per-window absolute errors of one system over one split; feeds paired_test.
// System names: "<backend>:<template>", "<backend>:ensemble",
// "ensemble:<template>", or a baseline name.
std::map<std::string, double> per_window_abs_errors(const ReportInputs& inputs,
                                                    const std::string& system,
                                                    const std::string& split);

std::string significance_to_csv(const std::vector<SignificanceResult>& results);

}  // namespace egfr
