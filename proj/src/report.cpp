#include "egfr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace egfr {

namespace {

const char* kSplits[2] = {"train", "validation"};

bool in_split(const ReportInputs& in, const std::string& split,
              const std::string& patient_id) {
  const auto& s = split == "train" ? in.train_patients : in.validation_patients;
  return s.count(patient_id) > 0;
}

MetricsCell make_cell(const std::vector<double>& actuals,
                      const std::vector<double>& values, int n_failed) {
  MetricsCell c;
  c.n_failed = n_failed;
  c.n_windows = int(actuals.size());
  if (!actuals.empty()) {
    c.mae = mae(actuals, values);
    c.mape = mape(actuals, values);
  }
  return c;
}

}  // namespace

std::map<std::string, std::map<std::string, std::map<int, EnsembleResult>>>
repeat_average_table(const std::vector<Prediction>& predictions) {
  std::map<std::string, std::map<std::string, std::map<int, std::vector<Prediction>>>>
      cells;
  for (const auto& p : predictions)
    cells[p.window_id][p.backend_id][p.template_id].push_back(p);

  std::map<std::string, std::map<std::string, std::map<int, EnsembleResult>>> out;
  for (auto& [wid, by_backend] : cells)
    for (auto& [bid, by_template] : by_backend)
      for (auto& [tid, cell] : by_template)
        if (auto r = average_repeats(cell)) out[wid][bid][tid] = *r;
  return out;
}

MetricsReport build_report(const ReportInputs& inputs) {
  if (inputs.windows.empty()) throw MetricError("report over an empty window set");
  if (inputs.predictions.empty() && inputs.baseline_predictions.empty())
    throw MetricError("report over an empty prediction grid");

  auto averaged = repeat_average_table(inputs.predictions);

  // attempted windows per (backend, template)
  std::map<std::string, std::map<int, std::set<std::string>>> attempted;
  for (const auto& p : inputs.predictions)
    attempted[p.backend_id][p.template_id].insert(p.window_id);

  MetricsReport report;

  for (const auto& bid : inputs.backend_ids) {
    // prompt rows
    for (int tid : inputs.template_ids) {
      ReportRow row{bid, std::to_string(tid), {}};
      for (const char* split : kSplits) {
        std::vector<double> actuals, values;
        int failed = 0;
        for (const auto& wid : attempted[bid][tid]) {
          auto wit = inputs.windows.find(wid);
          if (wit == inputs.windows.end() || !in_split(inputs, split, wit->second.patient_id))
            continue;
          auto w_avg = averaged.find(wid);
          const EnsembleResult* cell = nullptr;
          if (w_avg != averaged.end()) {
            auto b_avg = w_avg->second.find(bid);
            if (b_avg != w_avg->second.end()) {
              auto t_avg = b_avg->second.find(tid);
              if (t_avg != b_avg->second.end()) cell = &t_avg->second;
            }
          }
          if (cell) {
            actuals.push_back(wit->second.actual);
            values.push_back(cell->value);
          } else {
            ++failed;
          }
        }
        row.by_split[split] = make_cell(actuals, values, failed);
      }
      report.model_rows.push_back(std::move(row));
    }

    // prompt-ensemble row
    ReportRow erow{bid, "ensemble", {}};
    std::set<std::string> backend_windows;
    for (int tid : inputs.template_ids)
      for (const auto& wid : attempted[bid][tid]) backend_windows.insert(wid);
    for (const char* split : kSplits) {
      std::vector<double> actuals, values;
      int failed = 0;
      for (const auto& wid : backend_windows) {
        auto wit = inputs.windows.find(wid);
        if (wit == inputs.windows.end() || !in_split(inputs, split, wit->second.patient_id))
          continue;
        std::vector<EnsembleResult> per_template;
        auto w_avg = averaged.find(wid);
        if (w_avg != averaged.end()) {
          auto b_avg = w_avg->second.find(bid);
          if (b_avg != w_avg->second.end())
            for (int tid : inputs.template_ids) {
              auto t_avg = b_avg->second.find(tid);
              if (t_avg != b_avg->second.end()) per_template.push_back(t_avg->second);
            }
        }
        if (auto r = prompt_ensemble(wid, bid, per_template)) {
          actuals.push_back(wit->second.actual);
          values.push_back(r->value);
        } else {
          ++failed;
        }
      }
      erow.by_split[split] = make_cell(actuals, values, failed);
    }
    report.model_rows.push_back(std::move(erow));
  }

  // model-ensemble table (one row per template, averaged over backends)
  for (int tid : inputs.template_ids) {
    ReportRow row{"ensemble", std::to_string(tid), {}};
    std::set<std::string> template_windows;
    for (const auto& bid : inputs.backend_ids)
      for (const auto& wid : attempted[bid][tid]) template_windows.insert(wid);
    for (const char* split : kSplits) {
      std::vector<double> actuals, values;
      int failed = 0;
      for (const auto& wid : template_windows) {
        auto wit = inputs.windows.find(wid);
        if (wit == inputs.windows.end() || !in_split(inputs, split, wit->second.patient_id))
          continue;
        std::vector<EnsembleResult> per_backend;
        auto w_avg = averaged.find(wid);
        if (w_avg != averaged.end())
          for (const auto& bid : inputs.backend_ids) {
            auto b_avg = w_avg->second.find(bid);
            if (b_avg == w_avg->second.end()) continue;
            auto t_avg = b_avg->second.find(tid);
            if (t_avg != b_avg->second.end()) per_backend.push_back(t_avg->second);
          }
        if (auto r = model_ensemble(wid, tid, per_backend, inputs.ensemble_weights)) {
          actuals.push_back(wit->second.actual);
          values.push_back(r->value);
        } else {
          ++failed;
        }
      }
      row.by_split[split] = make_cell(actuals, values, failed);
    }
    report.ensemble_rows.push_back(std::move(row));
  }

  // baselines
  for (const auto& [system, preds] : inputs.baseline_predictions) {
    ReportRow row{system, "-", {}};
    for (const char* split : kSplits) {
      std::vector<double> actuals, values;
      int failed = 0;
      for (const auto& [wid, info] : inputs.windows) {
        if (!in_split(inputs, split, info.patient_id)) continue;
        auto it = preds.find(wid);
        if (it == preds.end()) {
          ++failed;
          continue;
        }
        actuals.push_back(info.actual);
        values.push_back(it->second);
      }
      row.by_split[split] = make_cell(actuals, values, failed);
    }
    report.baseline_rows.push_back(std::move(row));
  }

  return report;
}

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void csv_rows(std::ostringstream& os, const std::vector<ReportRow>& rows) {
  for (const auto& r : rows)
    for (const auto& [split, c] : r.by_split) {
      os << r.system << ',' << r.prompt << ',' << split << ',';
      if (c.n_windows > 0)
        os << fmt2(c.mae) << ',' << fmt2(c.mape);
      else
        os << ',';
      os << ',' << c.n_windows << ',' << c.n_failed << '\n';
    }
}

void text_rows(std::ostringstream& os, const std::vector<ReportRow>& rows) {
  std::string last_system;
  for (const auto& r : rows) {
    std::string system = r.system == last_system ? "" : r.system;
    last_system = r.system;
    auto cell = [&](const std::string& split, bool mae_col) {
      auto it = r.by_split.find(split);
      if (it == r.by_split.end() || it->second.n_windows == 0) return std::string("-");
      return fmt2(mae_col ? it->second.mae : it->second.mape);
    };
    char line[160];
    std::snprintf(line, sizeof(line), "%-28s %-9s %9s %13s %9s %13s\n",
                  system.c_str(), r.prompt.c_str(), cell("train", true).c_str(),
                  cell("train", false).c_str(), cell("validation", true).c_str(),
                  cell("validation", false).c_str());
    os << line;
  }
}

}  // namespace

std::string report_to_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "system,prompt,split,mae,mape,n_windows,n_failed\n";
  csv_rows(os, report.baseline_rows);
  csv_rows(os, report.model_rows);
  csv_rows(os, report.ensemble_rows);
  return os.str();
}

std::string report_to_text(const MetricsReport& report) {
  std::ostringstream os;
  os << "MODEL PERFORMANCE (MAE in mL/min/1.73m², MAPE in %)\n";
  char hdr[160];
  std::snprintf(hdr, sizeof(hdr), "%-28s %-9s %9s %13s %9s %13s\n", "Model", "Prompt",
                "Train MAE", "Train MAPE", "Val MAE", "Val MAPE");
  os << hdr;
  text_rows(os, report.baseline_rows);
  text_rows(os, report.model_rows);
  os << "\nMODEL-ENSEMBLE RESULTS\n" << hdr;
  text_rows(os, report.ensemble_rows);
  return os.str();
}

std::map<std::string, double> per_window_abs_errors(const ReportInputs& inputs,
                                                    const std::string& system,
                                                    const std::string& split) {
  std::map<std::string, double> out;
  auto averaged = repeat_average_table(inputs.predictions);

  auto record = [&](const std::string& wid, double value) {
    auto wit = inputs.windows.find(wid);
    if (wit == inputs.windows.end() || !in_split(inputs, split, wit->second.patient_id))
      return;
    out[wid] = std::abs(wit->second.actual - value);
  };

  if (auto it = inputs.baseline_predictions.find(system);
      it != inputs.baseline_predictions.end()) {
    for (const auto& [wid, v] : it->second) record(wid, v);
    return out;
  }

  auto colon = system.rfind(':');
  if (colon == std::string::npos)
    throw MetricError("unknown system '" + system + "'");
  std::string head = system.substr(0, colon);
  std::string tail = system.substr(colon + 1);

  for (const auto& [wid, by_backend] : averaged) {
    if (head == "ensemble") {  // model ensemble for one template
      int tid = std::stoi(tail);
      std::vector<EnsembleResult> per_backend;
      for (const auto& bid : inputs.backend_ids) {
        auto b = by_backend.find(bid);
        if (b == by_backend.end()) continue;
        auto t = b->second.find(tid);
        if (t != b->second.end()) per_backend.push_back(t->second);
      }
      if (auto r = model_ensemble(wid, tid, per_backend, inputs.ensemble_weights))
        record(wid, r->value);
    } else if (tail == "ensemble") {  // prompt ensemble for one backend
      auto b = by_backend.find(head);
      if (b == by_backend.end()) continue;
      std::vector<EnsembleResult> per_template;
      for (int tid : inputs.template_ids) {
        auto t = b->second.find(tid);
        if (t != b->second.end()) per_template.push_back(t->second);
      }
      if (auto r = prompt_ensemble(wid, head, per_template)) record(wid, r->value);
    } else {  // single (backend, template) cell
      auto b = by_backend.find(head);
      if (b == by_backend.end()) continue;
      auto t = b->second.find(std::stoi(tail));
      if (t != b->second.end()) record(wid, t->second.value);
    }
  }
  return out;
}

std::string significance_to_csv(const std::vector<SignificanceResult>& results) {
  std::ostringstream os;
  os << "system_a,system_b,split,test,statistic,p_value,n_pairs,no_difference\n";
  for (const auto& r : results) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g,%.6g", r.statistic, r.p_value);
    os << r.system_a << ',' << r.system_b << ',' << r.split << ',' << r.test_name
       << ',' << buf << ',' << r.n_pairs << ',' << (r.no_difference ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace egfr
