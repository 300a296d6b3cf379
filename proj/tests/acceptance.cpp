// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Every expected value here is recomputed by an independent oracle,
// never read back from the library under test.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "egfr/backend.hpp"
#include "egfr/cnn.hpp"
#include "egfr/cohort.hpp"
#include "egfr/extract.hpp"
#include "egfr/metrics.hpp"
#include "egfr/numfmt.hpp"
#include "egfr/pipeline.hpp"
#include "egfr/random_forest.hpp"
#include "egfr/report.hpp"
#include "egfr/synthetic.hpp"
#include "helpers.hpp"

using namespace egfr;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report_line(const std::string& name, bool ok, const std::string& detail = "") {
  std::printf("%s  %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(),
              detail.empty() ? "" : " — ", detail.c_str());
  if (!ok) ++failures;
}

struct Check {
  bool ok = true;
  std::string detail;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

fs::path scratch_root() {
  static fs::path p = fs::temp_directory_path() /
                      ("egfr_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

std::string slurp_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string exact_linear_config(const std::string& out_dir,
                                const std::string& extra_backends = "") {
  return R"({
    "output_dir": ")" + out_dir + R"(",
    "seeds": {"split": 11, "synthetic": 22, "mocks": 33},
    "cohort": {"synthetic": {"n_patients": 50, "family": "linear",
                             "mean_visits": 8, "noise_sigma": 0.0,
                             "gap_jitter_days": 0.0, "missing_lab_rate": 0.0}},
    "backends": [{"id": "mock-lin", "kind": "mock", "policy": "linear"})" +
         extra_backends + R"(],
    "repeats": 2,
    "baselines": {"rf": {"n_trees": 30}, "cnn": {"epochs": 40}},
    "report": {"significance": false}
  })";
}

// Shared end-to-end run for criteria 1, 2 and 10: exact-linear cohort, a
// linear and a persistence mock, all templates, baselines on.
struct SharedRun {
  fs::path dir;
  RunConfig cfg;
  double seconds = 0;
  int remote_calls = -1;
  MetricsReport report;
  ReportInputs inputs;

  static SharedRun& get() {
    static SharedRun run = make();
    return run;
  }

  static SharedRun make() {
    SharedRun r;
    r.dir = scratch_root() / "shared";
    r.cfg = parse_config(exact_linear_config(
        (r.dir / "run").string(),
        R"(, {"id": "mock-pers", "kind": "mock", "policy": "persistence"})"));
    auto t0 = std::chrono::steady_clock::now();
    Pipeline p(r.cfg, true);
    p.run_all();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
    r.remote_calls = p.total_remote_calls();
    r.inputs = p.collect_report_inputs();
    r.report = build_report(r.inputs);
    return r;
  }

  // The same windows the pipeline scored, re-derived from first principles.
  std::vector<PredictionWindow> oracle_windows() const {
    Cohort raw = generate_synthetic_cohort(*cfg.synthetic, cfg.seeds.synthetic);
    Cohort clean = preprocess(raw).cohort;
    return generate_windows(clean, cfg.w0);
  }
};

// ---------------------------------------------------------------------------

void criterion_linear_mock_exact() {
  Check c;
  const SharedRun& run = SharedRun::get();
  c.expect(run.remote_calls == 0, "offline run made remote calls");
  c.expect(run.seconds < 60.0,
           "run took " + std::to_string(run.seconds) + "s (limit 60)");
  int cells = 0;
  for (const auto& row : run.report.model_rows)
    if (row.system == "mock-lin")
      for (const auto& [split, cell] : row.by_split) {
        c.expect(cell.n_windows > 0, "empty cell in " + split);
        c.expect(cell.mae <= 0.01,
                 "mae " + std::to_string(cell.mae) + " in prompt " + row.prompt +
                     " / " + split);
        c.expect(cell.mape <= 0.1,
                 "mape " + std::to_string(cell.mape) + " in prompt " + row.prompt +
                     " / " + split);
        ++cells;
      }
  c.expect(cells == 10, "expected 10 mock-lin cells (5 prompts x 2 splits)");
  report_line("linear mock recovers an exactly linear cohort (offline, <60s)", c.ok,
              c.detail);
}

void criterion_persistence_oracle() {
  Check c;
  const SharedRun& run = SharedRun::get();
  // Independent oracle: persistence predicts the last observed eGFR.
  auto windows = run.oracle_windows();
  std::map<std::string, double> abs_err;
  for (const auto& w : windows)
    abs_err[w.id()] = std::abs(w.observed.back().egfr - w.target.egfr);

  for (const char* split : {"train", "validation"}) {
    const auto& patients = std::string(split) == "train"
                               ? run.inputs.train_patients
                               : run.inputs.validation_patients;
    double sum = 0;
    int n = 0;
    for (const auto& w : windows)
      if (patients.count(w.patient_id)) {
        sum += abs_err.at(w.id());
        ++n;
      }
    c.expect(n > 0, std::string("no windows in ") + split);
    double oracle_mae = sum / n;

    bool found = false;
    for (const auto& row : run.report.model_rows)
      if (row.system == "mock-pers" && row.prompt == "1") {
        const MetricsCell& cell = row.by_split.at(split);
        c.expect(cell.n_windows == n, std::string("window count mismatch in ") + split);
        c.expect(std::abs(cell.mae - oracle_mae) <= 1e-9,
                 "mae " + std::to_string(cell.mae) + " vs oracle " +
                     std::to_string(oracle_mae) + " in " + split);
        found = true;
      }
    c.expect(found, "missing mock-pers prompt-1 row");
  }
  report_line("persistence mock MAE matches the last-value oracle to 1e-9", c.ok,
              c.detail);
}

void criterion_ensemble_oracle() {
  Check c;
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> val(1.0, 200.0);
  for (int trial = 0; trial < 1000 && c.ok; ++trial) {
    const int n_templates = 1 + int(rng() % 4);
    const int n_backends = 1 + int(rng() % 3);
    const int n_attempts = 1 + int(rng() % 3);
    std::vector<Prediction> table;
    for (int t = 1; t <= n_templates; ++t)
      for (int b = 0; b < n_backends; ++b)
        for (int a = 1; a <= n_attempts; ++a) {
          Prediction p;
          p.window_id = "w";
          p.template_id = t;
          p.backend_id = "B" + std::to_string(b);
          p.attempt_index = a;
          if (rng() % 5 != 0) {
            p.value = val(rng);
            p.method = ExtractMethod::pattern;
          }
          table.push_back(p);
        }

    auto averaged = repeat_average_table(table);
    for (int t = 1; t <= n_templates && c.ok; ++t)
      for (int b = 0; b < n_backends && c.ok; ++b) {
        std::string bid = "B" + std::to_string(b);
        double sum = 0;
        int n = 0;
        for (const auto& p : table)
          if (p.template_id == t && p.backend_id == bid &&
              p.method != ExtractMethod::failed) {
            sum += p.value;
            ++n;
          }
        bool have = averaged.count("w") && averaged["w"].count(bid) &&
                    averaged["w"][bid].count(t);
        c.expect(have == (n > 0), "presence mismatch");
        if (n > 0 && have) {
          const auto& r = averaged["w"][bid][t];
          c.expect(std::abs(r.value - sum / n) <= 1e-9 * std::abs(sum / n) + 1e-12,
                   "repeat mean differs from brute force");
          c.expect(r.member_count == n, "member count differs");
        }
      }

    // prompt ensemble for B0 and model ensemble for template 1, by brute force
    if (averaged.count("w")) {
      double sum = 0;
      int n = 0;
      std::vector<EnsembleResult> cells;
      if (averaged["w"].count("B0"))
        for (const auto& [tid, r] : averaged["w"]["B0"]) {
          cells.push_back(r);
          sum += r.value;
          ++n;
        }
      auto pe = prompt_ensemble("w", "B0", cells);
      c.expect(pe.has_value() == (n > 0), "prompt ensemble presence");
      if (pe && n > 0)
        c.expect(std::abs(pe->value - sum / n) <= 1e-9, "prompt ensemble mean");

      sum = 0;
      n = 0;
      cells.clear();
      for (auto& [bid, by_tid] : averaged["w"])
        if (by_tid.count(1)) {
          cells.push_back(by_tid[1]);
          sum += by_tid[1].value;
          ++n;
        }
      auto me = model_ensemble("w", 1, cells);
      c.expect(me.has_value() == (n > 0), "model ensemble presence");
      if (me && n > 0)
        c.expect(std::abs(me->value - sum / n) <= 1e-9, "model ensemble mean");
    }
  }
  report_line("ensemble averages match 1000 brute-force random tables", c.ok,
              c.detail);
}

void criterion_metric_hand_values() {
  Check c;
  c.expect(mae({10, 20}, {12, 17}) == 2.5, "mae({10,20},{12,17}) != 2.5");
  c.expect(std::abs(mape({10, 20}, {12, 17}) - 17.5) < 1e-12, "mape != 17.5");

  std::map<std::string, double> a, b;
  for (int i = 0; i < 10; ++i) {
    b["w" + std::to_string(i)] = 2.0 + i;
    a["w" + std::to_string(i)] = 3.0 + i;  // uniform +1 shift
  }
  SignificanceResult r = paired_test(a, b);
  c.expect(std::abs(r.p_value - 2.0 / 1024.0) < 1e-12,
           "uniform-shift p != 2/1024, got " + std::to_string(r.p_value));
  c.expect(r.statistic == 0.0, "uniform-shift statistic != 0");

  SignificanceResult same = paired_test(a, a);
  c.expect(same.no_difference && same.p_value == 1.0, "identical inputs not flagged");
  report_line("metrics reproduce hand-computed MAE, MAPE and signed-rank values",
              c.ok, c.detail);
}

void criterion_extraction_roundtrip() {
  Check c;
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> val(1.5, 199.5);
  int attempted = 0, extracted = 0, failed = 0;
  for (int i = 0; i < 500 && c.ok; ++i) {
    double v = std::round(val(rng) * 10.0) / 10.0;
    std::string vs = format_double(v);
    const std::string forms[4] = {
        mock_sentence(90, v),
        "After reviewing the chart, the predicted value is " + vs + ".",
        "I estimate " + vs + " mL/min/1.73m² at the next visit.",
        "Reasoning: slope is stable. Final answer: " + vs,
    };
    for (const auto& text : forms) {
      ++attempted;
      Prediction p = extract_prediction(text, "w", 1, "b", 1, ExtractionRange{}, {});
      if (p.method == ExtractMethod::failed) {
        ++failed;
        c.expect(false, "no value from: " + text);
      } else {
        ++extracted;
        c.expect(p.value == v, "round-trip " + vs + " -> " + format_double(p.value));
      }
    }
  }
  // malformed bookkeeping: unparseable texts fail without fabricating values
  for (const std::string& text :
       {std::string("the trajectory declines, units are mL/min/1.73m²"),
        std::string("I cannot determine a number from this chart"),
        std::string("value 100000 is far outside any plausible range")}) {
    ++attempted;
    Prediction p = extract_prediction(text, "w", 1, "b", 1, ExtractionRange{}, {});
    c.expect(p.method == ExtractMethod::failed, "malformed text yielded a value");
    ++failed;
  }
  c.expect(attempted == extracted + failed, "attempted != extracted + failed");
  report_line("extraction round-trips 500 values over 4 phrasings; failures audited",
              c.ok, c.detail);
}

void criterion_preprocess_fixture() {
  using namespace egfr::testing;
  Check c;
  Cohort raw;
  auto add = [&](const std::string& pid, const std::vector<long>& days,
                 const std::set<size_t>& hospitalized = {}) {
    raw.profiles[pid] = make_profile(pid);
    Date d0 = make_date(2020, 1, 1);
    for (size_t i = 0; i < days.size(); ++i) {
      VisitRecord v = make_visit(pid, d0 + std::chrono::days(days[i]), 60.0 - i);
      v.in_hospitalization = hospitalized.count(i) > 0;
      raw.visits[pid].push_back(v);
    }
  };
  add("P1", {0, 90, 180, 270, 360, 450});              // kept, 6 visits
  add("P2", {0, 90, 180, 270});                        // dropped: 4 visits
  add("P3", {0, 90, 180, 270, 360, 450}, {2});         // 1 hospital visit, 5 kept
  add("P4", {0, 100, 600, 700, 800, 900});             // run of 4 after split: dropped
  add("P5", {0, 366, 732, 1098, 1464});                // 366-day gaps: kept
  add("P6", {0, 90, 180, 547, 637});                   // 367-day gap: runs 3+2, dropped
  add("P7", {0, 90, 180, 270, 360, 450, 540}, {0, 6}); // 2 hospital visits, 5 kept
  add("P8", {0, 30, 60, 90, 120, 150, 180, 210, 240, 270});  // kept, 10 visits

  PreprocessResult res = preprocess(raw);

  std::set<std::string> survivors;
  for (const auto& [pid, v] : res.cohort.visits) survivors.insert(pid);
  std::set<std::string> expected = {"P1", "P3", "P5", "P7", "P8"};
  c.expect(survivors == expected, "survivor set mismatch");
  if (c.ok) {
    c.expect(res.cohort.visits.at("P1").size() == 6, "P1 visit count");
    c.expect(res.cohort.visits.at("P3").size() == 5, "P3 visit count");
    c.expect(res.cohort.visits.at("P5").size() == 5, "P5 visit count");
    c.expect(res.cohort.visits.at("P7").size() == 5, "P7 visit count");
    c.expect(res.cohort.visits.at("P8").size() == 10, "P8 visit count");
  }

  std::multiset<std::string> reasons;
  for (const auto& a : res.audit) reasons.insert(a.reason);
  c.expect(reasons.count("fewer-than-five") == 3, "P2/P4/P6 patient exclusions");
  c.expect(reasons.count("hospitalization") == 3, "hospitalization visit removals");
  // P4 loses 2 early visits to the gap; P6 loses its trailing 2-visit run
  c.expect(reasons.count("gap-over-366") == 4, "gap-split visit removals");
  for (const auto& a : res.audit)
    if (a.reason == "fewer-than-five")
      c.expect(a.id == "P2" || a.id == "P4" || a.id == "P6",
               "unexpected exclusion of " + a.id);
  report_line("preprocessing fixture: exact survivors, visit counts and audit rows",
              c.ok, c.detail);
}

void criterion_window_formula() {
  using namespace egfr::testing;
  Check c;
  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 30 && c.ok; ++trial) {
    const int n_patients = 2 + int(rng() % 4);
    Cohort cohort;
    std::vector<int> counts;
    for (int p = 0; p < n_patients; ++p) {
      std::string pid = "P" + std::to_string(p);
      int n = 5 + int(rng() % 8);  // 5..12 visits
      counts.push_back(n);
      cohort.profiles[pid] = make_profile(pid);
      Date d0 = make_date(2020, 1, 1);
      for (int i = 0; i < n; ++i)
        cohort.visits[pid].push_back(
            make_visit(pid, d0 + std::chrono::days(90L * i), 70.0 - i));
    }
    // independent lower median
    std::sort(counts.begin(), counts.end());
    int median = counts[(counts.size() - 1) / 2];

    const int w0 = 3;
    auto windows = generate_windows(cohort, w0);
    std::set<std::string> ids;
    std::map<std::string, int> per_patient;
    for (const auto& w : windows) {
      c.expect(ids.insert(w.id()).second, "duplicate window id " + w.id());
      ++per_patient[w.patient_id];
      c.expect(int(w.observed.size()) == w0 + w.window_index - 1,
               "window length mismatch");
      const auto& vs = cohort.visits[w.patient_id];
      c.expect(w.target.date == vs[w.observed.size()].date,
               "target is not the next visit");
      c.expect(w.next_day_diff == 90, "next_day_diff != 90");
    }
    for (const auto& [pid, vs] : cohort.visits) {
      int expected = std::min(median, int(vs.size()) - w0);
      c.expect(per_patient[pid] == expected,
               pid + ": got " + std::to_string(per_patient[pid]) + " windows, want " +
                   std::to_string(expected));
    }
  }
  report_line("window counts and shapes match the enumeration oracle (30 cohorts)",
              c.ok, c.detail);
}

void criterion_cnn_gradient() {
  Check c;
  CnnConfig cfg;
  cfg.seq_len = 7;
  cfg.channels = 2;
  cfg.kernel = 3;
  cfg.static_dim = 2;
  cfg.seed = 99;
  CnnModel model = CnnModel::init(cfg);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0, 1);
  std::vector<std::vector<double>> seqs(3), statics(3);
  std::vector<double> targets(3);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < cfg.seq_len; ++k) seqs[i].push_back(gauss(rng));
    for (int k = 0; k < cfg.static_dim; ++k) statics[i].push_back(gauss(rng));
    targets[i] = gauss(rng);
  }

  std::vector<double> grad;
  cnn_loss_and_grad(model, seqs, statics, targets, &grad);
  double worst = 0;
  const double h = 1e-6;
  for (size_t i = 0; i < model.params.size(); ++i) {
    CnnModel up = model, down = model;
    up.params[i] += h;
    down.params[i] -= h;
    double numeric = (cnn_loss_and_grad(up, seqs, statics, targets, nullptr) -
                      cnn_loss_and_grad(down, seqs, statics, targets, nullptr)) /
                     (2 * h);
    double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
    worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
  }
  c.expect(worst <= 1e-4,
           "worst relative gradient error " + std::to_string(worst));
  report_line("CNN analytic gradient matches finite differences to 1e-4", c.ok,
              c.detail);
}

void criterion_rf_oracle() {
  Check c;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> uni(-5, 5);

  // depth-1, no bootstrap, all features: the single split must minimize SSE
  for (int trial = 0; trial < 25 && c.ok; ++trial) {
    const int n = 8 + int(rng() % 10), d = 2 + int(rng() % 3);
    std::vector<std::vector<double>> X(n, std::vector<double>(d));
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) X[i][k] = uni(rng);
      y[i] = uni(rng);
    }
    RfParams params;
    params.n_trees = 1;
    params.max_depth = 1;
    params.min_leaf = 1;
    params.bootstrap = false;
    params.max_features = d;
    params.seed = rng();
    RfModel model = rf_train(X, y, params);

    auto sse_of = [&](int f, double thr) {
      double sl = 0, sr = 0;
      int nl = 0, nr = 0;
      for (int i = 0; i < n; ++i)
        (X[i][f] <= thr ? (sl += y[i], ++nl) : (sr += y[i], ++nr));
      if (nl == 0 || nr == 0) return 1e18;
      double ml = sl / nl, mr = sr / nr, sse = 0;
      for (int i = 0; i < n; ++i) {
        double m = X[i][f] <= thr ? ml : mr;
        sse += (y[i] - m) * (y[i] - m);
      }
      return sse;
    };
    double best = 1e18;
    for (int f = 0; f < d; ++f) {
      std::vector<double> vals;
      for (int i = 0; i < n; ++i) vals.push_back(X[i][f]);
      std::sort(vals.begin(), vals.end());
      for (int i = 0; i + 1 < int(vals.size()); ++i)
        if (vals[i] != vals[i + 1])
          best = std::min(best, sse_of(f, (vals[i] + vals[i + 1]) / 2));
    }
    const RfNode& root = model.trees[0].nodes[0];
    c.expect(root.feature >= 0, "depth-1 tree did not split");
    if (root.feature >= 0) {
      double got = sse_of(root.feature, root.threshold);
      c.expect(std::abs(got - best) <= 1e-9 * std::max(1.0, best),
               "split SSE " + std::to_string(got) + " vs oracle " +
                   std::to_string(best));
    }
  }

  // bit stability: same seed twice, and threads 4 vs 1, byte-identical models
  {
    const int n = 200, d = 6;
    std::vector<std::vector<double>> X(n, std::vector<double>(d));
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) X[i][k] = uni(rng);
      y[i] = uni(rng);
    }
    RfParams params;
    params.n_trees = 40;
    params.seed = 5;
    std::string one = rf_train(X, y, params).to_json();
    std::string two = rf_train(X, y, params).to_json();
    params.threads = 4;
    std::string parallel = rf_train(X, y, params).to_json();
    c.expect(one == two, "same-seed retrain differs");
    c.expect(one == parallel, "threaded training differs from serial");
  }
  report_line("RF splits match the exhaustive SSE oracle; training is bit-stable",
              c.ok, c.detail);
}

void criterion_report_structure() {
  Check c;
  fs::path dir = scratch_root() / "structure";
  std::string cfg_text = R"({
    "output_dir": ")" + (dir / "run").string() + R"(",
    "seeds": {"split": 5, "synthetic": 6, "mocks": 7},
    "cohort": {"synthetic": {"n_patients": 12, "family": "noisy", "mean_visits": 8}},
    "backends": [
      {"id": "m-lin", "kind": "mock", "policy": "linear"},
      {"id": "m-pers", "kind": "mock", "policy": "persistence"},
      {"id": "m-noisy", "kind": "mock", "policy": "noisy", "sigma": 2.0},
      {"id": "m-noisy2", "kind": "mock", "policy": "noisy", "sigma": 5.0}
    ],
    "repeats": 2,
    "baselines": {"rf": {"n_trees": 20}, "cnn": {"epochs": 30}}
  })";
  RunConfig cfg = parse_config(cfg_text);
  Pipeline p(cfg, true);
  p.run_all();
  MetricsReport report = build_report(p.collect_report_inputs());

  // 4 backends x (4 template rows + 1 ensemble row)
  c.expect(report.model_rows.size() == 20,
           "model rows: " + std::to_string(report.model_rows.size()));
  std::map<std::string, std::set<std::string>> prompts_by_system;
  for (const auto& row : report.model_rows) {
    prompts_by_system[row.system].insert(row.prompt);
    c.expect(row.by_split.count("train") == 1, row.system + " missing train cell");
    c.expect(row.by_split.count("validation") == 1,
             row.system + " missing validation cell");
  }
  c.expect(prompts_by_system.size() == 4, "expected 4 backend systems");
  for (const auto& [system, prompts] : prompts_by_system)
    c.expect(prompts == std::set<std::string>{"1", "2", "3", "4", "ensemble"},
             system + " prompt rows incomplete");

  c.expect(report.ensemble_rows.size() == 4,
           "model-ensemble rows: " + std::to_string(report.ensemble_rows.size()));
  c.expect(report.baseline_rows.size() == 2,
           "baseline rows: " + std::to_string(report.baseline_rows.size()));
  for (const auto& row : report.baseline_rows) {
    c.expect(row.prompt == "-", "baseline prompt label");
    c.expect(row.by_split.count("train") == 1 && row.by_split.count("validation") == 1,
             row.system + " missing split cells");
  }

  // the CSV mirrors the same structure: header + 26 rows x 2 splits
  std::string csv = slurp_file(dir / "run" / "report.csv");
  int lines = 0;
  for (char ch : csv) lines += ch == '\n';
  c.expect(lines == 1 + 26 * 2, "report.csv line count: " + std::to_string(lines));
  report_line("report covers 4 backends x 5 prompts + 4 ensembles + 2 baselines",
              c.ok, c.detail);
}

void criterion_replay() {
  Check c;

  // byte-identical reruns of the same config in fresh directories
  {
    fs::path dir = scratch_root() / "determinism";
    RunConfig a = parse_config(exact_linear_config((dir / "a").string()));
    RunConfig b = parse_config(exact_linear_config((dir / "b").string()));
    Pipeline pa(a, true);
    pa.run_all();
    Pipeline pb(b, true);
    pb.run_all();
    for (const char* f : {"report.csv", "predictions.csv", "ensembles.csv",
                          "baselines.csv", "manifest.json"})
      c.expect(slurp_file(dir / "a" / f) == slurp_file(dir / "b" / f),
               std::string(f) + " differs between identical runs");
  }

  // remote cache replay: run once through a counting transport, then replay
  // offline through a transport that must never be reached
  fs::path dir = scratch_root() / "replay";
  std::string cfg_text = R"({
    "output_dir": ")" + (dir / "run").string() + R"(",
    "seeds": {"split": 1, "synthetic": 2, "mocks": 3},
    "cohort": {"synthetic": {"n_patients": 5, "family": "linear", "mean_visits": 7}},
    "backends": [{"id": "rem", "kind": "remote", "endpoint": "https://example.invalid",
                  "model": "m", "credential_env": "EGFR_KEY"}],
    "repeats": 1, "templates": [1, 2],
    "baselines": {"enabled": false},
    "report": {"significance": false}
  })";
  RunConfig cfg = parse_config(cfg_text);
  int calls = 0;
  Transport counting = [&](const BackendConfig&, const std::string&,
                           const std::vector<uint8_t>&) -> std::string {
    ++calls;
    return "The predicted value is 48.5 mL/min/1.73m².";
  };
  std::string first_report;
  {
    Pipeline p(cfg, false, real_clock(), counting);
    p.run_all();
    first_report = slurp_file(dir / "run" / "report.csv");
    c.expect(calls > 0, "transport never called on the first run");
  }
  const int first_calls = calls;
  for (const auto& stage : kStageNames)
    fs::remove(dir / "run" / ("stage." + stage + ".json"));
  Transport forbidden = [&](const BackendConfig&, const std::string&,
                            const std::vector<uint8_t>&) -> std::string {
    throw TransportError("replay must be served from the cache");
  };
  {
    Pipeline p(cfg, true, real_clock(), forbidden);
    p.run_all();
    c.expect(p.total_remote_calls() == 0, "replay made remote calls");
  }
  c.expect(calls == first_calls, "replay reached the counting transport");
  c.expect(slurp_file(dir / "run" / "report.csv") == first_report,
           "replayed report differs from the original");
  report_line("reruns are byte-identical; cached responses replay with zero calls",
              c.ok, c.detail);
}

}  // namespace

int main() {
  criterion_linear_mock_exact();
  criterion_persistence_oracle();
  criterion_ensemble_oracle();
  criterion_metric_hand_values();
  criterion_extraction_roundtrip();
  criterion_preprocess_fixture();
  criterion_window_formula();
  criterion_cnn_gradient();
  criterion_rf_oracle();
  criterion_report_structure();
  criterion_replay();

  fs::remove_all(scratch_root());
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all 11 criteria passed\n");
  return 0;
}
