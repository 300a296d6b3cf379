#include "egfr/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "egfr/csv.hpp"
#include "egfr/numfmt.hpp"

namespace egfr {

std::string gender_name(Gender g) { return g == Gender::male ? "male" : "female"; }

const std::vector<std::string>& comorbidity_names() {
  static const std::vector<std::string> names = {
      "diabetes_mellitus", "hypertension", "hyperlipidemia",
      "coronary_artery_disease", "cardiovascular_disease", "atrial_fibrillation",
      "peripheral_artery_disease", "dementia", "hepatitis_b_virus",
      "hepatitis_c_virus", "liver_cirrhosis", "peptic_ulcer", "malignancy",
      "gouty_nephropathy", "chronic_obstructive_pulmonary_disease", "asthma"};
  return names;
}

const std::vector<std::string>& medication_names() {
  static const std::vector<std::string> names = {
      "antiplatelets", "anticoagulants", "ace_inhibitors_or_arbs",
      "calcium_channel_blockers", "beta_blockers", "alpha_blockers", "statins",
      "fibrates", "metformin", "dpp4_inhibitors", "thiazolidinediones",
      "sulfonylureas", "alpha_glucosidase_inhibitors", "insulin",
      "proton_pump_inhibitors", "h2_blockers", "thiazide_diuretics",
      "loop_diuretics", "potassium_sparing_agents", "colchicine",
      "uric_acid_lowering_agents", "nsaids", "traditional_nsaids",
      "cox2_inhibitors"};
  return names;
}

int Cohort::median_visit_count() const {
  if (visits.empty()) return 0;
  std::vector<int> counts;
  counts.reserve(visits.size());
  for (const auto& [id, v] : visits) counts.push_back(int(v.size()));
  std::sort(counts.begin(), counts.end());
  return counts[(counts.size() - 1) / 2];  // lower median
}

size_t Cohort::total_visits() const {
  size_t n = 0;
  for (const auto& [id, v] : visits) n += v.size();
  return n;
}

namespace {

double require_number(const std::string& field, const std::string& name, int row) {
  auto v = parse_double(field);
  if (!v)
    throw ParseError("row " + std::to_string(row) + ": field '" + name +
                     "' is not a number: '" + field + "'");
  return *v;
}

std::optional<double> optional_number(const std::string& field, const std::string& name,
                                      int row) {
  if (field.empty()) return std::nullopt;
  double v = require_number(field, name, row);
  if (v < 0)
    throw ParseError("row " + std::to_string(row) + ": field '" + name +
                     "' must be non-negative");
  return v;
}

int require_column(const CsvTable& t, const std::string& name) {
  int c = t.column(name);
  if (c < 0) throw ParseError("missing required column '" + name + "'");
  return c;
}

}  // namespace

Cohort ingest_cohort(std::istream& visits_csv, std::istream& profiles_csv) {
  Cohort cohort;

  CsvTable vt = read_csv(visits_csv);
  int c_pid = require_column(vt, "patient_id");
  int c_date = require_column(vt, "date");
  int c_egfr = require_column(vt, "egfr");
  int c_bun = require_column(vt, "bun");
  int c_phos = require_column(vt, "phosphorus");
  int c_uacr = require_column(vt, "uacr");
  int c_hosp = require_column(vt, "in_hospitalization");

  int row = 1;
  for (const auto& r : vt.rows) {
    ++row;
    if (r.size() != vt.header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(vt.header.size()) + " fields, got " +
                       std::to_string(r.size()));
    VisitRecord v;
    v.patient_id = r[c_pid];
    if (v.patient_id.empty())
      throw ParseError("row " + std::to_string(row) + ": field 'patient_id' is empty");
    auto date = parse_iso_date(r[c_date]);
    if (!date)
      throw ParseError("row " + std::to_string(row) +
                       ": field 'date' is not an ISO-8601 date: '" + r[c_date] + "'");
    v.date = *date;
    v.egfr = require_number(r[c_egfr], "egfr", row);
    if (v.egfr <= 0)
      throw ParseError("row " + std::to_string(row) + ": field 'egfr' must be > 0");
    v.bun = optional_number(r[c_bun], "bun", row);
    v.phosphorus = optional_number(r[c_phos], "phosphorus", row);
    v.uacr = optional_number(r[c_uacr], "uacr", row);
    const std::string& h = r[c_hosp];
    if (h != "0" && h != "1")
      throw ParseError("row " + std::to_string(row) +
                       ": field 'in_hospitalization' must be 0 or 1");
    v.in_hospitalization = h == "1";
    cohort.visits[v.patient_id].push_back(std::move(v));
  }

  for (auto& [pid, vs] : cohort.visits) {
    std::stable_sort(vs.begin(), vs.end(),
                     [](const VisitRecord& a, const VisitRecord& b) { return a.date < b.date; });
    for (size_t i = 1; i < vs.size(); ++i)
      if (vs[i].date == vs[i - 1].date)
        throw ValidationError("duplicate visit for patient '" + pid + "' on " +
                              format_iso_date(vs[i].date));
  }

  CsvTable pt = read_csv(profiles_csv);
  int p_pid = require_column(pt, "patient_id");
  int p_gender = require_column(pt, "gender");
  int p_age = require_column(pt, "age_at_baseline");
  int p_cause = require_column(pt, "ckd_cause");
  int p_smoking = require_column(pt, "smoking");
  int p_drink = require_column(pt, "drinking_frequency");
  int p_stage = require_column(pt, "ckd_stage");
  int p_cci = require_column(pt, "charlson_index");

  row = 1;
  for (const auto& r : pt.rows) {
    ++row;
    PatientProfile p;
    p.patient_id = r[p_pid];
    const std::string& g = r[p_gender];
    if (g == "male")
      p.gender = Gender::male;
    else if (g == "female")
      p.gender = Gender::female;
    else
      throw ParseError("row " + std::to_string(row) +
                       ": field 'gender' must be male or female");
    p.age_at_baseline = require_number(r[p_age], "age_at_baseline", row);
    p.ckd_cause = r[p_cause];
    p.smoking = r[p_smoking];
    p.drinking_frequency = r[p_drink];
    p.ckd_stage = int(require_number(r[p_stage], "ckd_stage", row));
    if (p.ckd_stage < 1 || p.ckd_stage > 5)
      throw ParseError("row " + std::to_string(row) + ": field 'ckd_stage' must be 1..5");
    p.charlson_index = int(require_number(r[p_cci], "charlson_index", row));
    if (p.charlson_index < 0)
      throw ParseError("row " + std::to_string(row) + ": field 'charlson_index' must be >= 0");
    auto read_flags = [&](const std::vector<std::string>& names,
                          std::map<std::string, bool>& out) {
      for (const auto& name : names) {
        int c = require_column(pt, name);
        const std::string& f = r[c];
        if (f != "0" && f != "1")
          throw ParseError("row " + std::to_string(row) + ": field '" + name +
                           "' must be 0 or 1");
        out[name] = f == "1";
      }
    };
    read_flags(comorbidity_names(), p.comorbidities);
    read_flags(medication_names(), p.medications);
    if (cohort.profiles.count(p.patient_id))
      throw ValidationError("duplicate profile for patient '" + p.patient_id + "'");
    cohort.profiles[p.patient_id] = std::move(p);
  }

  for (const auto& [pid, vs] : cohort.visits)
    if (!cohort.profiles.count(pid))
      throw ValidationError("patient '" + pid + "' has visits but no profile");

  return cohort;
}

PreprocessResult preprocess(const Cohort& raw) {
  PreprocessResult res;
  res.cohort.profiles = raw.profiles;

  for (const auto& [pid, all] : raw.visits) {
    std::vector<VisitRecord> kept;
    for (const auto& v : all) {
      if (v.in_hospitalization)
        res.audit.push_back({"visit", pid + "@" + format_iso_date(v.date), "hospitalization"});
      else
        kept.push_back(v);
    }

    // Longest contiguous run with all gaps <= 366 days; earliest run on ties.
    size_t best_begin = 0, best_len = 0;
    size_t begin = 0;
    for (size_t i = 0; i <= kept.size(); ++i) {
      bool brk = i == kept.size() ||
                 (i > begin && day_diff(kept[i].date, kept[i - 1].date) > 366);
      if (brk) {
        size_t len = i - begin;
        if (len > best_len) {
          best_len = len;
          best_begin = begin;
        }
        begin = i;
      }
    }
    for (size_t i = 0; i < kept.size(); ++i)
      if (i < best_begin || i >= best_begin + best_len)
        res.audit.push_back({"visit", pid + "@" + format_iso_date(kept[i].date), "gap-over-366"});
    std::vector<VisitRecord> run(kept.begin() + best_begin,
                                 kept.begin() + best_begin + best_len);

    if (run.size() < 5) {
      res.audit.push_back({"patient", pid, "fewer-than-five"});
      continue;
    }
    res.cohort.visits[pid] = std::move(run);
  }

  for (auto it = res.cohort.profiles.begin(); it != res.cohort.profiles.end();)
    it = res.cohort.visits.count(it->first) ? std::next(it) : res.cohort.profiles.erase(it);

  if (res.cohort.visits.empty())
    throw ValidationError("cohort is empty after preprocessing");
  return res;
}

std::vector<PredictionWindow> generate_windows(const Cohort& cohort, int initial_width) {
  if (initial_width < 2)
    throw ConfigError("initial window width must be >= 2, got " +
                      std::to_string(initial_width));
  const int m_cap = cohort.median_visit_count();
  std::vector<PredictionWindow> out;
  for (const auto& [pid, vs] : cohort.visits) {
    const int n = int(vs.size());
    const int count = std::min(m_cap, n - initial_width);
    for (int m = 1; m <= count; ++m) {
      PredictionWindow w;
      w.patient_id = pid;
      w.window_index = m;
      w.observed.assign(vs.begin(), vs.begin() + initial_width + m - 1);
      w.target = vs[initial_width + m - 1];
      w.next_day_diff = day_diff(w.target.date, w.observed.back().date);
      out.push_back(std::move(w));
    }
  }
  return out;
}

PatientSplit split_patients(const Cohort& cohort, double train_fraction, uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1))
    throw ConfigError("train_fraction must be in (0, 1)");
  if (cohort.patient_count() < 2)
    throw ValidationError("cannot split a cohort with fewer than 2 patients");

  std::vector<std::string> ids;
  ids.reserve(cohort.visits.size());
  for (const auto& [pid, v] : cohort.visits) ids.push_back(pid);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  size_t n_train = size_t(std::llround(train_fraction * double(ids.size())));
  PatientSplit s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.validation.assign(ids.begin() + n_train, ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

std::string audit_csv(const std::vector<AuditRow>& audit) {
  std::ostringstream os;
  os << "entity,id,reason\n";
  for (const auto& a : audit) os << a.entity << ',' << a.id << ',' << a.reason << '\n';
  return os.str();
}

std::string cohort_to_csv_visits(const Cohort& c) {
  std::ostringstream os;
  os << "patient_id,date,egfr,bun,phosphorus,uacr,in_hospitalization\n";
  auto opt = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  for (const auto& [pid, vs] : c.visits)
    for (const auto& v : vs)
      os << pid << ',' << format_iso_date(v.date) << ',' << format_double(v.egfr) << ','
         << opt(v.bun) << ',' << opt(v.phosphorus) << ',' << opt(v.uacr) << ','
         << (v.in_hospitalization ? '1' : '0') << '\n';
  return os.str();
}

std::string cohort_to_csv_profiles(const Cohort& c) {
  std::ostringstream os;
  os << "patient_id,gender,age_at_baseline,ckd_cause,smoking,drinking_frequency,"
        "ckd_stage,charlson_index";
  for (const auto& n : comorbidity_names()) os << ',' << n;
  for (const auto& n : medication_names()) os << ',' << n;
  os << '\n';
  for (const auto& [pid, p] : c.profiles) {
    os << pid << ',' << gender_name(p.gender) << ',' << format_double(p.age_at_baseline)
       << ',' << p.ckd_cause << ',' << p.smoking << ',' << p.drinking_frequency << ','
       << p.ckd_stage << ',' << p.charlson_index;
    for (const auto& n : comorbidity_names())
      os << ',' << (p.comorbidities.count(n) && p.comorbidities.at(n) ? '1' : '0');
    for (const auto& n : medication_names())
      os << ',' << (p.medications.count(n) && p.medications.at(n) ? '1' : '0');
    os << '\n';
  }
  return os.str();
}

}  // namespace egfr
