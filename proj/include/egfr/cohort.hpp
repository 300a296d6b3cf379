#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egfr/dates.hpp"
#include "egfr/errors.hpp"

namespace egfr {

// One clinic visit's laboratory values.
struct VisitRecord {
  std::string patient_id;
  Date date{};
  double egfr = 0;  // mL/min/1.73m², > 0
  std::optional<double> bun;         // mg/dL
  std::optional<double> phosphorus;  // mg/dL
  std::optional<double> uacr;        // mg/g
  bool in_hospitalization = false;
};

enum class Gender { female, male };

std::string gender_name(Gender g);

// Closed flag vocabularies; CSV columns and prompt listings use these names.
const std::vector<std::string>& comorbidity_names();  // 16 flags (Charlson index is separate)
const std::vector<std::string>& medication_names();   // 24 flags

struct PatientProfile {
  std::string patient_id;
  Gender gender = Gender::female;
  double age_at_baseline = 0;  // years
  std::string ckd_cause;
  std::string smoking;             // never / former / current
  std::string drinking_frequency;  // never / occasional / regular
  int ckd_stage = 3;               // 1..5
  int charlson_index = 0;
  std::map<std::string, bool> comorbidities;
  std::map<std::string, bool> medications;
};

struct Cohort {
  std::map<std::string, PatientProfile> profiles;
  std::map<std::string, std::vector<VisitRecord>> visits;  // date-ascending per patient

  int patient_count() const { return int(visits.size()); }
  // Lower median of per-patient visit counts.
  int median_visit_count() const;
  size_t total_visits() const;
};

struct AuditRow {
  std::string entity;  // "visit" | "patient"
  std::string id;      // patient_id or patient_id@date
  std::string reason;
};

struct PreprocessResult {
  Cohort cohort;
  std::vector<AuditRow> audit;
};

// A prefix of a patient's visit sequence plus the held-out next visit.
struct PredictionWindow {
  std::string patient_id;
  int window_index = 1;  // m >= 1
  std::vector<VisitRecord> observed;
  VisitRecord target;
  long next_day_diff = 0;  // target date - last observed date, days

  std::string id() const { return patient_id + "_" + std::to_string(window_index); }
};

// Parses the visits file and the per-patient profile file. Visits end up
// date-sorted; duplicate (patient, date) rows and malformed fields are
// reported with their row number.
Cohort ingest_cohort(std::istream& visits_csv, std::istream& profiles_csv);

// Hospitalization removal, >366-day gap splitting (longest contiguous run,
// earliest on ties), then <5-visit patient exclusion.
PreprocessResult preprocess(const Cohort& raw);

std::vector<PredictionWindow> generate_windows(const Cohort& cohort, int initial_width = 3);

struct PatientSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

PatientSplit split_patients(const Cohort& cohort, double train_fraction, uint64_t seed);

std::string audit_csv(const std::vector<AuditRow>& audit);

// Serialization used by the pipeline artifacts.
std::string cohort_to_csv_visits(const Cohort& c);
std::string cohort_to_csv_profiles(const Cohort& c);

}  // namespace egfr
