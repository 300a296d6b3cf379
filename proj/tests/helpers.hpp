#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "egfr/cohort.hpp"

namespace egfr::testing {

inline PatientProfile make_profile(const std::string& pid = "P1") {
  PatientProfile p;
  p.patient_id = pid;
  p.gender = Gender::male;
  p.age_at_baseline = 64;
  p.ckd_cause = "diabetic nephropathy";
  p.smoking = "former";
  p.drinking_frequency = "never";
  p.ckd_stage = 3;
  p.charlson_index = 4;
  for (const auto& n : comorbidity_names()) p.comorbidities[n] = false;
  for (const auto& n : medication_names()) p.medications[n] = false;
  p.comorbidities["diabetes_mellitus"] = true;
  p.comorbidities["hypertension"] = true;
  p.medications["statins"] = true;
  return p;
}

inline VisitRecord make_visit(const std::string& pid, Date date, double egfr) {
  VisitRecord v;
  v.patient_id = pid;
  v.date = date;
  v.egfr = egfr;
  v.bun = 24.0;
  v.phosphorus = 4.1;
  v.uacr = 300.0;
  return v;
}

// Window over `egfrs` at 90-day spacing starting 2020-01-01; the last entry
// becomes the target.
inline PredictionWindow make_window(const std::vector<double>& egfrs,
                                    const std::string& pid = "P1", int index = 1) {
  PredictionWindow w;
  w.patient_id = pid;
  w.window_index = index;
  Date d0 = make_date(2020, 1, 1);
  for (size_t i = 0; i + 1 < egfrs.size(); ++i)
    w.observed.push_back(make_visit(pid, d0 + std::chrono::days(long(90 * i)), egfrs[i]));
  w.target = make_visit(pid, d0 + std::chrono::days(long(90 * (egfrs.size() - 1))),
                        egfrs.back());
  w.next_day_diff = day_diff(w.target.date, w.observed.back().date);
  return w;
}

inline std::string visits_header() {
  return "patient_id,date,egfr,bun,phosphorus,uacr,in_hospitalization\n";
}

inline std::string profiles_header() {
  std::string h =
      "patient_id,gender,age_at_baseline,ckd_cause,smoking,drinking_frequency,"
      "ckd_stage,charlson_index";
  for (const auto& n : comorbidity_names()) h += "," + n;
  for (const auto& n : medication_names()) h += "," + n;
  return h + "\n";
}

inline std::string profile_row(const std::string& pid) {
  std::string r = pid + ",female,60,hypertensive nephropathy,never,never,3,2";
  for (size_t i = 0; i < comorbidity_names().size() + medication_names().size(); ++i)
    r += ",0";
  return r + "\n";
}

inline Cohort ingest_from_strings(const std::string& visits, const std::string& profiles) {
  std::istringstream v(visits), p(profiles);
  return ingest_cohort(v, p);
}

}  // namespace egfr::testing
