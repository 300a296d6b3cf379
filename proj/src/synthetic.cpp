#include "egfr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace egfr {

namespace {

int ckd_stage_for(double egfr) {
  if (egfr >= 90) return 1;
  if (egfr >= 60) return 2;
  if (egfr >= 30) return 3;
  if (egfr >= 15) return 4;
  return 5;
}

}  // namespace

Cohort generate_synthetic_cohort(const SyntheticSpec& spec, uint64_t seed) {
  if (spec.n_patients <= 0) throw ConfigError("synthetic spec: n_patients must be > 0");
  if (spec.baseline_min <= 0 || spec.baseline_max < spec.baseline_min)
    throw ConfigError("synthetic spec: invalid baseline eGFR range");
  if (spec.mean_visits < 5) throw ConfigError("synthetic spec: mean_visits must be >= 5");

  static const char* kCauses[] = {"diabetic nephropathy", "hypertensive nephrosclerosis",
                                  "chronic glomerulonephritis", "polycystic kidney disease",
                                  "unknown"};
  static const char* kSmoking[] = {"never", "former", "current"};
  static const char* kDrinking[] = {"never", "occasional", "regular"};

  Cohort cohort;
  std::mt19937_64 master(seed);

  for (int i = 0; i < spec.n_patients; ++i) {
    std::mt19937_64 rng(master());
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "P%04d", i + 1);
    std::string pid = idbuf;

    std::poisson_distribution<int> visit_count_dist(spec.mean_visits);
    int n_visits = std::max(5, visit_count_dist(rng));

    std::uniform_real_distribution<double> baseline_dist(spec.baseline_min,
                                                         spec.baseline_max);
    double baseline = baseline_dist(rng);
    // Keep declining trajectories from crossing zero within the study span.
    double total_drift =
        spec.slope_per_90d * (n_visits * spec.mean_gap_days) / 90.0;
    if (total_drift < 0 && baseline + total_drift < 2.0)
      baseline = std::min(spec.baseline_max, 2.0 - total_drift);

    Date start = make_date(2018, 1, 1) +
                 std::chrono::days(std::uniform_int_distribution<int>(0, 365)(rng));

    double slope2 = spec.slope_per_90d;
    int break_visit = n_visits / 2;
    if (spec.family == TrajectoryFamily::piecewise)
      slope2 = spec.slope_per_90d * std::uniform_real_distribution<double>(1.5, 3.0)(rng);

    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    std::normal_distribution<double> lab_noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<VisitRecord> visits;
    Date date = start;
    double day0 = 0;
    double break_day = 0, break_value = baseline;
    for (int k = 0; k < n_visits; ++k) {
      if (k > 0) {
        int gap = int(std::llround(
            spec.mean_gap_days +
            std::uniform_real_distribution<double>(-spec.gap_jitter_days,
                                                   spec.gap_jitter_days)(rng)));
        gap = std::clamp(gap, 1, 366);
        date += std::chrono::days(gap);
      }
      double days = double(day_diff(date, start));
      double value;
      if (spec.family == TrajectoryFamily::piecewise && k >= break_visit) {
        if (k == break_visit) {
          break_day = days;
          break_value = baseline + spec.slope_per_90d * break_day / 90.0;
        }
        value = break_value + slope2 * (days - break_day) / 90.0;
      } else {
        value = baseline + spec.slope_per_90d * days / 90.0;
      }
      if (spec.family == TrajectoryFamily::noisy) value += noise(rng);
      value = std::max(value, 1.0);

      VisitRecord v;
      v.patient_id = pid;
      v.date = date;
      v.egfr = value;
      if (unit(rng) >= spec.missing_lab_rate)
        v.bun = std::max(4.0, 8.0 + (100.0 - value) * 0.35 + 3.0 * lab_noise(rng));
      if (unit(rng) >= spec.missing_lab_rate)
        v.phosphorus = std::max(1.5, 2.6 + (100.0 - value) * 0.02 + 0.4 * lab_noise(rng));
      if (unit(rng) >= spec.missing_lab_rate)
        v.uacr = std::exp(3.0 + (100.0 - value) * 0.03 + 0.5 * lab_noise(rng));
      visits.push_back(std::move(v));
      day0 = days;
    }
    (void)day0;
    cohort.visits[pid] = std::move(visits);

    PatientProfile p;
    p.patient_id = pid;
    p.gender = unit(rng) < 0.5 ? Gender::female : Gender::male;
    p.age_at_baseline = std::uniform_real_distribution<double>(19.5, 87.6)(rng);
    p.ckd_cause = kCauses[std::uniform_int_distribution<int>(0, 4)(rng)];
    p.smoking = kSmoking[std::uniform_int_distribution<int>(0, 2)(rng)];
    p.drinking_frequency = kDrinking[std::uniform_int_distribution<int>(0, 2)(rng)];
    p.ckd_stage = ckd_stage_for(baseline);
    int cci = 0;
    for (const auto& name : comorbidity_names()) {
      bool has = unit(rng) < 0.2;
      p.comorbidities[name] = has;
      if (has) ++cci;
    }
    p.charlson_index = cci;
    for (const auto& name : medication_names()) p.medications[name] = unit(rng) < 0.25;
    cohort.profiles[pid] = std::move(p);
  }
  return cohort;
}

}  // namespace egfr
