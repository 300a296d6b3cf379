#pragma once

#include <cstdint>

#include "egfr/cohort.hpp"

namespace egfr {

enum class TrajectoryFamily { linear, piecewise, noisy };

// Stand-in for the private clinical dataset: a deterministic generator of
// plausible CKD trajectories.
struct SyntheticSpec {
  int n_patients = 50;
  double mean_visits = 11.3;           // Poisson, floored at 5
  TrajectoryFamily family = TrajectoryFamily::linear;
  double baseline_min = 2.44;          // first-visit eGFR range
  double baseline_max = 171.85;
  double slope_per_90d = -1.0;         // eGFR change per 90 days
  double noise_sigma = 2.0;            // only used by the noisy family
  double mean_gap_days = 90;
  double gap_jitter_days = 0;          // uniform +- jitter around the mean gap
  double missing_lab_rate = 0.1;
};

Cohort generate_synthetic_cohort(const SyntheticSpec& spec, uint64_t seed);

}  // namespace egfr
