#include "egfr/features.hpp"

namespace egfr {

FeatureEncoder FeatureEncoder::fit(const std::vector<PredictionWindow>& train_windows) {
  FeatureEncoder e;
  double bs = 0, ps = 0, us = 0;
  size_t bn = 0, pn = 0, un = 0;
  for (const auto& w : train_windows) {
    const auto& latest = w.observed.back();
    if (latest.bun) { bs += *latest.bun; ++bn; }
    if (latest.phosphorus) { ps += *latest.phosphorus; ++pn; }
    if (latest.uacr) { us += *latest.uacr; ++un; }
  }
  e.bun_mean_ = bn ? bs / bn : 0.0;
  e.phosphorus_mean_ = pn ? ps / pn : 0.0;
  e.uacr_mean_ = un ? us / un : 0.0;

  e.names_ = {"egfr_lag2", "egfr_lag1", "egfr_last",
              "bun", "bun_missing", "phosphorus", "phosphorus_missing",
              "uacr", "uacr_missing", "next_day_diff",
              "age", "gender", "ckd_stage", "charlson_index"};
  for (const auto& n : comorbidity_names()) e.names_.push_back("comorbidity_" + n);
  for (const auto& n : medication_names()) e.names_.push_back("medication_" + n);
  return e;
}

std::vector<double> FeatureEncoder::encode(const PredictionWindow& window,
                                           const PatientProfile& profile) const {
  if (window.observed.empty())
    throw ValidationError("cannot encode an empty window");
  std::vector<double> x;
  x.reserve(names_.size());

  // last 3 eGFR values, oldest first, left-padded with the earliest value
  const auto& obs = window.observed;
  for (int k = 2; k >= 0; --k) {
    int i = int(obs.size()) - 1 - k;
    x.push_back(obs[std::max(i, 0)].egfr);
  }
  const auto& latest = obs.back();
  x.push_back(latest.bun.value_or(bun_mean_));
  x.push_back(latest.bun ? 0.0 : 1.0);
  x.push_back(latest.phosphorus.value_or(phosphorus_mean_));
  x.push_back(latest.phosphorus ? 0.0 : 1.0);
  x.push_back(latest.uacr.value_or(uacr_mean_));
  x.push_back(latest.uacr ? 0.0 : 1.0);
  x.push_back(double(window.next_day_diff));
  x.push_back(profile.age_at_baseline);
  x.push_back(profile.gender == Gender::male ? 1.0 : 0.0);
  x.push_back(double(profile.ckd_stage));
  x.push_back(double(profile.charlson_index));
  for (const auto& n : comorbidity_names()) {
    auto it = profile.comorbidities.find(n);
    x.push_back(it != profile.comorbidities.end() && it->second ? 1.0 : 0.0);
  }
  for (const auto& n : medication_names()) {
    auto it = profile.medications.find(n);
    x.push_back(it != profile.medications.end() && it->second ? 1.0 : 0.0);
  }
  return x;
}

SequenceInput make_sequence_input(const PredictionWindow& window,
                                  const PatientProfile& profile,
                                  const FeatureEncoder& encoder, int seq_len) {
  if (seq_len < 1) throw ConfigError("sequence length must be >= 1");
  SequenceInput s;
  s.sequence.resize(seq_len);
  const auto& obs = window.observed;
  for (int i = 0; i < seq_len; ++i) {
    int j = int(obs.size()) - seq_len + i;
    s.sequence[i] = obs[std::max(j, 0)].egfr;
  }
  s.statics = encoder.encode(window, profile);
  return s;
}

}  // namespace egfr
