#pragma once

#include <string>
#include <vector>

#include "egfr/cohort.hpp"

namespace egfr {

// Tabular features for the chart-free baselines. Missing labs are filled
// with the training-split mean plus a 0/1 missing indicator, so the encoder
// has to be fitted on training windows first.
class FeatureEncoder {
 public:
  static FeatureEncoder fit(const std::vector<PredictionWindow>& train_windows);

  std::vector<double> encode(const PredictionWindow& window,
                             const PatientProfile& profile) const;

  int dim() const { return int(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  double bun_mean() const { return bun_mean_; }
  double phosphorus_mean() const { return phosphorus_mean_; }
  double uacr_mean() const { return uacr_mean_; }

 private:
  std::vector<std::string> names_;
  double bun_mean_ = 0, phosphorus_mean_ = 0, uacr_mean_ = 0;
};

// Fixed-length eGFR sequence for the 1D CNN, most recent value last,
// left-padded with the earliest observed value.
struct SequenceInput {
  std::vector<double> sequence;  // length L
  std::vector<double> statics;   // FeatureEncoder output
};

SequenceInput make_sequence_input(const PredictionWindow& window,
                                  const PatientProfile& profile,
                                  const FeatureEncoder& encoder, int seq_len);

}  // namespace egfr
