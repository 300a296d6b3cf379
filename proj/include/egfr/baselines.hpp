#pragma once

#include <map>
#include <string>
#include <vector>

#include "egfr/cnn.hpp"
#include "egfr/features.hpp"
#include "egfr/random_forest.hpp"

namespace egfr {

using ProfileMap = std::map<std::string, PatientProfile>;

// Window-level baseline regressors. Both see only tabular data derived from
// the observed visits, never chart pixels, the target, or later visits.

class RfRegressor {
 public:
  static RfRegressor train(const std::vector<PredictionWindow>& train_windows,
                           const ProfileMap& profiles, RfParams params);

  double predict(const PredictionWindow& window, const PatientProfile& profile) const;

  const RfModel& model() const { return model_; }
  const FeatureEncoder& encoder() const { return encoder_; }

  std::string to_json() const;

 private:
  FeatureEncoder encoder_;
  RfModel model_;
};

struct CnnTrainSettings {
  int channels = 8;
  int kernel = 3;
  int max_seq_len = 12;
  OptimizerConfig optimizer{0.01, 300, 16};
  uint64_t seed = 0;
};

class CnnRegressor {
 public:
  // Standardizes sequences, statics and targets with training-split
  // statistics before fitting.
  static CnnRegressor train(const std::vector<PredictionWindow>& train_windows,
                            const ProfileMap& profiles, const CnnTrainSettings& settings);

  double predict(const PredictionWindow& window, const PatientProfile& profile) const;

  const CnnModel& model() const { return model_; }
  const TrainCurve& curve() const { return curve_; }
  int seq_len() const { return seq_len_; }

  std::string to_json() const;

 private:
  FeatureEncoder encoder_;
  CnnModel model_;
  TrainCurve curve_;
  int seq_len_ = 12;
  double seq_mean_ = 0, seq_std_ = 1;
  std::vector<double> static_mean_, static_std_;
  double target_mean_ = 0, target_std_ = 1;

  std::pair<std::vector<double>, std::vector<double>> encode_normalized(
      const PredictionWindow& window, const PatientProfile& profile) const;
};

}  // namespace egfr
