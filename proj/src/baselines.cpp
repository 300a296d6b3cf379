#include "egfr/baselines.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace egfr {

using json = nlohmann::json;

namespace {

const PatientProfile& profile_for(const ProfileMap& profiles, const std::string& pid) {
  auto it = profiles.find(pid);
  if (it == profiles.end())
    throw ValidationError("no profile for patient '" + pid + "'");
  return it->second;
}

}  // namespace

RfRegressor RfRegressor::train(const std::vector<PredictionWindow>& train_windows,
                               const ProfileMap& profiles, RfParams params) {
  if (train_windows.size() < 2)
    throw TrainingError("random forest baseline needs >= 2 training windows");
  RfRegressor r;
  r.encoder_ = FeatureEncoder::fit(train_windows);
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  X.reserve(train_windows.size());
  for (const auto& w : train_windows) {
    X.push_back(r.encoder_.encode(w, profile_for(profiles, w.patient_id)));
    y.push_back(w.target.egfr);
  }
  r.model_ = rf_train(X, y, params);
  return r;
}

double RfRegressor::predict(const PredictionWindow& window,
                            const PatientProfile& profile) const {
  return model_.predict(encoder_.encode(window, profile));
}

std::string RfRegressor::to_json() const { return model_.to_json(); }

CnnRegressor CnnRegressor::train(const std::vector<PredictionWindow>& train_windows,
                                 const ProfileMap& profiles,
                                 const CnnTrainSettings& settings) {
  if (train_windows.empty())
    throw TrainingError("CNN baseline needs >= 1 training window");

  CnnRegressor r;
  r.encoder_ = FeatureEncoder::fit(train_windows);

  size_t longest = 0;
  for (const auto& w : train_windows) longest = std::max(longest, w.observed.size());
  int min_len = 2 * (settings.kernel - 1) + 1;
  r.seq_len_ = std::clamp(int(longest), min_len, settings.max_seq_len);

  std::vector<std::vector<double>> seqs, statics;
  std::vector<double> targets;
  for (const auto& w : train_windows) {
    auto s = make_sequence_input(w, profile_for(profiles, w.patient_id), r.encoder_,
                                 r.seq_len_);
    seqs.push_back(std::move(s.sequence));
    statics.push_back(std::move(s.statics));
    targets.push_back(w.target.egfr);
  }

  auto mean_std = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= double(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    s = std::sqrt(s / double(v.size()));
    return std::pair<double, double>(m, s > 1e-12 ? s : 1.0);
  };

  std::vector<double> all_seq;
  for (const auto& s : seqs) all_seq.insert(all_seq.end(), s.begin(), s.end());
  std::tie(r.seq_mean_, r.seq_std_) = mean_std(all_seq);

  size_t sd = statics[0].size();
  r.static_mean_.assign(sd, 0);
  r.static_std_.assign(sd, 1);
  for (size_t j = 0; j < sd; ++j) {
    std::vector<double> col;
    col.reserve(statics.size());
    for (const auto& s : statics) col.push_back(s[j]);
    std::tie(r.static_mean_[j], r.static_std_[j]) = mean_std(col);
  }
  std::tie(r.target_mean_, r.target_std_) = mean_std(targets);

  for (auto& s : seqs)
    for (double& x : s) x = (x - r.seq_mean_) / r.seq_std_;
  for (auto& s : statics)
    for (size_t j = 0; j < sd; ++j) s[j] = (s[j] - r.static_mean_[j]) / r.static_std_[j];
  std::vector<double> norm_targets(targets);
  for (double& t : norm_targets) t = (t - r.target_mean_) / r.target_std_;

  CnnConfig cfg;
  cfg.seq_len = r.seq_len_;
  cfg.channels = settings.channels;
  cfg.kernel = settings.kernel;
  cfg.static_dim = int(sd);
  cfg.seed = settings.seed;
  r.model_ = CnnModel::init(cfg);
  r.curve_ = cnn_train(r.model_, seqs, statics, norm_targets, settings.optimizer);
  return r;
}

std::pair<std::vector<double>, std::vector<double>> CnnRegressor::encode_normalized(
    const PredictionWindow& window, const PatientProfile& profile) const {
  auto s = make_sequence_input(window, profile, encoder_, seq_len_);
  for (double& x : s.sequence) x = (x - seq_mean_) / seq_std_;
  for (size_t j = 0; j < s.statics.size(); ++j)
    s.statics[j] = (s.statics[j] - static_mean_[j]) / static_std_[j];
  return {std::move(s.sequence), std::move(s.statics)};
}

double CnnRegressor::predict(const PredictionWindow& window,
                             const PatientProfile& profile) const {
  auto [seq, statics] = encode_normalized(window, profile);
  return model_.forward(seq, statics) * target_std_ + target_mean_;
}

std::string CnnRegressor::to_json() const {
  json j = json::parse(model_.to_json());
  j["seq_mean"] = seq_mean_;
  j["seq_std"] = seq_std_;
  j["static_mean"] = static_mean_;
  j["static_std"] = static_std_;
  j["target_mean"] = target_mean_;
  j["target_std"] = target_std_;
  return j.dump(2);
}

}  // namespace egfr
