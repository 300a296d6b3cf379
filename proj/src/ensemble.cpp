#include "egfr/ensemble.hpp"

namespace egfr {

std::string ensemble_scope_name(EnsembleScope s) {
  switch (s) {
    case EnsembleScope::repeat_average: return "repeat-average";
    case EnsembleScope::prompt_ensemble: return "prompt-ensemble";
    case EnsembleScope::model_ensemble: return "model-ensemble";
  }
  return "?";
}

std::optional<EnsembleResult> average_repeats(const std::vector<Prediction>& cell) {
  EnsembleResult r;
  r.scope = EnsembleScope::repeat_average;
  double sum = 0;
  for (const auto& p : cell) {
    if (p.method == ExtractMethod::failed) continue;
    if (r.members.empty()) {
      r.window_id = p.window_id;
    } else if (r.window_id != p.window_id) {
      throw ValidationError("repeat-average cell mixes windows");
    }
    r.members.push_back({p.backend_id, p.template_id, p.attempt_index});
    sum += p.value;
  }
  if (r.members.empty()) return std::nullopt;
  r.member_count = int(r.members.size());
  r.value = sum / r.member_count;
  return r;
}

std::optional<EnsembleResult> prompt_ensemble(
    const std::string& window_id, const std::string& backend_id,
    const std::vector<EnsembleResult>& per_template) {
  EnsembleResult r;
  r.window_id = window_id;
  r.scope = EnsembleScope::prompt_ensemble;
  double sum = 0;
  for (const auto& cell : per_template) {
    if (cell.members.empty()) continue;
    r.members.push_back({backend_id, cell.members.front().template_id, 0});
    sum += cell.value;
  }
  if (r.members.empty()) return std::nullopt;
  r.member_count = int(r.members.size());
  r.value = sum / r.member_count;
  return r;
}

std::optional<EnsembleResult> model_ensemble(
    const std::string& window_id, int template_id,
    const std::vector<EnsembleResult>& per_backend,
    const std::map<std::string, double>& weights) {
  EnsembleResult r;
  r.window_id = window_id;
  r.scope = EnsembleScope::model_ensemble;
  double sum = 0, wsum = 0;
  for (const auto& cell : per_backend) {
    if (cell.members.empty()) continue;
    const std::string& backend = cell.members.front().backend_id;
    auto it = weights.find(backend);
    double w = it != weights.end() ? it->second : 1.0;
    if (w < 0) throw ConfigError("ensemble weight for '" + backend + "' must be >= 0");
    r.members.push_back({backend, template_id, 0});
    sum += w * cell.value;
    wsum += w;
  }
  if (r.members.empty() || wsum == 0) return std::nullopt;
  r.member_count = int(r.members.size());
  r.value = sum / wsum;
  return r;
}

}  // namespace egfr
