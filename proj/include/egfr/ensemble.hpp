#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egfr/extract.hpp"

namespace egfr {

enum class EnsembleScope { repeat_average, prompt_ensemble, model_ensemble };

std::string ensemble_scope_name(EnsembleScope s);

struct EnsembleMember {
  std::string backend_id;
  int template_id = 0;
  int attempt_index = 0;  // 0 when the member is itself an aggregate
};

struct EnsembleResult {
  std::string window_id;
  EnsembleScope scope = EnsembleScope::repeat_average;
  std::vector<EnsembleMember> members;
  double value = 0;
  int member_count = 0;
};

// Mean over attempts of one (window, template, backend) cell. Failed
// predictions are never members; an all-failed cell yields nullopt.
std::optional<EnsembleResult> average_repeats(const std::vector<Prediction>& cell);

// Mean over the available template cells of one (window, backend).
std::optional<EnsembleResult> prompt_ensemble(
    const std::string& window_id, const std::string& backend_id,
    const std::vector<EnsembleResult>& per_template);

// Weighted mean over the available backend cells of one (window, template).
// Weights default to uniform; missing weights count as 1.
std::optional<EnsembleResult> model_ensemble(
    const std::string& window_id, int template_id,
    const std::vector<EnsembleResult>& per_backend,
    const std::map<std::string, double>& weights = {});

}  // namespace egfr
