#pragma once

#include <map>
#include <string>
#include <vector>

#include "egfr/errors.hpp"

namespace egfr {

double mae(const std::vector<double>& actuals, const std::vector<double>& predictions);

// 100 * mean(|a - p| / a); actuals must exceed the 1e-9 guard.
double mape(const std::vector<double>& actuals, const std::vector<double>& predictions);

struct SignificanceResult {
  std::string system_a, system_b;
  std::string split;
  std::string test_name = "wilcoxon-signed-rank";
  double statistic = 0;   // min(W+, W-)
  double p_value = 1;
  int n_pairs = 0;        // pairs before zero-difference removal
  bool no_difference = false;
};

// Two-sided Wilcoxon signed-rank on paired per-window errors. Keys must
// match exactly and number at least 6. Exact distribution for n <= 25 after
// zero removal, normal approximation above.
SignificanceResult paired_test(const std::map<std::string, double>& errors_a,
                               const std::map<std::string, double>& errors_b);

}  // namespace egfr
