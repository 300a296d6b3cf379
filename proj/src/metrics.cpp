#include "egfr/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace egfr {

namespace {
constexpr double kMapeGuard = 1e-9;

void check_lengths(const std::vector<double>& a, const std::vector<double>& p) {
  if (a.empty()) throw MetricError("metric over empty vectors");
  if (a.size() != p.size())
    throw MetricError("length mismatch: " + std::to_string(a.size()) + " vs " +
                      std::to_string(p.size()));
}
}  // namespace

double mae(const std::vector<double>& actuals, const std::vector<double>& predictions) {
  check_lengths(actuals, predictions);
  double sum = 0;
  for (size_t i = 0; i < actuals.size(); ++i)
    sum += std::abs(actuals[i] - predictions[i]);
  return sum / double(actuals.size());
}

double mape(const std::vector<double>& actuals, const std::vector<double>& predictions) {
  check_lengths(actuals, predictions);
  double sum = 0;
  for (size_t i = 0; i < actuals.size(); ++i) {
    if (actuals[i] < kMapeGuard)
      throw MetricError("MAPE undefined: actual value below guard at index " +
                        std::to_string(i));
    sum += std::abs(actuals[i] - predictions[i]) / actuals[i];
  }
  return 100.0 * sum / double(actuals.size());
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// P(W+ <= w) under the exact null: each subset of ranks equally likely.
// Works on doubled ranks so midpoint ranks from ties stay integral.
double exact_cdf(const std::vector<int>& doubled_ranks, double w_plus) {
  int total = 0;
  for (int r : doubled_ranks) total += r;
  std::vector<double> count(total + 1, 0.0);
  count[0] = 1.0;
  for (int r : doubled_ranks)
    for (int s = total; s >= r; --s) count[s] += count[s - r];
  double combos = std::ldexp(1.0, int(doubled_ranks.size()));
  int limit = int(std::floor(2.0 * w_plus + 1e-9));
  double acc = 0;
  for (int s = 0; s <= std::min(limit, total); ++s) acc += count[s];
  return acc / combos;
}

}  // namespace

SignificanceResult paired_test(const std::map<std::string, double>& errors_a,
                               const std::map<std::string, double>& errors_b) {
  if (errors_a.size() != errors_b.size())
    throw MetricError("paired test: window sets differ in size");
  for (const auto& [k, v] : errors_a)
    if (!errors_b.count(k))
      throw MetricError("paired test: window '" + k + "' missing from second system");
  if (errors_a.size() < 6)
    throw MetricError("paired test needs at least 6 paired windows, got " +
                      std::to_string(errors_a.size()));

  SignificanceResult res;
  res.n_pairs = int(errors_a.size());

  std::vector<double> diffs;
  for (const auto& [k, va] : errors_a) {
    double d = va - errors_b.at(k);
    if (d != 0) diffs.push_back(d);
  }
  if (diffs.empty()) {
    res.no_difference = true;
    res.statistic = 0;
    res.p_value = 1.0;
    return res;
  }

  const int n = int(diffs.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return std::abs(diffs[x]) < std::abs(diffs[y]);
  });
  std::vector<double> rank(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n &&
           std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]]))
      ++j;
    double avg = (i + j) / 2.0 + 1.0;  // average rank, 1-based
    for (int k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double w_plus = 0, w_minus = 0;
  for (int k = 0; k < n; ++k)
    (diffs[k] > 0 ? w_plus : w_minus) += rank[k];
  res.statistic = std::min(w_plus, w_minus);

  if (n <= 25) {
    std::vector<int> doubled(n);
    for (int k = 0; k < n; ++k) doubled[k] = int(std::llround(2 * rank[k]));
    double p = 2.0 * exact_cdf(doubled, res.statistic);
    res.p_value = std::min(1.0, p);
  } else {
    double mean = n * (n + 1) / 4.0;
    double var = n * (n + 1) * (2.0 * n + 1) / 24.0;
    // tie correction
    std::vector<double> sorted_abs(n);
    for (int k = 0; k < n; ++k) sorted_abs[k] = std::abs(diffs[k]);
    std::sort(sorted_abs.begin(), sorted_abs.end());
    int k = 0;
    while (k < n) {
      int j = k;
      while (j + 1 < n && sorted_abs[j + 1] == sorted_abs[k]) ++j;
      double t = j - k + 1;
      var -= t * (t * t - 1) / 48.0;
      k = j + 1;
    }
    double z = (res.statistic - mean + 0.5) / std::sqrt(var);
    res.p_value = std::min(1.0, 2.0 * normal_cdf(z));
  }
  return res;
}

}  // namespace egfr
