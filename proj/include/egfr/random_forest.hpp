#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egfr/errors.hpp"

namespace egfr {

struct RfParams {
  int n_trees = 200;
  int max_depth = -1;      // -1: unlimited
  int min_leaf = 2;        // minimum samples per leaf
  bool bootstrap = true;
  int max_features = -1;   // features tried per split; -1: floor(sqrt(d))
  uint64_t seed = 0;
  int threads = 1;         // >1 trains trees with OpenMP; results are identical
};

struct RfNode {
  int feature = -1;        // -1: leaf
  double threshold = 0;
  double value = 0;        // leaf mean
  int left = -1, right = -1;
};

struct RfTree {
  std::vector<RfNode> nodes;
  double predict(const std::vector<double>& x) const;
};

struct RfModel {
  RfParams params;
  int n_features = 0;
  std::vector<RfTree> trees;

  double predict(const std::vector<double>& x) const;  // mean of per-tree leaves

  std::string to_json() const;
  static RfModel from_json(const std::string& text);
};

// Bootstrap-aggregated regression trees with variance-reduction splits.
// Candidate thresholds are midpoints between consecutive distinct values.
RfModel rf_train(const std::vector<std::vector<double>>& X,
                 const std::vector<double>& y, const RfParams& params);

}  // namespace egfr
