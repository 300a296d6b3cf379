#include "egfr/random_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace egfr {

using json = nlohmann::json;

double RfTree::predict(const std::vector<double>& x) const {
  int i = 0;
  while (nodes[i].feature >= 0)
    i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].value;
}

double RfModel::predict(const std::vector<double>& x) const {
  if (int(x.size()) != n_features)
    throw ShapeError("feature vector has " + std::to_string(x.size()) +
                     " dims, model expects " + std::to_string(n_features));
  double sum = 0;
  for (const auto& t : trees) sum += t.predict(x);
  return sum / double(trees.size());
}

namespace {

struct TreeBuilder {
  const std::vector<std::vector<double>>& X;
  const std::vector<double>& y;
  const RfParams& params;
  std::mt19937_64 rng;
  RfTree tree;

  int build(std::vector<int> idx, int depth) {
    double mean = 0;
    for (int i : idx) mean += y[i];
    mean /= double(idx.size());

    int node_id = int(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[node_id].value = mean;

    if (int(idx.size()) < 2 * params.min_leaf ||
        (params.max_depth >= 0 && depth >= params.max_depth))
      return node_id;

    const int d = int(X[0].size());
    int m = params.max_features > 0 ? std::min(params.max_features, d)
                                    : std::max(1, int(std::floor(std::sqrt(double(d)))));
    std::vector<int> features(d);
    std::iota(features.begin(), features.end(), 0);
    if (m < d) {
      // partial Fisher-Yates, then sort so the scan order is by feature index
      for (int i = 0; i < m; ++i) {
        int j = i + int(rng() % uint64_t(d - i));
        std::swap(features[i], features[j]);
      }
      features.resize(m);
      std::sort(features.begin(), features.end());
    }

    // best split: minimize total SSE of the two children
    int best_feature = -1;
    double best_threshold = 0, best_sse = std::numeric_limits<double>::infinity();
    std::vector<int> order(idx);
    for (int f : features) {
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (X[a][f] != X[b][f]) return X[a][f] < X[b][f];
        return a < b;
      });
      double sum_left = 0, sumsq_left = 0;
      double sum_all = 0, sumsq_all = 0;
      for (int i : order) {
        sum_all += y[i];
        sumsq_all += y[i] * y[i];
      }
      const int n = int(order.size());
      for (int k = 0; k < n - 1; ++k) {
        double yi = y[order[k]];
        sum_left += yi;
        sumsq_left += yi * yi;
        if (X[order[k]][f] == X[order[k + 1]][f]) continue;
        int nl = k + 1, nr = n - nl;
        if (nl < params.min_leaf || nr < params.min_leaf) continue;
        double sum_right = sum_all - sum_left;
        double sumsq_right = sumsq_all - sumsq_left;
        double sse = (sumsq_left - sum_left * sum_left / nl) +
                     (sumsq_right - sum_right * sum_right / nr);
        double threshold = (X[order[k]][f] + X[order[k + 1]][f]) / 2.0;
        if (sse + 1e-12 < best_sse) {
          best_sse = sse;
          best_feature = f;
          best_threshold = threshold;
        }
      }
    }
    if (best_feature < 0) return node_id;

    std::vector<int> left, right;
    for (int i : idx)
      (X[i][best_feature] <= best_threshold ? left : right).push_back(i);
    if (left.empty() || right.empty()) return node_id;

    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    int l = build(std::move(left), depth + 1);
    int r = build(std::move(right), depth + 1);
    tree.nodes[node_id].left = l;
    tree.nodes[node_id].right = r;
    return node_id;
  }
};

RfTree train_tree(const std::vector<std::vector<double>>& X,
                  const std::vector<double>& y, const RfParams& params,
                  uint64_t tree_seed) {
  std::mt19937_64 rng(tree_seed);
  const int n = int(X.size());
  std::vector<int> idx;
  if (params.bootstrap) {
    idx.reserve(n);
    for (int i = 0; i < n; ++i) idx.push_back(int(rng() % uint64_t(n)));
    std::sort(idx.begin(), idx.end());
  } else {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
  }
  TreeBuilder b{X, y, params, rng, {}};
  b.build(std::move(idx), 0);
  return std::move(b.tree);
}

}  // namespace

RfModel rf_train(const std::vector<std::vector<double>>& X,
                 const std::vector<double>& y, const RfParams& params) {
  if (X.size() != y.size() || X.size() < 2)
    throw TrainingError("random forest needs >= 2 training rows");
  if (params.n_trees < 1) throw ConfigError("n_trees must be >= 1");
  const size_t d = X[0].size();
  for (const auto& row : X)
    if (row.size() != d) throw ShapeError("ragged feature matrix");

  RfModel model;
  model.params = params;
  model.n_features = int(d);
  model.trees.resize(params.n_trees);

  // Each tree owns an rng derived from (seed, tree index), so the result is
  // independent of scheduling.
  auto tree_seed = [&](int t) {
    return params.seed ^ (uint64_t(t + 1) * 0x9e3779b97f4a7c15ULL);
  };

#ifdef _OPENMP
  if (params.threads != 1) {
    int nt = params.threads > 1 ? params.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (int t = 0; t < params.n_trees; ++t)
      model.trees[t] = train_tree(X, y, params, tree_seed(t));
    return model;
  }
#endif
  for (int t = 0; t < params.n_trees; ++t)
    model.trees[t] = train_tree(X, y, params, tree_seed(t));
  return model;
}

std::string RfModel::to_json() const {
  json jt = json::array();
  for (const auto& t : trees) {
    json jn = json::array();
    for (const auto& n : t.nodes)
      jn.push_back({{"f", n.feature}, {"t", n.threshold}, {"v", n.value},
                    {"l", n.left}, {"r", n.right}});
    jt.push_back(std::move(jn));
  }
  json j = {{"n_features", n_features},
            {"n_trees", params.n_trees},
            {"seed", params.seed},
            {"trees", std::move(jt)}};
  return j.dump(2);
}

RfModel RfModel::from_json(const std::string& text) {
  json j = json::parse(text);
  RfModel m;
  m.n_features = j.at("n_features");
  m.params.n_trees = j.at("n_trees");
  m.params.seed = j.at("seed");
  for (const auto& jt : j.at("trees")) {
    RfTree t;
    for (const auto& jn : jt)
      t.nodes.push_back({jn.at("f"), jn.at("t"), jn.at("v"), jn.at("l"), jn.at("r")});
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace egfr
