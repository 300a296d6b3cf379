#include "egfr/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace egfr {

using json = nlohmann::json;

namespace {

struct Layout {
  int C, K, S, L, L1, L2;
  int w1, b1, w2, b2, wd, bd, total;

  explicit Layout(const CnnConfig& cfg) {
    C = cfg.channels;
    K = cfg.kernel;
    S = cfg.static_dim;
    L = cfg.seq_len;
    L1 = L - K + 1;
    L2 = L1 - K + 1;
    w1 = 0;
    b1 = w1 + C * K;
    w2 = b1 + C;
    b2 = w2 + C * C * K;
    wd = b2 + C;
    bd = wd + (C + S);
    total = bd + 1;
  }
};

struct Activations {
  std::vector<double> a1;   // C x L1, post-ReLU
  std::vector<double> z1;   // pre-activation
  std::vector<double> a2;   // C x L2
  std::vector<double> z2;
  std::vector<double> pooled;  // C
  double output = 0;
};

void forward_pass(const CnnModel& m, const Layout& ly, const std::vector<double>& x,
                  const std::vector<double>& s, Activations& act) {
  const auto& p = m.params;
  act.z1.assign(size_t(ly.C) * ly.L1, 0);
  act.a1.assign(size_t(ly.C) * ly.L1, 0);
  for (int c = 0; c < ly.C; ++c)
    for (int t = 0; t < ly.L1; ++t) {
      double z = p[ly.b1 + c];
      for (int k = 0; k < ly.K; ++k) z += p[ly.w1 + c * ly.K + k] * x[t + k];
      act.z1[c * ly.L1 + t] = z;
      act.a1[c * ly.L1 + t] = z > 0 ? z : 0;
    }
  act.z2.assign(size_t(ly.C) * ly.L2, 0);
  act.a2.assign(size_t(ly.C) * ly.L2, 0);
  for (int c = 0; c < ly.C; ++c)
    for (int t = 0; t < ly.L2; ++t) {
      double z = p[ly.b2 + c];
      for (int c2 = 0; c2 < ly.C; ++c2)
        for (int k = 0; k < ly.K; ++k)
          z += p[ly.w2 + (c * ly.C + c2) * ly.K + k] * act.a1[c2 * ly.L1 + t + k];
      act.z2[c * ly.L2 + t] = z;
      act.a2[c * ly.L2 + t] = z > 0 ? z : 0;
    }
  act.pooled.assign(ly.C, 0);
  for (int c = 0; c < ly.C; ++c) {
    double sum = 0;
    for (int t = 0; t < ly.L2; ++t) sum += act.a2[c * ly.L2 + t];
    act.pooled[c] = sum / ly.L2;
  }
  double y = p[ly.bd];
  for (int c = 0; c < ly.C; ++c) y += p[ly.wd + c] * act.pooled[c];
  for (int i = 0; i < ly.S; ++i) y += p[ly.wd + ly.C + i] * s[i];
  act.output = y;
}

}  // namespace

CnnModel CnnModel::init(const CnnConfig& cfg) {
  if (cfg.kernel < 1 || cfg.channels < 1) throw ConfigError("invalid CNN architecture");
  if (cfg.seq_len < 2 * (cfg.kernel - 1) + 1)
    throw ConfigError("sequence length " + std::to_string(cfg.seq_len) +
                      " too short for two kernel-" + std::to_string(cfg.kernel) +
                      " convolutions");
  CnnModel m;
  m.cfg = cfg;
  Layout ly(cfg);
  m.params.assign(ly.total, 0.0);
  std::mt19937_64 rng(cfg.seed);
  auto he = [&](int fan_in, int begin, int count) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (int i = 0; i < count; ++i) m.params[begin + i] = dist(rng);
  };
  he(ly.K, ly.w1, ly.C * ly.K);
  he(ly.C * ly.K, ly.w2, ly.C * ly.C * ly.K);
  he(ly.C + ly.S, ly.wd, ly.C + ly.S);
  return m;
}

int CnnModel::param_count() const { return Layout(cfg).total; }

double CnnModel::forward(const std::vector<double>& seq,
                         const std::vector<double>& statics) const {
  Layout ly(cfg);
  if (int(seq.size()) != ly.L)
    throw ShapeError("sequence length " + std::to_string(seq.size()) +
                     ", model expects " + std::to_string(ly.L));
  if (int(statics.size()) != ly.S)
    throw ShapeError("static feature length " + std::to_string(statics.size()) +
                     ", model expects " + std::to_string(ly.S));
  Activations act;
  forward_pass(*this, ly, seq, statics, act);
  return act.output;
}

double cnn_loss_and_grad(const CnnModel& model,
                         const std::vector<std::vector<double>>& seqs,
                         const std::vector<std::vector<double>>& statics,
                         const std::vector<double>& targets,
                         std::vector<double>* grad_out) {
  if (seqs.empty() || seqs.size() != targets.size() || seqs.size() != statics.size())
    throw ShapeError("batch arrays must be non-empty and equal length");
  Layout ly(model.cfg);
  const auto& p = model.params;
  if (grad_out) grad_out->assign(p.size(), 0.0);

  double loss = 0;
  Activations act;
  const double n = double(seqs.size());
  for (size_t i = 0; i < seqs.size(); ++i) {
    forward_pass(model, ly, seqs[i], statics[i], act);
    double err = act.output - targets[i];
    loss += err * err / n;
    if (!grad_out) continue;
    auto& g = *grad_out;
    double dy = 2.0 * err / n;

    g[ly.bd] += dy;
    for (int c = 0; c < ly.C; ++c) g[ly.wd + c] += dy * act.pooled[c];
    for (int k = 0; k < ly.S; ++k) g[ly.wd + ly.C + k] += dy * statics[i][k];

    // back through pooling into conv2 outputs
    std::vector<double> d_a2(size_t(ly.C) * ly.L2, 0);
    for (int c = 0; c < ly.C; ++c) {
      double d_pool = dy * p[ly.wd + c] / ly.L2;
      for (int t = 0; t < ly.L2; ++t)
        d_a2[c * ly.L2 + t] = act.z2[c * ly.L2 + t] > 0 ? d_pool : 0.0;
    }
    std::vector<double> d_a1(size_t(ly.C) * ly.L1, 0);
    for (int c = 0; c < ly.C; ++c)
      for (int t = 0; t < ly.L2; ++t) {
        double d = d_a2[c * ly.L2 + t];
        if (d == 0) continue;
        g[ly.b2 + c] += d;
        for (int c2 = 0; c2 < ly.C; ++c2)
          for (int k = 0; k < ly.K; ++k) {
            g[ly.w2 + (c * ly.C + c2) * ly.K + k] += d * act.a1[c2 * ly.L1 + t + k];
            d_a1[c2 * ly.L1 + t + k] += d * p[ly.w2 + (c * ly.C + c2) * ly.K + k];
          }
      }
    for (int c = 0; c < ly.C; ++c)
      for (int t = 0; t < ly.L1; ++t) {
        double d = act.z1[c * ly.L1 + t] > 0 ? d_a1[c * ly.L1 + t] : 0.0;
        if (d == 0) continue;
        g[ly.b1 + c] += d;
        for (int k = 0; k < ly.K; ++k) g[ly.w1 + c * ly.K + k] += d * seqs[i][t + k];
      }
  }
  return loss;
}

TrainCurve cnn_train(CnnModel& model, const std::vector<std::vector<double>>& seqs,
                     const std::vector<std::vector<double>>& statics,
                     const std::vector<double>& targets, const OptimizerConfig& opt) {
  if (seqs.empty()) throw TrainingError("CNN needs at least 1 training window");
  if (opt.batch_size < 1 || opt.epochs < 1 || opt.learning_rate <= 0)
    throw ConfigError("invalid optimizer config");

  std::mt19937_64 rng(model.cfg.seed ^ 0x5bd1e995);
  std::vector<int> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);

  TrainCurve curve;
  std::vector<double> grad;
  std::vector<std::vector<double>> bs, bst;
  std::vector<double> bt;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += opt.batch_size) {
      size_t end = std::min(order.size(), start + opt.batch_size);
      bs.clear(); bst.clear(); bt.clear();
      for (size_t i = start; i < end; ++i) {
        bs.push_back(seqs[order[i]]);
        bst.push_back(statics[order[i]]);
        bt.push_back(targets[order[i]]);
      }
      double loss = cnn_loss_and_grad(model, bs, bst, bt, &grad);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                            " (learning rate too high or unscaled inputs?)");
      for (size_t j = 0; j < grad.size(); ++j)
        model.params[j] -= opt.learning_rate * grad[j];
    }
    double full = cnn_loss_and_grad(model, seqs, statics, targets, nullptr);
    if (!std::isfinite(full))
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
    curve.epoch_loss.push_back(full);
  }
  return curve;
}

std::string CnnModel::to_json() const {
  json j = {{"seq_len", cfg.seq_len},   {"channels", cfg.channels},
            {"kernel", cfg.kernel},     {"static_dim", cfg.static_dim},
            {"seed", cfg.seed},         {"params", params}};
  return j.dump(2);
}

CnnModel CnnModel::from_json(const std::string& text) {
  json j = json::parse(text);
  CnnModel m;
  m.cfg.seq_len = j.at("seq_len");
  m.cfg.channels = j.at("channels");
  m.cfg.kernel = j.at("kernel");
  m.cfg.static_dim = j.at("static_dim");
  m.cfg.seed = j.at("seed");
  m.params = j.at("params").get<std::vector<double>>();
  return m;
}

}  // namespace egfr
