#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egfr/errors.hpp"

namespace egfr {

// Two valid-padded 1-D convolutions (kernel 3, ReLU), global average pooling,
// static features concatenated after pooling, one dense layer to a scalar.
struct CnnConfig {
  int seq_len = 12;
  int channels = 8;
  int kernel = 3;
  int static_dim = 0;
  uint64_t seed = 0;
};

struct CnnModel {
  CnnConfig cfg;
  // flat layout: w1[C*K], b1[C], w2[C*C*K], b2[C], wd[C+S], bd
  std::vector<double> params;

  static CnnModel init(const CnnConfig& cfg);  // seeded He-style init
  int param_count() const;

  double forward(const std::vector<double>& seq,
                 const std::vector<double>& statics) const;

  std::string to_json() const;
  static CnnModel from_json(const std::string& text);
};

// Mean squared error over the batch plus its gradient w.r.t. the flat
// parameter vector.
double cnn_loss_and_grad(const CnnModel& model,
                         const std::vector<std::vector<double>>& seqs,
                         const std::vector<std::vector<double>>& statics,
                         const std::vector<double>& targets,
                         std::vector<double>* grad_out);

struct OptimizerConfig {
  double learning_rate = 0.01;
  int epochs = 200;
  int batch_size = 16;
};

struct TrainCurve {
  std::vector<double> epoch_loss;
};

// Seeded mini-batch gradient descent; throws TrainingError on non-finite loss.
TrainCurve cnn_train(CnnModel& model, const std::vector<std::vector<double>>& seqs,
                     const std::vector<std::vector<double>>& statics,
                     const std::vector<double>& targets, const OptimizerConfig& opt);

}  // namespace egfr
