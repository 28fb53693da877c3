#ifndef PLRL_NN_OPTIMIZER_H_
#define PLRL_NN_OPTIMIZER_H_

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "plrl/nn/params.h"

namespace plrl::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global-norm clip; <= 0 disables
};

struct OptimizerState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Eigen::VectorXd> first_moment;
  std::vector<Eigen::VectorXd> second_moment;

  OptimizerState() = default;
  explicit OptimizerState(AdamConfig cfg) : config(cfg) {}
};

struct StepStats {
  double gradient_norm = 0.0;  // before clipping
  double applied_norm = 0.0;   // after clipping
};

double global_norm(const ParamGrads& grads);

// One Adam update with global-norm clipping. Moments are allocated on the
// first call. Throws kNumeric on non-finite gradients and
// kDimensionMismatch when shapes disagree with the parameters or moments.
StepStats optimizer_step(const ParamList& params, const ParamGrads& grads, OptimizerState& state);

}  // namespace plrl::nn

#endif  // PLRL_NN_OPTIMIZER_H_
