#include "plrl/nn/optimizer.h"

#include <cmath>
#include <string>

#include "plrl/error.h"

namespace plrl::nn {

double global_norm(const ParamGrads& grads) {
  double sum = 0.0;
  for (const auto& g : grads) sum += g.squaredNorm();
  return std::sqrt(sum);
}

StepStats optimizer_step(const ParamList& params, const ParamGrads& grads, OptimizerState& state) {
  require(params.size() == grads.size(), ErrorCode::kDimensionMismatch,
          "optimizer_step: " + std::to_string(params.size()) + " parameter blocks but " +
              std::to_string(grads.size()) + " gradient blocks");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(static_cast<std::size_t>(grads[i].size()) == params[i].size(),
            ErrorCode::kDimensionMismatch,
            "optimizer_step: gradient block " + std::to_string(i) + " has the wrong size");
    require(grads[i].allFinite(), ErrorCode::kNumeric,
            "optimizer_step: non-finite gradient in block " + std::to_string(i));
  }
  if (state.first_moment.empty()) {
    for (const auto& block : params) {
      state.first_moment.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(block.size())));
      state.second_moment.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(block.size())));
    }
  }
  require(state.first_moment.size() == params.size(), ErrorCode::kDimensionMismatch,
          "optimizer_step: optimizer state belongs to a different parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(static_cast<std::size_t>(state.first_moment[i].size()) == params[i].size(),
            ErrorCode::kDimensionMismatch, "optimizer_step: moment shape mismatch");
  }

  const AdamConfig& cfg = state.config;
  StepStats stats;
  stats.gradient_norm = global_norm(grads);
  double scale = 1.0;
  if (cfg.clip_norm > 0.0 && stats.gradient_norm > cfg.clip_norm) {
    scale = cfg.clip_norm / stats.gradient_norm;
  }
  stats.applied_norm = stats.gradient_norm * scale;

  ++state.step;
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> w(params[i].data(), static_cast<Eigen::Index>(params[i].size()));
    Eigen::Map<const Eigen::VectorXd> g(grads[i].data(), grads[i].size());
    Eigen::VectorXd& m = state.first_moment[i];
    Eigen::VectorXd& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * scale * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * (scale * g).cwiseAbs2();
    w.array() -= cfg.learning_rate * (m.array() / correction1) /
                 ((v.array() / correction2).sqrt() + cfg.epsilon);
  }
  return stats;
}

}  // namespace plrl::nn
