#ifndef PLRL_NN_RECURRENT_H_
#define PLRL_NN_RECURRENT_H_

#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "plrl/nn/dense.h"
#include "plrl/nn/params.h"
#include "plrl/rng.h"

namespace plrl::nn {

// Standard four-gate LSTM cell. Gate rows are stacked as
// [input, forget, candidate, output].
struct LstmCell {
  Eigen::MatrixXd input_weight;   // 4H x in
  Eigen::MatrixXd hidden_weight;  // 4H x H
  Eigen::VectorXd bias;           // 4H

  int hidden_size() const { return static_cast<int>(hidden_weight.cols()); }
  int input_size() const { return static_cast<int>(input_weight.cols()); }
};

// Hidden and cell state for every layer; columns are batch entries.
struct RecurrentState {
  std::vector<Eigen::MatrixXd> hidden;
  std::vector<Eigen::MatrixXd> cell;

  int batch() const { return hidden.empty() ? 0 : static_cast<int>(hidden.front().cols()); }
};

struct RecurrentCache {
  struct Layer {
    Eigen::MatrixXd input, hidden_prev, cell_prev;
    Eigen::MatrixXd input_gate, forget_gate, candidate, output_gate;
    Eigen::MatrixXd cell, cell_tanh, hidden;
  };
  std::vector<std::vector<Layer>> steps;  // [t][layer]
  std::vector<DenseCache> readout;        // [t]
};

struct RecurrentBackward {
  ParamGrads params;                   // per cell [Wx, Wh, b], then readout blocks
  std::vector<Eigen::MatrixXd> input;  // dL/dx_t
};

// Stacked LSTM with a dense readout applied to the top hidden state at
// every step.
class RecurrentNet {
 public:
  RecurrentNet() = default;
  RecurrentNet(std::vector<LstmCell> cells, DenseNet readout);

  // Forget-gate bias starts at 1, other weights uniform in +-1/sqrt(fan_in).
  static RecurrentNet random(int input_dim, std::span<const int> hidden_sizes,
                             std::span<const int> readout_widths,
                             std::span<const Activation> readout_activations, Rng& rng);

  int input_dim() const;
  int output_dim() const { return readout_.output_dim(); }
  std::vector<int> hidden_sizes() const;
  const std::vector<LstmCell>& cells() const { return cells_; }
  const DenseNet& readout() const { return readout_; }

  RecurrentState initial_state(int batch) const;
  // Advances `state` by one step; returns the readout for that step.
  Eigen::MatrixXd step(RecurrentState& state, const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  // Throws kInvalidArgument on an empty sequence.
  std::vector<Eigen::MatrixXd> forward(std::span<const Eigen::MatrixXd> sequence) const;
  std::vector<Eigen::MatrixXd> forward(std::span<const Eigen::MatrixXd> sequence,
                                       RecurrentCache& cache) const;
  // Backpropagation through time. `upstream[t]` is dL/d(output_t).
  RecurrentBackward backward(const RecurrentCache& cache,
                             std::span<const Eigen::MatrixXd> upstream) const;

  ParamList parameters();
  ConstParamList parameters() const;
  ParamGrads zero_grads() const;

  bool same_architecture(const RecurrentNet& other) const;
  nlohmann::json descriptor() const;
  static RecurrentNet from_descriptor(const nlohmann::json& descriptor);

 private:
  std::vector<LstmCell> cells_;
  DenseNet readout_;
};

}  // namespace plrl::nn

#endif  // PLRL_NN_RECURRENT_H_
