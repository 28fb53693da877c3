#include "plrl/nn/recurrent.h"

#include <cmath>
#include <string>

#include "plrl/error.h"

namespace plrl::nn {
namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

void fill_uniform(Eigen::MatrixXd& m, double limit, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-limit, limit);
  }
}

}  // namespace

RecurrentNet::RecurrentNet(std::vector<LstmCell> cells, DenseNet readout)
    : cells_(std::move(cells)), readout_(std::move(readout)) {
  require(!cells_.empty(), ErrorCode::kInvalidArgument, "RecurrentNet needs at least one cell");
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const LstmCell& cell = cells_[i];
    const Eigen::Index h = cell.hidden_weight.cols();
    require(cell.hidden_weight.rows() == 4 * h && cell.input_weight.rows() == 4 * h &&
                cell.bias.size() == 4 * h,
            ErrorCode::kDimensionMismatch, "LSTM cell gate shapes are inconsistent");
    if (i > 0) {
      require(cell.input_weight.cols() == cells_[i - 1].hidden_weight.cols(),
              ErrorCode::kDimensionMismatch, "LSTM cells do not chain");
    }
  }
  require(readout_.input_dim() == cells_.back().hidden_size(), ErrorCode::kDimensionMismatch,
          "readout input does not match the top hidden size");
}

RecurrentNet RecurrentNet::random(int input_dim, std::span<const int> hidden_sizes,
                                  std::span<const int> readout_widths,
                                  std::span<const Activation> readout_activations, Rng& rng) {
  require(!hidden_sizes.empty(), ErrorCode::kInvalidArgument, "at least one hidden size required");
  std::vector<LstmCell> cells;
  int fan_in = input_dim;
  for (int h : hidden_sizes) {
    require(h > 0 && fan_in > 0, ErrorCode::kInvalidArgument, "LSTM sizes must be positive");
    LstmCell cell;
    cell.input_weight.resize(4 * h, fan_in);
    cell.hidden_weight.resize(4 * h, h);
    fill_uniform(cell.input_weight, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    fill_uniform(cell.hidden_weight, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    cell.bias = Eigen::VectorXd::Zero(4 * h);
    cell.bias.segment(h, h).setOnes();
    cells.push_back(std::move(cell));
    fan_in = h;
  }
  DenseNet readout = DenseNet::random(fan_in, readout_widths, readout_activations, rng);
  return RecurrentNet(std::move(cells), std::move(readout));
}

int RecurrentNet::input_dim() const {
  return cells_.empty() ? 0 : cells_.front().input_size();
}

std::vector<int> RecurrentNet::hidden_sizes() const {
  std::vector<int> sizes;
  for (const LstmCell& cell : cells_) sizes.push_back(cell.hidden_size());
  return sizes;
}

RecurrentState RecurrentNet::initial_state(int batch) const {
  RecurrentState state;
  for (const LstmCell& cell : cells_) {
    state.hidden.push_back(Eigen::MatrixXd::Zero(cell.hidden_size(), batch));
    state.cell.push_back(Eigen::MatrixXd::Zero(cell.hidden_size(), batch));
  }
  return state;
}

Eigen::MatrixXd RecurrentNet::step(RecurrentState& state,
                                   const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  require(x.rows() == input_dim(), ErrorCode::kDimensionMismatch,
          "RecurrentNet::step: input dimension mismatch");
  require(state.hidden.size() == cells_.size() && state.cell.size() == cells_.size(),
          ErrorCode::kDimensionMismatch, "RecurrentNet::step: state has wrong layer count");
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    const int h = cells_[l].hidden_size();
    require(state.hidden[l].rows() == h && state.cell[l].rows() == h &&
                state.hidden[l].cols() == x.cols() && state.cell[l].cols() == x.cols(),
            ErrorCode::kDimensionMismatch, "RecurrentNet::step: state does not match this network");
  }
  Eigen::MatrixXd input = x;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    const LstmCell& cell = cells_[l];
    const int h = cell.hidden_size();
    Eigen::MatrixXd gates = cell.input_weight * input + cell.hidden_weight * state.hidden[l];
    gates.colwise() += cell.bias;
    const Eigen::MatrixXd i = sigmoid(gates.topRows(h));
    const Eigen::MatrixXd f = sigmoid(gates.middleRows(h, h));
    const Eigen::MatrixXd g = gates.middleRows(2 * h, h).array().tanh().matrix();
    const Eigen::MatrixXd o = sigmoid(gates.bottomRows(h));
    state.cell[l] = f.cwiseProduct(state.cell[l]) + i.cwiseProduct(g);
    state.hidden[l] = o.cwiseProduct(state.cell[l].array().tanh().matrix());
    input = state.hidden[l];
  }
  return readout_.forward(input);
}

std::vector<Eigen::MatrixXd> RecurrentNet::forward(std::span<const Eigen::MatrixXd> sequence) const {
  require(!sequence.empty(), ErrorCode::kInvalidArgument, "RecurrentNet::forward: empty sequence");
  RecurrentState state = initial_state(static_cast<int>(sequence.front().cols()));
  std::vector<Eigen::MatrixXd> outputs;
  outputs.reserve(sequence.size());
  for (const Eigen::MatrixXd& x : sequence) outputs.push_back(step(state, x));
  return outputs;
}

std::vector<Eigen::MatrixXd> RecurrentNet::forward(std::span<const Eigen::MatrixXd> sequence,
                                                   RecurrentCache& cache) const {
  require(!sequence.empty(), ErrorCode::kInvalidArgument, "RecurrentNet::forward: empty sequence");
  const int batch = static_cast<int>(sequence.front().cols());
  RecurrentState state = initial_state(batch);
  cache.steps.assign(sequence.size(), {});
  cache.readout.assign(sequence.size(), {});
  std::vector<Eigen::MatrixXd> outputs;
  outputs.reserve(sequence.size());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    require(sequence[t].rows() == input_dim() && sequence[t].cols() == batch,
            ErrorCode::kDimensionMismatch, "RecurrentNet::forward: non-uniform input shape");
    Eigen::MatrixXd input = sequence[t];
    cache.steps[t].resize(cells_.size());
    for (std::size_t l = 0; l < cells_.size(); ++l) {
      const LstmCell& cell = cells_[l];
      const int h = cell.hidden_size();
      RecurrentCache::Layer& c = cache.steps[t][l];
      c.input = input;
      c.hidden_prev = state.hidden[l];
      c.cell_prev = state.cell[l];
      Eigen::MatrixXd gates = cell.input_weight * input + cell.hidden_weight * state.hidden[l];
      gates.colwise() += cell.bias;
      c.input_gate = sigmoid(gates.topRows(h));
      c.forget_gate = sigmoid(gates.middleRows(h, h));
      c.candidate = gates.middleRows(2 * h, h).array().tanh().matrix();
      c.output_gate = sigmoid(gates.bottomRows(h));
      c.cell = c.forget_gate.cwiseProduct(c.cell_prev) + c.input_gate.cwiseProduct(c.candidate);
      c.cell_tanh = c.cell.array().tanh().matrix();
      c.hidden = c.output_gate.cwiseProduct(c.cell_tanh);
      state.hidden[l] = c.hidden;
      state.cell[l] = c.cell;
      input = c.hidden;
    }
    outputs.push_back(readout_.forward(input, cache.readout[t]));
  }
  return outputs;
}

RecurrentBackward RecurrentNet::backward(const RecurrentCache& cache,
                                         std::span<const Eigen::MatrixXd> upstream) const {
  const std::size_t steps = cache.steps.size();
  require(upstream.size() == steps && steps > 0, ErrorCode::kDimensionMismatch,
          "RecurrentNet::backward: upstream length does not match the cached sequence");
  const std::size_t layers = cells_.size();
  const Eigen::Index batch = cache.steps.front().front().input.cols();

  RecurrentBackward result;
  result.params = zero_grads();
  result.input.resize(steps);
  const std::size_t readout_offset = 3 * layers;

  std::vector<Eigen::MatrixXd> dh_next(layers), dc_next(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    dh_next[l] = Eigen::MatrixXd::Zero(cells_[l].hidden_size(), batch);
    dc_next[l] = Eigen::MatrixXd::Zero(cells_[l].hidden_size(), batch);
  }

  for (std::size_t t = steps; t-- > 0;) {
    DenseBackward head = readout_.backward(cache.readout[t], upstream[t]);
    for (std::size_t k = 0; k < head.params.size(); ++k) {
      result.params[readout_offset + k] += head.params[k];
    }
    Eigen::MatrixXd from_above = std::move(head.input);
    for (std::size_t l = layers; l-- > 0;) {
      const LstmCell& cell = cells_[l];
      const RecurrentCache::Layer& c = cache.steps[t][l];
      const int h = cell.hidden_size();
      const Eigen::MatrixXd dh = from_above + dh_next[l];
      const Eigen::ArrayXXd tanh_c = c.cell_tanh.array();
      const Eigen::ArrayXXd d_out = dh.array() * tanh_c;
      const Eigen::ArrayXXd dc =
          dh.array() * c.output_gate.array() * (1.0 - tanh_c.square()) + dc_next[l].array();
      const Eigen::ArrayXXd d_in = dc * c.candidate.array();
      const Eigen::ArrayXXd d_cand = dc * c.input_gate.array();
      const Eigen::ArrayXXd d_forget = dc * c.cell_prev.array();
      dc_next[l] = (dc * c.forget_gate.array()).matrix();

      Eigen::MatrixXd d_gates(4 * h, batch);
      d_gates.topRows(h) = (d_in * c.input_gate.array() * (1.0 - c.input_gate.array())).matrix();
      d_gates.middleRows(h, h) =
          (d_forget * c.forget_gate.array() * (1.0 - c.forget_gate.array())).matrix();
      d_gates.middleRows(2 * h, h) = (d_cand * (1.0 - c.candidate.array().square())).matrix();
      d_gates.bottomRows(h) =
          (d_out * c.output_gate.array() * (1.0 - c.output_gate.array())).matrix();

      result.params[3 * l] += d_gates * c.input.transpose();
      result.params[3 * l + 1] += d_gates * c.hidden_prev.transpose();
      result.params[3 * l + 2] += d_gates.rowwise().sum();
      dh_next[l] = cell.hidden_weight.transpose() * d_gates;
      from_above = cell.input_weight.transpose() * d_gates;
    }
    result.input[t] = std::move(from_above);
  }
  return result;
}

ParamList RecurrentNet::parameters() {
  ParamList params;
  for (LstmCell& cell : cells_) {
    params.push_back(as_span(cell.input_weight));
    params.push_back(as_span(cell.hidden_weight));
    params.push_back(as_span(cell.bias));
  }
  for (auto block : readout_.parameters()) params.push_back(block);
  return params;
}

ConstParamList RecurrentNet::parameters() const {
  ConstParamList params;
  for (const LstmCell& cell : cells_) {
    params.push_back(as_span(cell.input_weight));
    params.push_back(as_span(cell.hidden_weight));
    params.push_back(as_span(cell.bias));
  }
  for (auto block : readout_.parameters()) params.push_back(block);
  return params;
}

ParamGrads RecurrentNet::zero_grads() const {
  ParamGrads grads;
  for (const LstmCell& cell : cells_) {
    grads.push_back(Eigen::MatrixXd::Zero(cell.input_weight.rows(), cell.input_weight.cols()));
    grads.push_back(Eigen::MatrixXd::Zero(cell.hidden_weight.rows(), cell.hidden_weight.cols()));
    grads.push_back(Eigen::MatrixXd::Zero(cell.bias.size(), 1));
  }
  for (auto& g : readout_.zero_grads()) grads.push_back(std::move(g));
  return grads;
}

bool RecurrentNet::same_architecture(const RecurrentNet& other) const {
  return input_dim() == other.input_dim() && hidden_sizes() == other.hidden_sizes() &&
         readout_.same_architecture(other.readout_);
}

nlohmann::json RecurrentNet::descriptor() const {
  return {{"type", "lstm"},
          {"input_dim", input_dim()},
          {"hidden", hidden_sizes()},
          {"readout", readout_.descriptor()}};
}

RecurrentNet RecurrentNet::from_descriptor(const nlohmann::json& descriptor) {
  try {
    require(descriptor.at("type") == "lstm", ErrorCode::kCorrupt,
            "descriptor does not describe a recurrent network");
    int fan_in = descriptor.at("input_dim").get<int>();
    std::vector<LstmCell> cells;
    for (int h : descriptor.at("hidden").get<std::vector<int>>()) {
      require(h > 0 && fan_in > 0, ErrorCode::kCorrupt, "recurrent descriptor has bad sizes");
      cells.push_back({Eigen::MatrixXd::Zero(4 * h, fan_in), Eigen::MatrixXd::Zero(4 * h, h),
                       Eigen::VectorXd::Zero(4 * h)});
      fan_in = h;
    }
    return RecurrentNet(std::move(cells), DenseNet::from_descriptor(descriptor.at("readout")));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("malformed recurrent descriptor: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorrupt) throw;
    fail(ErrorCode::kCorrupt, std::string("invalid recurrent descriptor: ") + e.what());
  }
}

}  // namespace plrl::nn
