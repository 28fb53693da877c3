#include "plrl/nn/dense.h"

#include <cmath>
#include <string>

#include "plrl/error.h"

namespace plrl::nn {

std::string_view activation_name(Activation activation) {
  switch (activation) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_name(std::string_view name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  fail(ErrorCode::kInvalidArgument, "unknown activation '" + std::string(name) + "'");
}

Eigen::MatrixXd apply_activation(Activation activation, const Eigen::MatrixXd& pre) {
  switch (activation) {
    case Activation::kIdentity: return pre;
    case Activation::kRelu: return pre.cwiseMax(0.0);
    case Activation::kSigmoid: return (1.0 + (-pre.array()).exp()).inverse().matrix();
  }
  return pre;
}

Eigen::MatrixXd activation_derivative(Activation activation, const Eigen::MatrixXd& output) {
  switch (activation) {
    case Activation::kIdentity: return Eigen::MatrixXd::Ones(output.rows(), output.cols());
    case Activation::kRelu: return (output.array() > 0.0).cast<double>().matrix();
    case Activation::kSigmoid: return (output.array() * (1.0 - output.array())).matrix();
  }
  return output;
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), ErrorCode::kInvalidArgument, "DenseNet needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& layer = layers_[i];
    require(layer.bias.size() == layer.weight.rows(), ErrorCode::kDimensionMismatch,
            "DenseNet: bias size does not match layer width");
    if (i > 0) {
      require(layer.weight.cols() == layers_[i - 1].weight.rows(), ErrorCode::kDimensionMismatch,
              "DenseNet: layer " + std::to_string(i) + " does not chain with the previous layer");
    }
  }
}

DenseNet DenseNet::random(int input_dim, std::span<const int> widths,
                          std::span<const Activation> activations, Rng& rng) {
  require(widths.size() == activations.size() && !widths.empty(), ErrorCode::kInvalidArgument,
          "DenseNet::random: widths and activations must be non-empty and equal length");
  std::vector<DenseLayer> layers;
  int fan_in = input_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    require(fan_in > 0 && widths[i] > 0, ErrorCode::kInvalidArgument,
            "DenseNet::random: layer sizes must be positive");
    DenseLayer layer;
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    layer.weight.resize(widths[i], fan_in);
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        layer.weight(r, c) = rng.uniform(-limit, limit);
      }
    }
    layer.bias = Eigen::VectorXd::Zero(widths[i]);
    layer.activation = activations[i];
    layers.push_back(std::move(layer));
    fan_in = widths[i];
  }
  return DenseNet(std::move(layers));
}

DenseNet DenseNet::identity(int dim) {
  DenseLayer layer{Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim),
                   Activation::kIdentity};
  return DenseNet({std::move(layer)});
}

int DenseNet::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int DenseNet::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

Eigen::MatrixXd DenseNet::forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  require(x.rows() == input_dim(), ErrorCode::kDimensionMismatch,
          "DenseNet::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
              std::to_string(input_dim()));
  Eigen::MatrixXd h = x;
  for (const DenseLayer& layer : layers_) {
    Eigen::MatrixXd pre = layer.weight * h;
    pre.colwise() += layer.bias;
    h = apply_activation(layer.activation, pre);
  }
  return h;
}

Eigen::MatrixXd DenseNet::forward(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                  DenseCache& cache) const {
  require(x.rows() == input_dim(), ErrorCode::kDimensionMismatch,
          "DenseNet::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
              std::to_string(input_dim()));
  cache.inputs.clear();
  cache.outputs.clear();
  Eigen::MatrixXd h = x;
  for (const DenseLayer& layer : layers_) {
    cache.inputs.push_back(h);
    Eigen::MatrixXd pre = layer.weight * h;
    pre.colwise() += layer.bias;
    h = apply_activation(layer.activation, pre);
    cache.outputs.push_back(h);
  }
  return h;
}

DenseBackward DenseNet::backward(const DenseCache& cache,
                                 const Eigen::Ref<const Eigen::MatrixXd>& upstream) const {
  require(cache.outputs.size() == layers_.size(), ErrorCode::kInvalidArgument,
          "DenseNet::backward: cache does not belong to this network");
  require(upstream.rows() == output_dim() && upstream.cols() == cache.outputs.back().cols(),
          ErrorCode::kDimensionMismatch, "DenseNet::backward: upstream gradient shape mismatch");
  DenseBackward result;
  result.params.resize(2 * layers_.size());
  Eigen::MatrixXd grad = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const DenseLayer& layer = layers_[k];
    Eigen::MatrixXd delta =
        grad.cwiseProduct(activation_derivative(layer.activation, cache.outputs[k]));
    result.params[2 * k] = delta * cache.inputs[k].transpose();
    result.params[2 * k + 1] = delta.rowwise().sum();
    grad = layer.weight.transpose() * delta;
  }
  result.input = std::move(grad);
  return result;
}

ParamList DenseNet::parameters() {
  ParamList params;
  for (DenseLayer& layer : layers_) {
    params.push_back(as_span(layer.weight));
    params.push_back(as_span(layer.bias));
  }
  return params;
}

ConstParamList DenseNet::parameters() const {
  ConstParamList params;
  for (const DenseLayer& layer : layers_) {
    params.push_back(as_span(layer.weight));
    params.push_back(as_span(layer.bias));
  }
  return params;
}

ParamGrads DenseNet::zero_grads() const {
  ParamGrads grads;
  for (const DenseLayer& layer : layers_) {
    grads.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    grads.push_back(Eigen::MatrixXd::Zero(layer.bias.size(), 1));
  }
  return grads;
}

bool DenseNet::same_architecture(const DenseNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& a = layers_[i];
    const DenseLayer& b = other.layers_[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.activation != b.activation) {
      return false;
    }
  }
  return true;
}

nlohmann::json DenseNet::descriptor() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& layer : layers_) {
    layers.push_back({{"in", layer.weight.cols()},
                      {"out", layer.weight.rows()},
                      {"activation", activation_name(layer.activation)}});
  }
  return {{"type", "dense"}, {"layers", layers}};
}

DenseNet DenseNet::from_descriptor(const nlohmann::json& descriptor) {
  try {
    require(descriptor.at("type") == "dense", ErrorCode::kCorrupt,
            "descriptor does not describe a dense network");
    std::vector<DenseLayer> layers;
    for (const auto& entry : descriptor.at("layers")) {
      const int in = entry.at("in").get<int>();
      const int out = entry.at("out").get<int>();
      require(in > 0 && out > 0, ErrorCode::kCorrupt, "dense descriptor has non-positive sizes");
      layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out),
                        activation_from_name(entry.at("activation").get<std::string>())});
    }
    return DenseNet(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("malformed dense descriptor: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorrupt) throw;
    fail(ErrorCode::kCorrupt, std::string("invalid dense descriptor: ") + e.what());
  }
}

}  // namespace plrl::nn
