#ifndef PLRL_NN_DENSE_H_
#define PLRL_NN_DENSE_H_

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "plrl/nn/params.h"
#include "plrl/rng.h"

namespace plrl::nn {

enum class Activation { kIdentity, kRelu, kSigmoid };

std::string_view activation_name(Activation activation);
Activation activation_from_name(std::string_view name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kIdentity;
};

// Per-layer inputs and post-activation outputs of one forward pass.
struct DenseCache {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> outputs;
};

struct DenseBackward {
  ParamGrads params;      // [W0, b0, W1, b1, ...]
  Eigen::MatrixXd input;  // dL/dx, same shape as the forward input
};

// Fully connected feed-forward network. Inputs are batched column-wise:
// an (input_dim x batch) matrix yields an (output_dim x batch) matrix.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  // Weights uniform in +-1/sqrt(fan_in), zero biases.
  static DenseNet random(int input_dim, std::span<const int> widths,
                         std::span<const Activation> activations, Rng& rng);
  static DenseNet identity(int dim);

  int input_dim() const;
  int output_dim() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x, DenseCache& cache) const;
  DenseBackward backward(const DenseCache& cache,
                         const Eigen::Ref<const Eigen::MatrixXd>& upstream) const;

  ParamList parameters();
  ConstParamList parameters() const;
  ParamGrads zero_grads() const;

  bool same_architecture(const DenseNet& other) const;
  nlohmann::json descriptor() const;
  // Builds a zero-initialised network from a descriptor.
  static DenseNet from_descriptor(const nlohmann::json& descriptor);

 private:
  std::vector<DenseLayer> layers_;
};

// Activation applied element-wise, and its derivative expressed through
// the activation output.
Eigen::MatrixXd apply_activation(Activation activation, const Eigen::MatrixXd& pre);
Eigen::MatrixXd activation_derivative(Activation activation, const Eigen::MatrixXd& output);

}  // namespace plrl::nn

#endif  // PLRL_NN_DENSE_H_
