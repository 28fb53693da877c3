#include "plrl/nn/loss.h"

#include "plrl/error.h"

namespace plrl::nn {
namespace {

void check_same_shape(const Eigen::Ref<const Eigen::MatrixXd>& a,
                      const Eigen::Ref<const Eigen::MatrixXd>& b, const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::kDimensionMismatch,
          std::string(what) + ": shape mismatch");
  require(a.size() > 0, ErrorCode::kInvalidArgument, std::string(what) + ": empty input");
}

Eigen::ArrayXXd clamp(const Eigen::Ref<const Eigen::MatrixXd>& p) {
  return p.array().max(kProbabilityClamp).min(1.0 - kProbabilityClamp);
}

Eigen::ArrayXXd elementwise_bce(const Eigen::Ref<const Eigen::MatrixXd>& p,
                                const Eigen::Ref<const Eigen::MatrixXd>& y) {
  const Eigen::ArrayXXd pc = clamp(p);
  return -(y.array() * pc.log() + (1.0 - y.array()) * (1.0 - pc).log());
}

Eigen::ArrayXXd elementwise_bce_gradient(const Eigen::Ref<const Eigen::MatrixXd>& p,
                                         const Eigen::Ref<const Eigen::MatrixXd>& y) {
  const Eigen::ArrayXXd pc = clamp(p);
  return (pc - y.array()) / (pc * (1.0 - pc));
}

}  // namespace

double bce_loss(const Eigen::Ref<const Eigen::MatrixXd>& p,
                const Eigen::Ref<const Eigen::MatrixXd>& y) {
  check_same_shape(p, y, "bce_loss");
  return elementwise_bce(p, y).mean();
}

Eigen::MatrixXd bce_gradient(const Eigen::Ref<const Eigen::MatrixXd>& p,
                             const Eigen::Ref<const Eigen::MatrixXd>& y) {
  check_same_shape(p, y, "bce_gradient");
  return (elementwise_bce_gradient(p, y) / static_cast<double>(p.size())).matrix();
}

double bce_loss(const Eigen::Ref<const Eigen::MatrixXd>& p,
                const Eigen::Ref<const Eigen::MatrixXd>& y,
                const Eigen::Ref<const Eigen::MatrixXd>& weight) {
  check_same_shape(p, y, "bce_loss");
  check_same_shape(p, weight, "bce_loss");
  const double total = weight.sum();
  require(total > 0.0, ErrorCode::kInvalidArgument, "bce_loss: weights sum to zero");
  return (elementwise_bce(p, y) * weight.array()).sum() / total;
}

Eigen::MatrixXd bce_gradient(const Eigen::Ref<const Eigen::MatrixXd>& p,
                             const Eigen::Ref<const Eigen::MatrixXd>& y,
                             const Eigen::Ref<const Eigen::MatrixXd>& weight) {
  check_same_shape(p, y, "bce_gradient");
  check_same_shape(p, weight, "bce_gradient");
  const double total = weight.sum();
  require(total > 0.0, ErrorCode::kInvalidArgument, "bce_gradient: weights sum to zero");
  return (elementwise_bce_gradient(p, y) * weight.array() / total).matrix();
}

double mse_loss(const Eigen::Ref<const Eigen::MatrixXd>& q,
                const Eigen::Ref<const Eigen::MatrixXd>& target) {
  check_same_shape(q, target, "mse_loss");
  return (q - target).squaredNorm() / static_cast<double>(q.size());
}

Eigen::MatrixXd mse_gradient(const Eigen::Ref<const Eigen::MatrixXd>& q,
                             const Eigen::Ref<const Eigen::MatrixXd>& target) {
  check_same_shape(q, target, "mse_gradient");
  return 2.0 * (q - target) / static_cast<double>(q.size());
}

}  // namespace plrl::nn
