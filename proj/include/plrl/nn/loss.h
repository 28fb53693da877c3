#ifndef PLRL_NN_LOSS_H_
#define PLRL_NN_LOSS_H_

#include <Eigen/Core>

namespace plrl::nn {

inline constexpr double kProbabilityClamp = 1e-7;

// Mean binary cross-entropy over all elements; p is clamped to
// [1e-7, 1 - 1e-7].
double bce_loss(const Eigen::Ref<const Eigen::MatrixXd>& p,
                const Eigen::Ref<const Eigen::MatrixXd>& y);
Eigen::MatrixXd bce_gradient(const Eigen::Ref<const Eigen::MatrixXd>& p,
                             const Eigen::Ref<const Eigen::MatrixXd>& y);

// Weighted variants: sum(w * bce) / sum(w). Zero weights mask entries out.
double bce_loss(const Eigen::Ref<const Eigen::MatrixXd>& p,
                const Eigen::Ref<const Eigen::MatrixXd>& y,
                const Eigen::Ref<const Eigen::MatrixXd>& weight);
Eigen::MatrixXd bce_gradient(const Eigen::Ref<const Eigen::MatrixXd>& p,
                             const Eigen::Ref<const Eigen::MatrixXd>& y,
                             const Eigen::Ref<const Eigen::MatrixXd>& weight);

// Mean squared error over all elements.
double mse_loss(const Eigen::Ref<const Eigen::MatrixXd>& q,
                const Eigen::Ref<const Eigen::MatrixXd>& target);
Eigen::MatrixXd mse_gradient(const Eigen::Ref<const Eigen::MatrixXd>& q,
                             const Eigen::Ref<const Eigen::MatrixXd>& target);

}  // namespace plrl::nn

#endif  // PLRL_NN_LOSS_H_
