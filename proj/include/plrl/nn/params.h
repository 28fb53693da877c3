#ifndef PLRL_NN_PARAMS_H_
#define PLRL_NN_PARAMS_H_

#include <span>
#include <vector>

#include <Eigen/Core>

namespace plrl::nn {

// Mutable views of a network's parameter blocks, in declared order.
using ParamList = std::vector<std::span<double>>;
using ConstParamList = std::vector<std::span<const double>>;

// One gradient block per parameter block, same element count and storage
// order (column-major) as the matching span.
using ParamGrads = std::vector<Eigen::MatrixXd>;

template <class Derived>
std::span<double> as_span(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

template <class Derived>
std::span<const double> as_span(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

ConstParamList as_const(const ParamList& params);
std::size_t parameter_count(const ConstParamList& params);

// Adds `other` into `into`, block by block.
void accumulate(ParamGrads& into, const ParamGrads& other);

}  // namespace plrl::nn

#endif  // PLRL_NN_PARAMS_H_
