#include "plrl/nn/params.h"

#include "plrl/error.h"

namespace plrl::nn {

ConstParamList as_const(const ParamList& params) {
  return ConstParamList(params.begin(), params.end());
}

std::size_t parameter_count(const ConstParamList& params) {
  std::size_t total = 0;
  for (const auto& block : params) total += block.size();
  return total;
}

void accumulate(ParamGrads& into, const ParamGrads& other) {
  require(into.size() == other.size(), ErrorCode::kDimensionMismatch,
          "accumulate: gradient block count mismatch");
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += other[i];
}

}  // namespace plrl::nn
