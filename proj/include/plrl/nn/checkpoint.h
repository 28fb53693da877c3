#ifndef PLRL_NN_CHECKPOINT_H_
#define PLRL_NN_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "plrl/nn/dense.h"
#include "plrl/nn/params.h"
#include "plrl/nn/recurrent.h"

namespace plrl::nn {

// File layout (all integers little-endian):
//   magic      8 bytes  "PLRLCKPT"
//   version    u32
//   desc_len   u32
//   descriptor desc_len bytes of JSON text (architecture, normalisation, kind)
//   count      u64      number of parameters
//   values     count x f32, parameter blocks in declared order
//   checksum   u64      FNV-1a over every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'P', 'L', 'R', 'L', 'C', 'K', 'P', 'T'};

struct Checkpoint {
  nlohmann::json descriptor;
  std::vector<float> values;
};

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& descriptor,
                      const ConstParamList& params);
// Throws kNotFound, kVersion or kCorrupt.
Checkpoint read_checkpoint(const std::filesystem::path& path);
// Copies stored values into `params`; throws kCorrupt on a count mismatch.
void assign_parameters(const Checkpoint& checkpoint, const ParamList& params);

// Rounds every parameter to 32-bit precision in place, i.e. to exactly the
// values a checkpoint round-trip would produce.
void round_to_stored_precision(const ParamList& params);

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_dense_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const RecurrentNet& net, const std::filesystem::path& path);
RecurrentNet load_recurrent_checkpoint(const std::filesystem::path& path);

// Deep copy of parameters; throws kDimensionMismatch on architecture mismatch.
void copy_params(const DenseNet& source, DenseNet& destination);
void copy_params(const RecurrentNet& source, RecurrentNet& destination);

}  // namespace plrl::nn

#endif  // PLRL_NN_CHECKPOINT_H_
