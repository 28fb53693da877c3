#include "plrl/nn/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "plrl/error.h"

namespace plrl::nn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t hash = kFnvOffset;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= kFnvPrime;
  }
  return hash;
}

template <class T>
void append(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T read(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  std::string read_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string out = bytes_.substr(offset_, n);
    offset_ += n;
    return out;
  }

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      fail(ErrorCode::kCorrupt, std::string("checkpoint truncated while reading ") + what);
    }
  }

  const std::string& bytes_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& descriptor,
                      const ConstParamList& params) {
  const std::string text = descriptor.dump();
  std::string out;
  out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  append<std::uint32_t>(out, kCheckpointVersion);
  append<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  append<std::uint64_t>(out, parameter_count(params));
  for (const auto& block : params) {
    for (double v : block) append<float>(out, static_cast<float>(v));
  }
  append<std::uint64_t>(out, fnv1a(out));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  require(file.good(), ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(file.good(), ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  require(file.good(), ErrorCode::kNotFound, "checkpoint file not found: '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  Reader reader(bytes);
  const std::string magic = reader.read_bytes(sizeof(kCheckpointMagic), "magic");
  require(std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) == 0,
          ErrorCode::kCorrupt, "'" + path.string() + "' is not a checkpoint file");
  const auto version = reader.read<std::uint32_t>("version");
  require(version == kCheckpointVersion, ErrorCode::kVersion,
          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  const auto descriptor_size = reader.read<std::uint32_t>("descriptor length");
  const std::string text = reader.read_bytes(descriptor_size, "descriptor");
  const auto count = reader.read<std::uint64_t>("parameter count");
  require(count <= reader.remaining() / sizeof(float), ErrorCode::kCorrupt,
          "checkpoint truncated: parameter block shorter than declared");

  Checkpoint checkpoint;
  checkpoint.values.resize(count);
  for (auto& v : checkpoint.values) v = reader.read<float>("parameters");
  const std::size_t body_size = reader.offset();
  const auto checksum = reader.read<std::uint64_t>("checksum");
  require(reader.remaining() == 0, ErrorCode::kCorrupt, "checkpoint has trailing bytes");
  require(checksum == fnv1a(bytes.substr(0, body_size)), ErrorCode::kCorrupt,
          "checkpoint checksum mismatch");
  try {
    checkpoint.descriptor = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("checkpoint descriptor is not valid JSON: ") + e.what());
  }
  return checkpoint;
}

void assign_parameters(const Checkpoint& checkpoint, const ParamList& params) {
  const std::size_t expected = parameter_count(as_const(params));
  require(checkpoint.values.size() == expected, ErrorCode::kCorrupt,
          "checkpoint holds " + std::to_string(checkpoint.values.size()) +
              " parameters, architecture needs " + std::to_string(expected));
  std::size_t k = 0;
  for (const auto& block : params) {
    for (double& v : block) v = static_cast<double>(checkpoint.values[k++]);
  }
}

void round_to_stored_precision(const ParamList& params) {
  for (const auto& block : params) {
    for (double& v : block) v = static_cast<double>(static_cast<float>(v));
  }
}

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path) {
  write_checkpoint(path, {{"kind", "dense"}, {"net", net.descriptor()}}, net.parameters());
}

DenseNet load_dense_checkpoint(const std::filesystem::path& path) {
  Checkpoint checkpoint = read_checkpoint(path);
  require(checkpoint.descriptor.value("kind", "") == "dense", ErrorCode::kCorrupt,
          "'" + path.string() + "' does not hold a dense network");
  DenseNet net = DenseNet::from_descriptor(checkpoint.descriptor.at("net"));
  assign_parameters(checkpoint, net.parameters());
  return net;
}

void save_checkpoint(const RecurrentNet& net, const std::filesystem::path& path) {
  write_checkpoint(path, {{"kind", "lstm"}, {"net", net.descriptor()}}, net.parameters());
}

RecurrentNet load_recurrent_checkpoint(const std::filesystem::path& path) {
  Checkpoint checkpoint = read_checkpoint(path);
  require(checkpoint.descriptor.value("kind", "") == "lstm", ErrorCode::kCorrupt,
          "'" + path.string() + "' does not hold a recurrent network");
  RecurrentNet net = RecurrentNet::from_descriptor(checkpoint.descriptor.at("net"));
  assign_parameters(checkpoint, net.parameters());
  return net;
}

namespace {

void copy_blocks(const ConstParamList& source, const ParamList& destination) {
  for (std::size_t i = 0; i < source.size(); ++i) {
    std::copy(source[i].begin(), source[i].end(), destination[i].begin());
  }
}

}  // namespace

void copy_params(const DenseNet& source, DenseNet& destination) {
  require(source.same_architecture(destination), ErrorCode::kDimensionMismatch,
          "copy_params: architectures differ");
  copy_blocks(source.parameters(), destination.parameters());
}

void copy_params(const RecurrentNet& source, RecurrentNet& destination) {
  require(source.same_architecture(destination), ErrorCode::kDimensionMismatch,
          "copy_params: architectures differ");
  copy_blocks(source.parameters(), destination.parameters());
}

}  // namespace plrl::nn
