#ifndef PLRL_CLI_H_
#define PLRL_CLI_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plrl/agents.h"
#include "plrl/environment.h"
#include "plrl/error.h"
#include "plrl/evaluation.h"
#include "plrl/synthetic.h"
#include "plrl/user_model.h"

namespace plrl {

enum class ExitCode : int {
  kOk = 0,
  kOther = 1,
  kUsage = 2,
  kSchema = 3,
  kDependency = 4,
  kNumeric = 5,
  kNotFound = 6,  // missing file or other I/O failure
};

ExitCode exit_code_for(ErrorCode code);

inline constexpr const char* kOutputRootEnv = "PLRL_OUTPUT_ROOT";

// Fixed output layout under the output root.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path manifest() const { return data() / "manifest.json"; }
  std::filesystem::path cwm_checkpoint() const { return checkpoints() / "cwm.ckpt"; }
  std::filesystem::path swm_checkpoint() const { return checkpoints() / "swm.ckpt"; }
  std::filesystem::path agent_checkpoint() const { return checkpoints() / "agent.ckpt"; }
};

struct ExperimentConfig {
  std::filesystem::path manifest;  // empty: <output>/data/manifest.json
  std::optional<SyntheticSpec> synthetic;
  std::array<double, 3> split_fractions{0.7, 0.15, 0.15};
  std::uint64_t split_seed = 0;
  EnvConfig environment = EnvConfig::selection_mode();
  CwmConfig cwm;
  SwmConfig swm;
  AgentConfig agent;
  EvalConfig evaluation;
  std::vector<std::string> policies{"random", "cosine", "gmpc", "agent"};
  std::filesystem::path output_dir = "plrl-output";

  nlohmann::json to_json() const;
  // Relative manifest paths resolve against `base_dir`. Type errors and
  // unknown sections throw kSchema.
  static ExperimentConfig from_json(const nlohmann::json& json, const std::filesystem::path& base_dir = {});
};

// Throws kNotFound for a missing file and kSchema for malformed JSON.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Policy names accepted by `evaluate --policies`.
inline constexpr std::array<const char*, 4> kPolicyNames = {"random", "cosine", "gmpc", "agent"};

// Comma-separated list; throws kUsage on an unknown or repeated name.
std::vector<std::string> parse_policy_list(const std::string& list);

// Entry point shared by the binary and the tests. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace plrl

#endif  // PLRL_CLI_H_
