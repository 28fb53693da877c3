#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "plrl/cli.h"
#include "plrl/data_io.h"
#include "plrl/synthetic.h"

namespace plrl {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "plrl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "plrl_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

fs::path write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream(path) << j.dump(2);
  return path;
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

// Per-episode returns from the training log, located by header name.
std::vector<double> logged_returns(const fs::path& path) {
  const auto lines = lines_of(path);
  std::vector<std::string> header;
  std::stringstream hs(lines.at(0));
  for (std::string f; std::getline(hs, f, ',');) header.push_back(f);
  const auto col = static_cast<std::size_t>(std::find(header.begin(), header.end(), "return") - header.begin());
  std::vector<double> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::stringstream ls(lines[i]);
    std::vector<std::string> fields;
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    out.push_back(std::stod(fields.at(col)));
  }
  return out;
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// ------------------------------------------------------------------ usage

TEST(CliUsage, HelpSucceeds) {
  const CliRun r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"ingest", "synth", "train-user-model", "train-agent", "evaluate"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
}

TEST(CliUsage, MissingSubcommandIsUsageError) { EXPECT_EQ(run({}).code, static_cast<int>(ExitCode::kUsage)); }

TEST(CliUsage, InvalidModelNameIsUsageError) {
  const CliRun r = run({"train-user-model", "--model", "lstm", "-o", fresh_dir("bad_model").string()});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kUsage));
}

TEST(CliUsage, UnknownPolicyIsUsageError) {
  const CliRun r = run({"evaluate", "--policies", "random,oracle", "-o", fresh_dir("bad_policy").string()});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kUsage));
  EXPECT_NE(r.err.find("oracle"), std::string::npos);
}

TEST(CliUsage, PolicyListParsing) {
  EXPECT_EQ(parse_policy_list("gmpc,random"), (std::vector<std::string>{"gmpc", "random"}));
  EXPECT_THROW(parse_policy_list("random,random"), Error);
  EXPECT_THROW(parse_policy_list(""), Error);
}

TEST(CliUsage, ExitCodeClassesAreDistinct) {
  EXPECT_EQ(exit_code_for(ErrorCode::kUsage), ExitCode::kUsage);
  EXPECT_EQ(exit_code_for(ErrorCode::kSchema), ExitCode::kSchema);
  EXPECT_EQ(exit_code_for(ErrorCode::kDependency), ExitCode::kDependency);
  EXPECT_EQ(exit_code_for(ErrorCode::kNumeric), ExitCode::kNumeric);
  EXPECT_EQ(exit_code_for(ErrorCode::kNotFound), ExitCode::kNotFound);
  std::set<int> codes;
  for (ExitCode c : {ExitCode::kOk, ExitCode::kOther, ExitCode::kUsage, ExitCode::kSchema, ExitCode::kDependency,
                     ExitCode::kNumeric, ExitCode::kNotFound}) {
    codes.insert(static_cast<int>(c));
  }
  EXPECT_EQ(codes.size(), 7u);
}

// ----------------------------------------------------------------- config

TEST(CliConfig, RoundTripsThroughJson) {
  ExperimentConfig c;
  c.synthetic = SyntheticSpec{};
  c.synthetic->num_sessions = 123;
  c.split_seed = 9;
  c.environment = EnvConfig::session_mode();
  c.cwm.hidden = {7};
  c.swm.train.max_epochs = 3;
  c.agent.episodes = 11;
  c.evaluation.bootstrap_replicates = 17;
  c.policies = {"agent", "random"};
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.synthetic->num_sessions, 123u);
  EXPECT_EQ(back.environment.pool_size, 15u);
  EXPECT_EQ(back.policies, c.policies);
}

TEST(CliConfig, UnknownSectionIsSchemaError) {
  const fs::path dir = fresh_dir("unknown_section");
  const fs::path cfg = write_json(dir / "c.json", {{"agnet", {{"episodes", 3}}}});
  const CliRun r = run({"synth", "-c", cfg.string(), "-o", (dir / "out").string()});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kSchema));
  EXPECT_NE(r.err.find("agnet"), std::string::npos);
}

TEST(CliConfig, MalformedJsonIsSchemaError) {
  const fs::path dir = fresh_dir("malformed_json");
  std::ofstream(dir / "c.json") << "{\"split\": ";
  EXPECT_EQ(run({"synth", "-c", (dir / "c.json").string()}).code, static_cast<int>(ExitCode::kSchema));
}

TEST(CliConfig, MissingConfigIsNotFound) {
  EXPECT_EQ(run({"synth", "-c", "/nonexistent/plrl.json"}).code, static_cast<int>(ExitCode::kNotFound));
}

TEST(CliConfig, FlagsOverrideConfig) {
  const fs::path dir = fresh_dir("flags_win");
  const fs::path cfg = write_json(
      dir / "c.json", {{"synthetic", {{"num_sessions", 40}, {"num_tracks", 200}, {"seed", 1}}},
                       {"output_dir", (dir / "from_config").string()}});
  const CliRun r = run({"synth", "-c", cfg.string(), "--sessions", "25", "-o", (dir / "from_flag").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(dir / "from_config"));
  EXPECT_EQ(read_manifest(dir / "from_flag" / "data" / "manifest.json").session_count, 25u);
}

TEST(CliConfig, EnvironmentVariableOverridesOutputRoot) {
  const fs::path dir = fresh_dir("env_root");
  const fs::path cfg = write_json(
      dir / "c.json", {{"synthetic", {{"num_sessions", 20}, {"num_tracks", 200}, {"seed", 1}}},
                       {"output_dir", (dir / "from_config").string()}});
  ::setenv(kOutputRootEnv, (dir / "from_env").string().c_str(), 1);
  const CliRun r = run({"synth", "-c", cfg.string()});
  ::unsetenv(kOutputRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "from_env" / "data" / "manifest.json"));
  EXPECT_FALSE(fs::exists(dir / "from_config"));
}

// ----------------------------------------------------------------- ingest

class CliIngest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fresh_dir("ingest");
    SyntheticSpec spec;
    spec.num_sessions = 30;
    spec.num_tracks = 300;
    spec.seed = 3;
    const SyntheticDataset data = generate_synthetic(spec);
    write_sessions(dir_ / "sessions.csv", data.sessions);
    write_features(dir_ / "features.csv", data.features);
  }
  fs::path dir_;
};

TEST_F(CliIngest, ValidFilesWriteManifest) {
  const CliRun r = run({"ingest", "--sessions", (dir_ / "sessions.csv").string(), "--features",
                     (dir_ / "features.csv").string(), "-o", (dir_ / "out").string(), "--split-seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const DatasetManifest m = read_manifest(dir_ / "out" / "data" / "manifest.json");
  EXPECT_EQ(m.session_count, 30u);
  EXPECT_EQ(m.track_count, 300u);
  EXPECT_EQ(m.split_seed, 5u);
  EXPECT_NO_THROW(verify_checksums(m));
  EXPECT_NE(r.out.find("sessions: 30"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "logs" / "ingest_config.json"));
}

TEST_F(CliIngest, MissingFileIsNotFoundClass) {
  const CliRun r = run({"ingest", "--sessions", (dir_ / "absent.csv").string(), "--features",
                     (dir_ / "features.csv").string(), "-o", (dir_ / "out").string()});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kNotFound));
  EXPECT_NE(r.err.find("not found"), std::string::npos);
}

TEST_F(CliIngest, ReportedRejectsEqualInjectedRows) {
  {
    std::ofstream out(dir_ / "sessions.csv", std::ios::app);
    out << "zz,1,3,t0,maybe,false,false,true\n";
    out << "zz,two,3,t0,false,false,false,true\n";
    out << "zz,3,3,t0,false,false\n";
    out << "zz,4,3,,false,false,false,true\n";
  }
  const CliRun r = run({"ingest", "--sessions", (dir_ / "sessions.csv").string(), "--features",
                     (dir_ / "features.csv").string(), "-o", (dir_ / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rejected session rows: 4\n"), std::string::npos) << r.out;
  EXPECT_EQ(read_manifest(dir_ / "out" / "data" / "manifest.json").rejected_rows, 4u);
}

TEST_F(CliIngest, MissingColumnIsSchemaError) {
  std::ofstream(dir_ / "bad.csv") << "session_id,session_position,session_length,track_id\ns,1,1,t0\n";
  const CliRun r = run({"ingest", "--sessions", (dir_ / "bad.csv").string(), "--features",
                     (dir_ / "features.csv").string(), "-o", (dir_ / "out").string()});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kSchema));
  EXPECT_NE(r.err.find("skip_1"), std::string::npos) << r.err;
}

// ----------------------------------------------------------- dependencies

TEST(CliDependencies, TrainAgentWithoutCwmIsDependencyError) {
  const fs::path dir = fresh_dir("no_cwm");
  const CliRun r = run({"train-agent", "-o", dir.string()});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kDependency));
  EXPECT_NE(r.err.find("cwm"), std::string::npos);
}

TEST(CliDependencies, EvaluateWithoutSwmIsDependencyError) {
  const fs::path dir = fresh_dir("no_swm");
  EXPECT_EQ(run({"evaluate", "-o", dir.string()}).code, static_cast<int>(ExitCode::kDependency));
}

TEST(CliDependencies, TrainingWithoutManifestIsDependencyError) {
  const fs::path dir = fresh_dir("no_manifest");
  EXPECT_EQ(run({"train-user-model", "--model", "cwm", "-o", dir.string()}).code,
            static_cast<int>(ExitCode::kDependency));
}

TEST(CliDependencies, DivergentTrainingIsNumericAbort) {
  const fs::path dir = fresh_dir("diverge");
  const fs::path cfg = write_json(
      dir / "c.json", {{"synthetic", {{"num_sessions", 60}, {"num_tracks", 200}, {"seed", 1}}},
                       {"cwm", {{"hidden", {8}}, {"max_epochs", 3}, {"learning_rate", 1e300}, {"clip_norm", 0.0}}}});
  ASSERT_EQ(run({"synth", "-c", cfg.string(), "-o", dir.string()}).code, 0);
  const CliRun r = run({"train-user-model", "--model", "cwm", "-c", cfg.string(), "-o", dir.string()});
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kNumeric)) << r.err;
}

// --------------------------------------------------------------- pipeline

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fresh_dir("pipeline");
    config_ = write_json(
        root_ / "config.json",
        {{"synthetic", {{"num_sessions", 1000}, {"num_tracks", 800}, {"rho", 0.0}, {"seed", 5}}},
         {"split", {{"fractions", {0.7, 0.15, 0.15}}, {"seed", 7}}},
         {"environment", {{"mode", "selection"}}},
         {"cwm", {{"hidden", {32}}, {"max_epochs", 20}, {"seed", 1}}},
         {"swm", {{"hidden", {32}}, {"max_epochs", 20}, {"seed", 2}}},
         {"agent", {{"episodes", 400}, {"hidden", {32}}, {"warmup", 300}, {"seed", 3}}},
         {"evaluation", {{"episodes", 150}, {"bootstrap_replicates", 200}, {"seed", 4}}},
         {"output_dir", (root_ / "out").string()}});
    synth_ = run({"synth", "-c", config_.string()});
    cwm_ = run({"train-user-model", "--model", "cwm", "-c", config_.string()});
    swm_ = run({"train-user-model", "--model", "swm", "-c", config_.string()});
    agent_ = run({"train-agent", "-c", config_.string()});
  }

  fs::path out() const { return root_ / "out"; }

  static inline fs::path root_;
  static inline fs::path config_;
  static inline CliRun synth_, cwm_, swm_, agent_;
};

TEST_F(CliPipeline, UserModelCheckpointsAndMetrics) {
  ASSERT_EQ(synth_.code, 0) << synth_.err;
  ASSERT_EQ(cwm_.code, 0) << cwm_.err;
  ASSERT_EQ(swm_.code, 0) << swm_.err;
  EXPECT_TRUE(fs::exists(out() / "checkpoints" / "cwm.ckpt"));
  EXPECT_TRUE(fs::exists(out() / "checkpoints" / "swm.ckpt"));
  EXPECT_NE(cwm_.out.find("final validation BCE"), std::string::npos);
  EXPECT_NE(swm_.out.find("final validation BCE"), std::string::npos);
  EXPECT_GE(lines_of(out() / "logs" / "cwm_metrics.csv").size(), 2u);
  EXPECT_GE(lines_of(out() / "logs" / "swm_metrics.csv").size(), 2u);
}

TEST_F(CliPipeline, ProvenanceRecordsConfigAndSeeds) {
  const auto j = nlohmann::json::parse(read_bytes(out() / "logs" / "train-agent_config.json"));
  EXPECT_EQ(j.at("agent_seed").get<int>(), 3);
  EXPECT_EQ(j.at("split_seed").get<int>(), 7);
  EXPECT_EQ(j.at("config").at("agent").at("episodes").get<int>(), 400);
  EXPECT_TRUE(fs::exists(out() / "logs" / "synth_config.json"));
}

TEST_F(CliPipeline, AgentLearningCurveRises) {
  ASSERT_EQ(agent_.code, 0) << agent_.err;
  EXPECT_TRUE(fs::exists(out() / "checkpoints" / "agent.ckpt"));
  const std::vector<double> returns = logged_returns(out() / "logs" / "agent_training.csv");
  ASSERT_EQ(returns.size(), 400u);
  const std::span<const double> all(returns);
  EXPECT_GT(mean(all.last(40)), mean(all.first(40)));
}

TEST_F(CliPipeline, ResumeReproducesTrajectory) {
  ASSERT_EQ(agent_.code, 0) << agent_.err;
  const fs::path init = root_ / "init.ckpt";
  fs::copy_file(out() / "checkpoints" / "agent.ckpt", init, fs::copy_options::overwrite_existing);
  const fs::path a = root_ / "resume_a", b = root_ / "resume_b";
  for (const auto& dest : {a, b}) {
    fs::create_directories(dest);
    fs::copy(out() / "data", dest / "data", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    fs::create_directories(dest / "checkpoints");
    fs::copy_file(out() / "checkpoints" / "cwm.ckpt", dest / "checkpoints" / "cwm.ckpt",
                  fs::copy_options::overwrite_existing);
    const CliRun r = run({"train-agent", "-c", config_.string(), "-o", dest.string(), "--resume", init.string(),
                       "--episodes", "40", "--seed", "11"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(read_bytes(a / "logs" / "agent_training.csv"), read_bytes(b / "logs" / "agent_training.csv"));
  EXPECT_EQ(read_bytes(a / "checkpoints" / "agent.ckpt"), read_bytes(b / "checkpoints" / "agent.ckpt"));
}

TEST_F(CliPipeline, EvaluateWritesOneRowPerPolicy) {
  ASSERT_EQ(agent_.code, 0) << agent_.err;
  const CliRun r = run({"evaluate", "-c", config_.string(), "--policies", "gmpc,random", "-o",
                     (root_ / "two").string(), "--replicates", "50"});
  // The alternate root has no checkpoints.
  EXPECT_EQ(r.code, static_cast<int>(ExitCode::kDependency));

  const CliRun ok = run({"evaluate", "-c", config_.string(), "--policies", "gmpc,random", "--replicates", "50"});
  ASSERT_EQ(ok.code, 0) << ok.err;
  const auto lines = lines_of(out() / "reports" / "summary.csv");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[1].substr(0, lines[1].find(',')), "cwm-gmpc");
  EXPECT_EQ(lines[2].substr(0, lines[2].find(',')), "random");
}

TEST_F(CliPipeline, EvaluateIsByteIdenticalOnRerun) {
  ASSERT_EQ(agent_.code, 0) << agent_.err;
  std::map<std::string, std::string> first;
  const std::vector<std::string> files = {"summary.csv", "histograms.csv", "episodes.csv"};
  for (const char* workers : {"1", "2"}) {
    const CliRun r = run({"evaluate", "-c", config_.string(), "--workers", workers});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const auto& f : files) {
      const std::string bytes = read_bytes(out() / "reports" / f);
      if (first.count(f) == 0) {
        first[f] = bytes;
      } else {
        EXPECT_EQ(bytes, first[f]) << f;
      }
    }
  }
}

TEST_F(CliPipeline, SyntheticOrderingGmpcAgentRandom) {
  ASSERT_EQ(agent_.code, 0) << agent_.err;
  const CliRun r = run({"evaluate", "-c", config_.string(), "-o", out().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(out() / "reports" / "summary.csv");
  ASSERT_EQ(lines.size(), 5u);
  std::map<std::string, double> means;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::stringstream ls(lines[i]);
    std::string policy, episodes, m;
    std::getline(ls, policy, ',');
    std::getline(ls, episodes, ',');
    std::getline(ls, m, ',');
    means[policy] = std::stod(m);
  }
  EXPECT_GE(means.at("cwm-gmpc"), means.at("ah-dqn"));
  EXPECT_GT(means.at("ah-dqn"), means.at("random"));
}

}  // namespace
}  // namespace plrl
