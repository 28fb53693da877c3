#include "plrl/cli.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "plrl/data_io.h"
#include "plrl/log.h"

namespace plrl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json train_to_json(const std::vector<int>& hidden, const TrainConfig& t) {
  return {{"hidden", hidden},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"learning_rate", t.adam.learning_rate},
          {"clip_norm", t.adam.clip_norm},
          {"seed", t.seed}};
}

template <typename ModelConfig>
ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.train.batch_size = j.value("batch_size", c.train.batch_size);
  c.train.max_epochs = j.value("max_epochs", c.train.max_epochs);
  c.train.patience = j.value("patience", c.train.patience);
  c.train.adam.learning_rate = j.value("learning_rate", c.train.adam.learning_rate);
  c.train.adam.clip_norm = j.value("clip_norm", c.train.adam.clip_norm);
  c.train.seed = j.value("seed", c.train.seed);
  return c;
}

const std::set<std::string>& known_sections() {
  static const std::set<std::string> keys = {"manifest", "synthetic", "split",      "environment", "cwm",
                                             "swm",      "agent",     "evaluation", "output_dir"};
  return keys;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << text;
}

std::string fmt_double(const char* fmt, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, a);
  return buf;
}

// ------------------------------------------------------------ shared steps

struct Dataset {
  DatasetManifest manifest;
  FeatureTable features;
  DataSplit split;
};

Dataset load_dataset(const ExperimentConfig& config, const OutputLayout& layout) {
  fs::path path = config.manifest;
  if (path.empty()) {
    path = layout.manifest();
    require(fs::exists(path), ErrorCode::kDependency,
            "no dataset manifest at '" + path.string() + "'; run `ingest` or `synth` first");
  }
  Dataset d;
  d.manifest = read_manifest(path);
  verify_checksums(d.manifest);
  SessionLoadOptions options;
  options.min_length = config.environment.context_size + 1;
  SessionLoadResult sessions = load_sessions(d.manifest.sessions_path, options);
  d.features = load_features(d.manifest.features_path).table;
  d.split = split_sessions(sessions.sessions, d.manifest.split_fractions, d.manifest.split_seed);
  return d;
}

// Without catalog fill an episode needs context_size + pool_size logged tracks.
std::vector<SessionRecord> episode_sessions(std::span<const SessionRecord> sessions, const EnvConfig& env) {
  std::vector<SessionRecord> out;
  const std::size_t need = env.context_size + env.pool_size;
  for (const auto& s : sessions) {
    if (env.fill_pool_from_catalog || s.size() >= need) out.push_back(s);
  }
  if (out.size() < sessions.size()) {
    log_info("skipped " + std::to_string(sessions.size() - out.size()) + " sessions shorter than " +
             std::to_string(need) + " tracks");
  }
  return out;
}

DatasetManifest describe_dataset(const fs::path& sessions_path, const fs::path& features_path,
                                 const SessionLoadResult& sessions, const FeatureLoadResult& features,
                                 const ExperimentConfig& config) {
  DatasetManifest m;
  m.sessions_path = sessions_path;
  m.features_path = features_path;
  m.feature_dim = features.table.dim();
  m.session_count = sessions.sessions.size();
  m.track_count = features.table.size();
  m.interaction_count = sessions.interaction_count();
  m.rejected_rows = sessions.rejected_rows + features.rejected_rows;
  m.rejected_sessions = sessions.rejected_sessions;
  m.split_seed = config.split_seed;
  m.split_fractions = config.split_fractions;
  m.sessions_checksum = checksum_hex(fnv1a_file(sessions_path));
  m.features_checksum = checksum_hex(fnv1a_file(features_path));
  return m;
}

void print_dataset_summary(std::ostream& out, const DatasetManifest& m, const SessionLoadResult& sessions,
                           const FeatureLoadResult& features) {
  out << "sessions: " << m.session_count << "\n"
      << "tracks: " << m.track_count << "\n"
      << "interactions: " << m.interaction_count << "\n"
      << "feature dim: " << m.feature_dim << "\n"
      << "rejected session rows: " << sessions.rejected_rows << "\n"
      << "rejected feature rows: " << features.rejected_rows << "\n"
      << "rejected sessions: " << sessions.rejected_sessions << "\n";
}

void write_provenance(const OutputLayout& layout, const std::string& command, const ExperimentConfig& config,
                      const json& extra) {
  json j = {{"command", command}, {"config", config.to_json()}};
  for (const auto& [key, value] : extra.items()) j[key] = value;
  write_text(layout.logs() / (command + "_config.json"), j.dump(2) + "\n");
}

std::string losses_line(const HeadLosses& l) {
  return fmt_double("%.6f", total_loss(l)) + " (complete " + fmt_double("%.6f", l[0]) + ", skip " +
         fmt_double("%.6f", l[1]) + ", listen_tau " + fmt_double("%.6f", l[2]) + ")";
}

// ----------------------------------------------------------------- commands

struct IngestArgs {
  fs::path sessions;
  fs::path features;
};

int cmd_ingest(const ExperimentConfig& config, const OutputLayout& layout, const IngestArgs& args, std::ostream& out) {
  require(fs::exists(args.sessions), ErrorCode::kNotFound, "file not found: '" + args.sessions.string() + "'");
  require(fs::exists(args.features), ErrorCode::kNotFound, "file not found: '" + args.features.string() + "'");
  SessionLoadOptions options;
  options.min_length = config.environment.context_size + 1;
  const SessionLoadResult sessions = load_sessions(args.sessions, options);
  const FeatureLoadResult features = load_features(args.features);
  const DatasetManifest manifest =
      describe_dataset(fs::absolute(args.sessions), fs::absolute(args.features), sessions, features, config);
  write_manifest(layout.manifest(), manifest);
  write_provenance(layout, "ingest", config,
                   {{"split_seed", config.split_seed},
                    {"sessions", args.sessions.string()},
                    {"features", args.features.string()}});
  print_dataset_summary(out, manifest, sessions, features);
  out << "manifest: " << layout.manifest().string() << "\n";
  return 0;
}

int cmd_synth(const ExperimentConfig& config, const OutputLayout& layout, std::ostream& out) {
  const SyntheticSpec spec = config.synthetic.value_or(SyntheticSpec{});
  spec.validate();
  const SyntheticDataset data = generate_synthetic(spec);
  const fs::path sessions_path = layout.data() / "sessions.csv";
  const fs::path features_path = layout.data() / "features.csv";
  write_sessions(sessions_path, data.sessions);
  write_features(features_path, data.features);
  SessionLoadOptions options;
  options.min_length = config.environment.context_size + 1;
  const SessionLoadResult sessions = load_sessions(sessions_path, options);
  const FeatureLoadResult features = load_features(features_path);
  DatasetManifest manifest = describe_dataset(sessions_path, features_path, sessions, features, config);
  manifest.sessions_path = "sessions.csv";
  manifest.features_path = "features.csv";
  write_manifest(layout.manifest(), manifest);
  write_provenance(layout, "synth", config, {{"synthetic_seed", spec.seed}, {"split_seed", config.split_seed}});
  print_dataset_summary(out, manifest, sessions, features);
  out << "manifest: " << layout.manifest().string() << "\n";
  return 0;
}

int cmd_train_user_model(const ExperimentConfig& config, const OutputLayout& layout, const std::string& model,
                         std::ostream& out) {
  const Dataset data = load_dataset(config, layout);
  const std::size_t k = config.environment.context_size;
  const ExampleSet train = build_examples(data.split.train, data.features, k);
  const ExampleSet validation = build_examples(data.split.validation, data.features, k);
  const ExampleSet test = build_examples(data.split.test, data.features, k);
  out << "examples: train " << train.examples.size() << ", validation " << validation.examples.size()
      << ", test " << test.examples.size() << "\n";

  TrainingHistory history;
  HeadLosses test_loss{};
  fs::path checkpoint;
  std::uint64_t seed = 0;
  if (model == "cwm") {
    CwmFit fit = train_cwm(train.examples, validation.examples, config.cwm);
    checkpoint = layout.cwm_checkpoint();
    fit.model.save(checkpoint);
    if (!test.examples.empty()) test_loss = evaluate_cwm(fit.model, test.examples);
    history = std::move(fit.history);
    seed = config.cwm.train.seed;
  } else if (model == "swm") {
    SwmFit fit = train_swm(train.examples, validation.examples, config.swm);
    checkpoint = layout.swm_checkpoint();
    fit.model.save(checkpoint);
    if (!test.examples.empty()) test_loss = evaluate_swm(fit.model, test.examples);
    history = std::move(fit.history);
    seed = config.swm.train.seed;
  } else {
    fail(ErrorCode::kUsage, "unknown model '" + model + "' (expected cwm or swm)");
  }
  const fs::path metrics = layout.logs() / (model + "_metrics.csv");
  write_metrics_log(metrics, history);
  write_provenance(layout, "train-user-model_" + model, config,
                   {{"model", model}, {"model_seed", seed}, {"split_seed", data.manifest.split_seed}});
  out << "epochs: " << history.epochs.size() << " (best " << history.best_epoch << ")\n";
  out << "final validation BCE: " << losses_line(history.best_validation) << "\n";
  if (!test.examples.empty()) out << "test BCE: " << losses_line(test_loss) << "\n";
  out << "checkpoint: " << checkpoint.string() << "\n";
  out << "metrics: " << metrics.string() << "\n";
  return 0;
}

double mean_return(std::span<const EpisodeLog> log) {
  double sum = 0.0;
  for (const auto& e : log) sum += e.episode_return;
  return log.empty() ? 0.0 : sum / static_cast<double>(log.size());
}

int cmd_train_agent(const ExperimentConfig& config, const OutputLayout& layout, const fs::path& resume,
                    std::ostream& out) {
  require(fs::exists(layout.cwm_checkpoint()), ErrorCode::kDependency,
          "train-agent needs a CWM checkpoint at '" + layout.cwm_checkpoint().string() +
              "'; run `train-user-model --model cwm` first");
  std::optional<QNetwork> initial;
  if (!resume.empty()) {
    require(fs::exists(resume), ErrorCode::kNotFound, "file not found: '" + resume.string() + "'");
    initial = QNetwork::load(resume);
  }
  const Dataset data = load_dataset(config, layout);
  auto cwm = std::make_shared<const Cwm>(Cwm::load(layout.cwm_checkpoint()));
  const Environment env(config.environment, std::make_shared<CwmResponse>(cwm));
  const std::vector<SessionRecord> sessions = episode_sessions(data.split.train, config.environment);
  require(!sessions.empty(), ErrorCode::kInvalidArgument, "train-agent: no training session is long enough");
  const AgentFit fit = train_agent(env, sessions, data.features, config.agent, initial);
  fit.net.save(layout.agent_checkpoint());
  const fs::path log_path = layout.logs() / "agent_training.csv";
  write_training_log(log_path, fit.log);
  write_provenance(layout, "train-agent", config,
                   {{"agent_seed", config.agent.seed},
                    {"split_seed", data.manifest.split_seed},
                    {"resume", resume.string()}});

  const std::size_t tenth = std::max<std::size_t>(fit.log.size() / 10, 1);
  const std::span<const EpisodeLog> log(fit.log);
  out << "episodes: " << fit.log.size() << "\n"
      << "updates: " << fit.updates << "\n"
      << "target syncs: " << fit.syncs << "\n";
  if (!fit.log.empty()) {
    out << "mean return, first 10%: " << fmt_double("%.4f", mean_return(log.first(tenth))) << "\n"
        << "mean return, last 10%: " << fmt_double("%.4f", mean_return(log.last(tenth))) << "\n";
  }
  out << "checkpoint: " << layout.agent_checkpoint().string() << "\n"
      << "training log: " << log_path.string() << "\n";
  return 0;
}

std::unique_ptr<Policy> make_policy(const std::string& name, const OutputLayout& layout) {
  if (name == "random") return std::make_unique<RandomPolicy>();
  if (name == "cosine") return std::make_unique<CosinePolicy>();
  if (name == "gmpc") {
    require(fs::exists(layout.cwm_checkpoint()), ErrorCode::kDependency,
            "policy gmpc needs '" + layout.cwm_checkpoint().string() + "'; run `train-user-model --model cwm`");
    auto cwm = std::make_shared<const Cwm>(Cwm::load(layout.cwm_checkpoint()));
    return std::make_unique<GmpcPolicy>(std::make_shared<CwmResponse>(cwm));
  }
  if (name == "agent") {
    require(fs::exists(layout.agent_checkpoint()), ErrorCode::kDependency,
            "policy agent needs '" + layout.agent_checkpoint().string() + "'; run `train-agent`");
    return std::make_unique<AgentPolicy>(std::make_shared<const QNetwork>(QNetwork::load(layout.agent_checkpoint())));
  }
  fail(ErrorCode::kUsage, "unknown policy '" + name + "'");
}

int cmd_evaluate(const ExperimentConfig& config, const OutputLayout& layout, int workers, std::ostream& out) {
  require(fs::exists(layout.swm_checkpoint()), ErrorCode::kDependency,
          "evaluate needs an SWM checkpoint at '" + layout.swm_checkpoint().string() +
              "'; run `train-user-model --model swm` first");
  std::vector<std::unique_ptr<Policy>> owned;
  for (const auto& name : config.policies) owned.push_back(make_policy(name, layout));
  std::vector<const Policy*> policies;
  for (const auto& p : owned) policies.push_back(p.get());

  const Dataset data = load_dataset(config, layout);
  auto swm = std::make_shared<const Swm>(Swm::load(layout.swm_checkpoint()));
  const Environment evaluator(config.environment, std::make_shared<SwmResponse>(swm));
  const std::vector<SessionRecord> test = episode_sessions(data.split.test, config.environment);
  const std::size_t count = std::min(config.evaluation.episodes, test.size());
  require(count >= 2, ErrorCode::kInvalidArgument, "evaluate: the test split has fewer than two usable sessions");
  const std::span<const SessionRecord> sessions(test.data(), count);

  const std::vector<EpisodeResult> results =
      rollout_suite(policies, sessions, data.features, evaluator, config.evaluation.seed, workers);
  const std::vector<EvalSummary> summaries = summarize_evaluation(results, config.evaluation, workers);
  write_summary_csv(layout.reports() / "summary.csv", summaries);
  write_histograms_csv(layout.reports() / "histograms.csv", results,
                       static_cast<double>(config.environment.horizon), config.evaluation.histogram_bin);
  write_episodes_csv(layout.reports() / "episodes.csv", results);
  write_provenance(layout, "evaluate", config,
                   {{"evaluation_seed", config.evaluation.seed},
                    {"split_seed", data.manifest.split_seed},
                    {"workers", workers}});

  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %8s %9s %8s %17s %8s %17s\n", "policy", "episodes", "mean", "std",
                "95% range", "score", "score CI");
  out << line;
  for (const auto& s : summaries) {
    std::snprintf(line, sizeof(line), "%-10s %8zu %9.4f %8.4f [%6.3f, %6.3f] %8.4f [%6.3f, %6.3f]\n",
                  s.stats.policy.c_str(), s.stats.episodes, s.stats.mean, s.stats.std, s.stats.low, s.stats.high,
                  s.modal.score, s.score_ci.low, s.score_ci.high);
    out << line;
  }
  out << "reports: " << layout.reports().string() << "\n";
  return 0;
}

}  // namespace

ExitCode exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
      return ExitCode::kUsage;
    case ErrorCode::kSchema:
    case ErrorCode::kVersion:
    case ErrorCode::kCorrupt:
      return ExitCode::kSchema;
    case ErrorCode::kDependency:
      return ExitCode::kDependency;
    case ErrorCode::kNumeric:
      return ExitCode::kNumeric;
    case ErrorCode::kNotFound:
    case ErrorCode::kIo:
      return ExitCode::kNotFound;
    default:
      return ExitCode::kOther;
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  json j = {{"split", {{"fractions", split_fractions}, {"seed", split_seed}}},
            {"environment", environment.to_json()},
            {"cwm", train_to_json(cwm.hidden, cwm.train)},
            {"swm", train_to_json(swm.hidden, swm.train)},
            {"agent", agent.to_json()},
            {"evaluation", evaluation.to_json()},
            {"output_dir", output_dir.string()}};
  j["evaluation"]["policies"] = policies;
  if (!manifest.empty()) j["manifest"] = manifest.string();
  if (synthetic) j["synthetic"] = synthetic->to_json();
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  require(j.is_object(), ErrorCode::kSchema, "config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(known_sections().count(key) > 0, ErrorCode::kSchema, "config: unknown section '" + key + "'");
  }
  ExperimentConfig c;
  try {
    if (j.contains("manifest")) {
      c.manifest = j.at("manifest").get<std::string>();
      if (c.manifest.is_relative() && !base_dir.empty()) c.manifest = base_dir / c.manifest;
    }
    if (j.contains("synthetic")) c.synthetic = SyntheticSpec::from_json(j.at("synthetic"));
    if (j.contains("split")) {
      const json& s = j.at("split");
      c.split_fractions = s.value("fractions", c.split_fractions);
      c.split_seed = s.value("seed", c.split_seed);
    }
    if (j.contains("environment")) c.environment = EnvConfig::from_json(j.at("environment"));
    if (j.contains("cwm")) c.cwm = model_config_from_json<CwmConfig>(j.at("cwm"));
    if (j.contains("swm")) c.swm = model_config_from_json<SwmConfig>(j.at("swm"));
    if (j.contains("agent")) c.agent = AgentConfig::from_json(j.at("agent"));
    if (j.contains("evaluation")) {
      c.evaluation = EvalConfig::from_json(j.at("evaluation"));
      if (j.at("evaluation").contains("policies")) {
        c.policies.clear();
        for (const auto& p : j.at("evaluation").at("policies")) c.policies.push_back(p.get<std::string>());
      }
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  require(fs::exists(path), ErrorCode::kNotFound, "file not found: '" + path.string() + "'");
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot read '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, "config '" + path.string() + "': " + e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

std::vector<std::string> parse_policy_list(const std::string& list) {
  std::vector<std::string> names;
  std::stringstream stream(list);
  std::string name;
  while (std::getline(stream, name, ',')) {
    bool known = false;
    for (const char* k : kPolicyNames) known = known || name == k;
    require(known, ErrorCode::kUsage,
            "unknown policy '" + name + "' (expected a comma-separated subset of random,cosine,gmpc,agent)");
    for (const auto& n : names) require(n != name, ErrorCode::kUsage, "policy '" + name + "' listed twice");
    names.push_back(name);
  }
  require(!names.empty(), ErrorCode::kUsage, "no policies given");
  return names;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Playlist generation with reinforcement learning and simulated users"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Experiment config (JSON)");
    sub->add_option("-o,--output", output,
                    std::string("Output root; overrides $") + kOutputRootEnv + " and the config's output_dir");
  };

  CLI::App* ingest = app.add_subcommand("ingest", "Validate a session log and feature table and write a manifest");
  add_common(ingest);
  IngestArgs ingest_args;
  std::string sessions_file, features_file;
  ingest->add_option("--sessions", sessions_file, "Session log (CSV)")->required();
  ingest->add_option("--features", features_file, "Track feature table (CSV)")->required();
  std::uint64_t split_seed = 0;
  CLI::Option* ingest_split_seed = ingest->add_option("--split-seed", split_seed, "Seed of the train/val/test split");

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a known response mechanism");
  add_common(synth);
  std::size_t synth_sessions = 0;
  double synth_rho = 0.0;
  std::uint64_t synth_seed = 0;
  CLI::Option* synth_sessions_opt = synth->add_option("--sessions", synth_sessions, "Number of sessions");
  CLI::Option* synth_rho_opt = synth->add_option("--rho", synth_rho, "Sequential dependence coefficient");
  CLI::Option* synth_seed_opt = synth->add_option("--seed", synth_seed, "Generator seed");
  CLI::Option* synth_split_seed = synth->add_option("--split-seed", split_seed, "Seed of the train/val/test split");

  CLI::App* train_um = app.add_subcommand("train-user-model", "Train the CWM or SWM user model");
  add_common(train_um);
  std::string model_name;
  train_um->add_option("--model", model_name, "cwm or swm")
      ->required()
      ->check(CLI::IsMember({"cwm", "swm"}));
  int um_epochs = 0;
  std::uint64_t um_seed = 0;
  CLI::Option* um_epochs_opt = train_um->add_option("--epochs", um_epochs, "Maximum epochs");
  CLI::Option* um_seed_opt = train_um->add_option("--seed", um_seed, "Training seed");

  CLI::App* train_ag = app.add_subcommand("train-agent", "Train the action-head DQN agent against the CWM");
  add_common(train_ag);
  std::size_t agent_episodes = 0;
  std::uint64_t agent_seed = 0;
  std::string resume;
  CLI::Option* agent_episodes_opt = train_ag->add_option("--episodes", agent_episodes, "Training episodes");
  CLI::Option* agent_seed_opt = train_ag->add_option("--seed", agent_seed, "Training seed");
  train_ag->add_option("--resume", resume, "Start from the online weights of an agent checkpoint");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate policies against the SWM and write reports");
  add_common(evaluate);
  std::string policy_list;
  std::size_t eval_episodes = 0, eval_replicates = 0;
  std::uint64_t eval_seed = 0;
  int workers = 0;
  CLI::Option* policies_opt =
      evaluate->add_option("--policies", policy_list, "Comma-separated subset of random,cosine,gmpc,agent");
  CLI::Option* eval_episodes_opt = evaluate->add_option("--episodes", eval_episodes, "Test sessions to roll out");
  CLI::Option* eval_replicates_opt = evaluate->add_option("--replicates", eval_replicates, "Bootstrap replicates");
  CLI::Option* eval_seed_opt = evaluate->add_option("--seed", eval_seed, "Evaluation seed");
  evaluate->add_option("--workers", workers, "Worker threads for rollouts and bootstrap (0: all cores)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
    if (!output.empty()) {
      config.output_dir = output;
    } else if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') {
      config.output_dir = env;
    }
    if (ingest_split_seed->count() > 0 || synth_split_seed->count() > 0) config.split_seed = split_seed;
    const OutputLayout layout{config.output_dir};

    if (ingest->parsed()) {
      ingest_args.sessions = sessions_file;
      ingest_args.features = features_file;
      return cmd_ingest(config, layout, ingest_args, out);
    }
    if (synth->parsed()) {
      SyntheticSpec spec = config.synthetic.value_or(SyntheticSpec{});
      if (synth_sessions_opt->count() > 0) spec.num_sessions = synth_sessions;
      if (synth_rho_opt->count() > 0) spec.rho = synth_rho;
      if (synth_seed_opt->count() > 0) spec.seed = synth_seed;
      config.synthetic = spec;
      return cmd_synth(config, layout, out);
    }
    if (train_um->parsed()) {
      TrainConfig& train = model_name == "cwm" ? config.cwm.train : config.swm.train;
      if (um_epochs_opt->count() > 0) train.max_epochs = um_epochs;
      if (um_seed_opt->count() > 0) train.seed = um_seed;
      return cmd_train_user_model(config, layout, model_name, out);
    }
    if (train_ag->parsed()) {
      if (agent_episodes_opt->count() > 0) config.agent.episodes = agent_episodes;
      if (agent_seed_opt->count() > 0) config.agent.seed = agent_seed;
      config.agent.validate();
      return cmd_train_agent(config, layout, resume, out);
    }
    if (evaluate->parsed()) {
      if (policies_opt->count() > 0) config.policies = parse_policy_list(policy_list);
      if (eval_episodes_opt->count() > 0) config.evaluation.episodes = eval_episodes;
      if (eval_replicates_opt->count() > 0) config.evaluation.bootstrap_replicates = eval_replicates;
      if (eval_seed_opt->count() > 0) config.evaluation.seed = eval_seed;
      std::string joined;
      for (const auto& p : config.policies) joined += (joined.empty() ? "" : ",") + p;
      config.policies = parse_policy_list(joined);
      config.evaluation = EvalConfig::from_json(config.evaluation.to_json());
      return cmd_evaluate(config, layout, workers, out);
    }
    return static_cast<int>(ExitCode::kUsage);
  } catch (const Error& e) {
    err << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
    return static_cast<int>(exit_code_for(e.code()));
  } catch (const nlohmann::json::exception& e) {
    err << "error [schema]: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kSchema);
  } catch (const fs::filesystem_error& e) {
    err << "error [io]: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNotFound);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kOther);
  }
}

}  // namespace plrl
