#ifndef PLRL_AGENTS_H_
#define PLRL_AGENTS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "plrl/environment.h"
#include "plrl/nn/dense.h"
#include "plrl/nn/optimizer.h"
#include "plrl/rng.h"
#include "plrl/user_model.h"

namespace plrl {

// Fixed-length state summary: [u; mean selected features (0 if none); t/H;
// mean reward so far (0 if none)], with features normalised.
class StateFeaturizer {
 public:
  StateFeaturizer() = default;
  explicit StateFeaturizer(Normalizer normalizer) : normalizer_(std::move(normalizer)) {}

  int feature_dim() const { return static_cast<int>(normalizer_.dim()); }
  int state_dim() const { return 2 * feature_dim() + 2; }

  Eigen::VectorXd state_features(const EnvState& state) const;
  // One normalised column per pool track.
  Eigen::MatrixXd action_features(const EnvState& state) const;
  Eigen::VectorXd action_features(const TrackFeatures& track) const;

  const Normalizer& normalizer() const { return normalizer_; }

 private:
  Normalizer normalizer_;
};

// Action-head Q network: scores one (state, action) pair per forward pass.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(StateFeaturizer featurizer, nn::DenseNet net);

  static QNetwork create(const Normalizer& normalizer, std::span<const int> hidden, Rng& rng);

  int input_dim() const { return featurizer_.state_dim() + featurizer_.feature_dim(); }
  // Q for every action column, each from its own forward pass.
  Eigen::VectorXd score(const Eigen::VectorXd& state_features, const Eigen::MatrixXd& action_features) const;
  // Batched variant for training; columns may differ from score() in the last bits.
  Eigen::VectorXd score_batch(const Eigen::VectorXd& state_features, const Eigen::MatrixXd& action_features) const;

  const StateFeaturizer& featurizer() const { return featurizer_; }
  const nn::DenseNet& net() const { return net_; }
  nn::DenseNet& mutable_net() { return net_; }

  void save(const std::filesystem::path& path) const;
  static QNetwork load(const std::filesystem::path& path);

 private:
  StateFeaturizer featurizer_;
  nn::DenseNet net_;
};

// Throws kInvalidArgument on an empty pool.
Eigen::VectorXd q_values(const QNetwork& net, const EnvState& state);
// Argmax of q_values; ties go to the lowest index.
std::size_t act_greedy(const QNetwork& net, const EnvState& state);
std::size_t argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& values);

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  Eigen::MatrixXd next_actions;  // one column per track left in the next pool
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Transition transition);
  // Uniform with replacement. Throws kInvalidArgument when empty.
  std::vector<const Transition*> sample(std::size_t count, Rng& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

// y = r for terminal transitions, else r + gamma * max_a' Q_target(s', a').
Eigen::VectorXd td_targets(const QNetwork& target, std::span<const Transition* const> batch, double gamma);

struct TdGradient {
  double loss = 0.0;
  nn::ParamGrads grads;
};

// Mean squared TD error of `net` against targets from `target` and its
// gradient with respect to the parameters of `net`.
TdGradient td_gradient(const QNetwork& net, const QNetwork& target, std::span<const Transition* const> batch,
                       double gamma);

// One optimizer step on the mean squared TD error. Returns the batch loss.
// Throws kNumeric when the loss is not finite.
double td_update(QNetwork& net, const QNetwork& target, std::span<const Transition* const> batch,
                 double gamma, nn::OptimizerState& optimizer);

struct AgentConfig {
  double gamma = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.5;  // of all training steps
  int target_period = 50;               // updates between target syncs
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 50000;
  std::size_t warmup = 1000;  // transitions before the first update
  std::vector<int> hidden{128, 64};
  nn::AdamConfig adam;
  std::size_t episodes = 2000;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static AgentConfig from_json(const nlohmann::json& json);
};

double epsilon_at(const AgentConfig& config, std::size_t step, std::size_t total_steps);

struct EpisodeLog {
  std::size_t episode = 0;
  double episode_return = 0.0;
  double epsilon = 0.0;
  double mean_loss = 0.0;  // NaN when no update ran during the episode
  std::size_t updates = 0;
  std::size_t syncs = 0;
};

void write_training_log(const std::filesystem::path& path, std::span<const EpisodeLog> log);

struct TrainEvent {
  enum class Kind { kUpdate, kSync };
  Kind kind = Kind::kUpdate;
  std::size_t updates = 0;
  std::size_t syncs = 0;
};

using TrainObserver = std::function<void(const TrainEvent&, const QNetwork& online, const QNetwork& target)>;

struct AgentFit {
  QNetwork net;
  std::vector<EpisodeLog> log;
  std::size_t updates = 0;
  std::size_t syncs = 0;
};

// Epsilon-greedy training on episodes started from sessions drawn uniformly.
// `initial` resumes from existing online weights; the target starts as a
// copy and optimizer and replay buffer start empty.
AgentFit train_agent(const Environment& env, std::span<const SessionRecord> sessions,
                     const FeatureTable& features, const AgentConfig& config,
                     const std::optional<QNetwork>& initial = std::nullopt,
                     const TrainObserver& observer = {});

// -------------------------------------------------------------- policies

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual std::size_t act(const EnvState& state, Rng& rng) const = 0;
};

std::size_t policy_random(const EnvState& state, Rng& rng);
// Cosine between the context vector and each track's features. Zero-norm
// tracks never win; throws kInvalidArgument when every similarity is undefined.
std::size_t policy_cosine(const EnvState& state);
// Highest predicted reward-head probability; ties to the lowest index.
std::size_t policy_gmpc(const EnvState& state, const ResponseModel& model,
                        ResponseHead head = ResponseHead::kComplete);

class RandomPolicy : public Policy {
 public:
  std::string name() const override { return "random"; }
  std::size_t act(const EnvState& state, Rng& rng) const override { return policy_random(state, rng); }
};

class CosinePolicy : public Policy {
 public:
  std::string name() const override { return "cosine"; }
  std::size_t act(const EnvState& state, Rng&) const override { return policy_cosine(state); }
};

class GmpcPolicy : public Policy {
 public:
  GmpcPolicy(std::shared_ptr<const ResponseModel> model, ResponseHead head = ResponseHead::kComplete);
  std::string name() const override { return "cwm-gmpc"; }
  std::size_t act(const EnvState& state, Rng&) const override { return policy_gmpc(state, *model_, head_); }

 private:
  std::shared_ptr<const ResponseModel> model_;
  ResponseHead head_;
};

class AgentPolicy : public Policy {
 public:
  explicit AgentPolicy(std::shared_ptr<const QNetwork> net, std::string name = "ah-dqn");
  std::string name() const override { return name_; }
  std::size_t act(const EnvState& state, Rng&) const override { return act_greedy(*net_, state); }

 private:
  std::shared_ptr<const QNetwork> net_;
  std::string name_;
};

}  // namespace plrl

#endif  // PLRL_AGENTS_H_
