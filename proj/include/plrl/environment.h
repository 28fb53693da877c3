#ifndef PLRL_ENVIRONMENT_H_
#define PLRL_ENVIRONMENT_H_

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "plrl/domain.h"
#include "plrl/rng.h"
#include "plrl/user_model.h"

namespace plrl {

// Per-episode state a response model may carry between steps.
struct ResponseState {
  std::optional<SwmState> swm;
};

// Source of simulated user responses. Implementations are immutable after
// construction and shared read-only between rollouts.
class ResponseModel {
 public:
  virtual ~ResponseModel() = default;

  // True when a response depends on earlier steps of the episode.
  virtual bool sequential() const = 0;
  virtual ResponseState begin_episode(const ContextVector& u) const = 0;
  virtual UserResponseProbs respond(const ContextVector& u, const Eigen::VectorXd& item,
                                    ResponseState& state) const = 0;
  // One column per item. Only valid for non-sequential models.
  virtual Eigen::MatrixXd respond_many(const ContextVector& u,
                                       std::span<const Eigen::VectorXd> items) const;
};

class CwmResponse : public ResponseModel {
 public:
  explicit CwmResponse(std::shared_ptr<const Cwm> model);
  bool sequential() const override { return false; }
  ResponseState begin_episode(const ContextVector&) const override { return {}; }
  UserResponseProbs respond(const ContextVector& u, const Eigen::VectorXd& item,
                            ResponseState& state) const override;
  Eigen::MatrixXd respond_many(const ContextVector& u,
                               std::span<const Eigen::VectorXd> items) const override;
  const Cwm& model() const { return *model_; }

 private:
  std::shared_ptr<const Cwm> model_;
};

// Stateful SWM rollout feeding back its own predicted probabilities.
class SwmResponse : public ResponseModel {
 public:
  explicit SwmResponse(std::shared_ptr<const Swm> model);
  bool sequential() const override { return true; }
  ResponseState begin_episode(const ContextVector& u) const override;
  UserResponseProbs respond(const ContextVector& u, const Eigen::VectorXd& item,
                            ResponseState& state) const override;
  const Swm& model() const { return *model_; }

 private:
  std::shared_ptr<const Swm> model_;
};

// Same probabilities for every track; `sequential` only changes how the
// environment treats it.
class ConstantResponse : public ResponseModel {
 public:
  explicit ConstantResponse(UserResponseProbs probs, bool sequential = false)
      : probs_(probs), sequential_(sequential) {}
  bool sequential() const override { return sequential_; }
  ResponseState begin_episode(const ContextVector&) const override { return {}; }
  UserResponseProbs respond(const ContextVector&, const Eigen::VectorXd&, ResponseState&) const override {
    return probs_;
  }

 private:
  UserResponseProbs probs_;
  bool sequential_;
};

// Non-sequential model backed by an arbitrary function of (u, item).
class FunctionResponse : public ResponseModel {
 public:
  using Fn = std::function<UserResponseProbs(const ContextVector&, const Eigen::VectorXd&)>;
  explicit FunctionResponse(Fn fn) : fn_(std::move(fn)) {}
  bool sequential() const override { return false; }
  ResponseState begin_episode(const ContextVector&) const override { return {}; }
  UserResponseProbs respond(const ContextVector& u, const Eigen::VectorXd& item,
                            ResponseState&) const override {
    return fn_(u, item);
  }

 private:
  Fn fn_;
};

struct EnvConfig {
  std::size_t context_size = 5;
  std::size_t horizon = 15;
  std::size_t pool_size = 15;
  ResponseHead reward_head = ResponseHead::kComplete;
  double gamma = 0.95;
  // Pad pools of short sessions with distinct catalog tracks drawn from the
  // episode rng instead of failing.
  bool fill_pool_from_catalog = false;
  bool shuffle_pool = false;

  static EnvConfig session_mode();    // K=5, N=15, H=15
  static EnvConfig selection_mode();  // K=5, N=40, H=15, catalog fill

  void validate() const;
  nlohmann::json to_json() const;
  static EnvConfig from_json(const nlohmann::json& json);
};

struct SelectedTrack {
  TrackFeatures track;
  UserResponseProbs probs;
  double reward = 0.0;
};

struct EnvState {
  ContextVector context;
  std::vector<SelectedTrack> selected;
  std::vector<TrackFeatures> pool;
  std::size_t step = 0;
  std::size_t horizon = 0;
  double total_return = 0.0;
  ResponseState response;

  bool done() const { return step >= horizon; }
};

struct StepResult {
  double reward = 0.0;
  UserResponseProbs probs;
  bool done = false;
};

class Environment {
 public:
  Environment(EnvConfig config, std::shared_ptr<const ResponseModel> model);

  const EnvConfig& config() const { return config_; }
  const ResponseModel& model() const { return *model_; }

  // Context from the first K tracks, pool from the next N. Throws
  // kInvalidArgument for a session that is too short (unless catalog fill is
  // enabled) and kNotFound for a track missing from the feature table.
  EnvState reset(const SessionRecord& session, const FeatureTable& features, Rng& rng) const;
  // Episode over an explicit context and pool; the pool must hold N tracks.
  EnvState reset(const ContextVector& context, std::vector<TrackFeatures> pool) const;

  // Moves pool[action] to the selection and scores it. Throws kOutOfRange for
  // a bad index and kInvalidArgument once the episode is done.
  StepResult step(EnvState& state, std::size_t action) const;

  // Sum of the H largest reward-head probabilities over the state's initial
  // pool (selection plus remaining pool). kUnsupported for sequential models.
  double max_theoretical_return(const EnvState& state) const;

 private:
  EnvConfig config_;
  std::shared_ptr<const ResponseModel> model_;
};

}  // namespace plrl

#endif  // PLRL_ENVIRONMENT_H_
