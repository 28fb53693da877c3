#ifndef PLRL_USER_MODEL_H_
#define PLRL_USER_MODEL_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "plrl/domain.h"
#include "plrl/nn/dense.h"
#include "plrl/nn/optimizer.h"
#include "plrl/nn/recurrent.h"

namespace plrl {

// Per-feature z-score statistics, fitted on the training split and stored
// with every checkpoint that consumes raw features.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Normalizer identity(Eigen::Index dim);
  // Columns with (near) zero spread keep scale 1.
  static Normalizer fit(std::span<const Eigen::VectorXd> samples);

  Eigen::Index dim() const { return mean.size(); }
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& raw) const;

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& json);
};

struct TrainingExample {
  std::string session_id;
  ContextVector context;               // mean raw features of the context tracks
  std::vector<Eigen::VectorXd> items;  // raw features of the labelled tracks, in order
  std::vector<ResponseLabels> labels;
};

struct ExampleSet {
  std::vector<TrainingExample> examples;
  std::size_t unknown_track_sessions = 0;  // skipped, warning logged
  std::size_t too_short_sessions = 0;      // no labelled items after the context
};

// Context = mean features of the first `context_size` tracks (zero vector
// when context_size is 0); items = the remaining tracks with derived labels.
ExampleSet build_examples(std::span<const SessionRecord> sessions, const FeatureTable& features,
                          std::size_t context_size);

// Normalizer fitted on every track (context and labelled) of the examples.
Normalizer fit_normalizer(std::span<const TrainingExample> examples);

struct TrainConfig {
  int batch_size = 64;
  int max_epochs = 40;
  int patience = 5;  // epochs without validation improvement
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
};

using HeadLosses = std::array<double, kNumHeads>;

inline double total_loss(const HeadLosses& losses) {
  return losses[0] + losses[1] + losses[2];
}

struct EpochMetrics {
  int epoch = 0;
  HeadLosses train{};
  HeadLosses validation{};
};

struct TrainingHistory {
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;
  HeadLosses best_validation{};
};

// Delimited text: epoch, per-head and total train/validation BCE.
void write_metrics_log(const std::filesystem::path& path, const TrainingHistory& history);

// Non-sequential model p(y_t | i_t, u): dense body over [u; i_t] ending in
// three sigmoid heads (complete, skip, listen_tau).
class Cwm {
 public:
  Cwm() = default;
  Cwm(Normalizer normalizer, nn::DenseNet body);

  static Cwm create(int feature_dim, std::span<const int> hidden, Normalizer normalizer, Rng& rng);

  int feature_dim() const { return static_cast<int>(normalizer_.dim()); }
  int context_dim() const { return feature_dim(); }

  // Throws kDimensionMismatch when u or item has the wrong length.
  UserResponseProbs predict(const ContextVector& u, const Eigen::VectorXd& item) const;
  // One column of probabilities per item, all sharing the context u.
  Eigen::MatrixXd predict_many(const ContextVector& u, std::span<const Eigen::VectorXd> items) const;
  // Model input for (u, item): [normalised u; normalised item].
  Eigen::VectorXd encode(const ContextVector& u, const Eigen::VectorXd& item) const;

  const Normalizer& normalizer() const { return normalizer_; }
  const nn::DenseNet& body() const { return body_; }
  nn::DenseNet& mutable_body() { return body_; }

  void save(const std::filesystem::path& path) const;
  static Cwm load(const std::filesystem::path& path);

 private:
  Normalizer normalizer_;
  nn::DenseNet body_;
};

struct CwmConfig {
  std::vector<int> hidden{64, 32};
  TrainConfig train;
};

struct CwmFit {
  Cwm model;
  TrainingHistory history;
};

// Throws kInvalidArgument on empty inputs and kNumeric if the loss diverges.
CwmFit train_cwm(std::span<const TrainingExample> train, std::span<const TrainingExample> validation,
                 const CwmConfig& config);

UserResponseProbs predict_cwm(const Cwm& model, const ContextVector& u, const Eigen::VectorXd& item);

// Recurrent state of one SWM rollout, owned by the caller.
struct SwmState {
  ContextVector context;
  nn::RecurrentState recurrent;
  Eigen::Vector3d last_prediction = Eigen::Vector3d::Zero();
  int steps = 0;
};

// Sequential model p(y_t | y_<t, i_<=t, u): stacked LSTM over per-step
// inputs [i_t; y_{t-1}; u] with three sigmoid heads per step. y_{-1} = 0.
class Swm {
 public:
  Swm() = default;
  Swm(Normalizer normalizer, nn::RecurrentNet net);

  static Swm create(int feature_dim, std::span<const int> hidden, Normalizer normalizer, Rng& rng);

  int feature_dim() const { return static_cast<int>(normalizer_.dim()); }
  int input_dim() const { return 2 * feature_dim() + 3; }

  SwmState initial_state(const ContextVector& u) const;
  // Advances the state with an explicit previous-response encoding.
  UserResponseProbs step(SwmState& state, const Eigen::VectorXd& item,
                         const Eigen::Vector3d& previous_response) const;
  // Advances the state feeding back the previous step's predicted probabilities.
  UserResponseProbs step(SwmState& state, const Eigen::VectorXd& item) const;

  // Whole-sequence prediction. With labels, previous responses are the
  // observed labels (teacher forcing); without, the model's own predictions.
  std::vector<UserResponseProbs> predict_sequence(const ContextVector& u,
                                                  std::span<const Eigen::VectorXd> items,
                                                  std::span<const ResponseLabels> labels = {}) const;

  Eigen::VectorXd encode_step(const ContextVector& u, const Eigen::VectorXd& item,
                              const Eigen::Vector3d& previous_response) const;

  const Normalizer& normalizer() const { return normalizer_; }
  const nn::RecurrentNet& net() const { return net_; }
  nn::RecurrentNet& mutable_net() { return net_; }

  void save(const std::filesystem::path& path) const;
  static Swm load(const std::filesystem::path& path);

 private:
  Normalizer normalizer_;
  nn::RecurrentNet net_;
};

struct SwmConfig {
  std::vector<int> hidden{64, 32};
  TrainConfig train;
};

struct SwmFit {
  Swm model;
  TrainingHistory history;
};

SwmFit train_swm(std::span<const TrainingExample> train, std::span<const TrainingExample> validation,
                 const SwmConfig& config);

std::pair<UserResponseProbs, SwmState> predict_swm_step(const Swm& model, const SwmState& state,
                                                        const Eigen::VectorXd& item,
                                                        const Eigen::Vector3d& previous_response);

// Mean per-head BCE on held-out examples.
HeadLosses evaluate_cwm(const Cwm& model, std::span<const TrainingExample> examples);
// Teacher-forced: every step conditions on the observed previous labels.
HeadLosses evaluate_swm(const Swm& model, std::span<const TrainingExample> examples);

}  // namespace plrl

#endif  // PLRL_USER_MODEL_H_
