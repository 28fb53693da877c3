#ifndef PLRL_SYNTHETIC_H_
#define PLRL_SYNTHETIC_H_

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "plrl/domain.h"

namespace plrl {

// Generator for sessions with a known response mechanism.
//
// Tracks are drawn from Gaussian clusters. Each session has a latent
// preference vector w and bias b; the first `context_size` tracks lean
// towards the session's preferred cluster so the context mean carries
// information about w. The completion probability of the track at
// position t is
//
//   p_t = sigmoid(w . x_t + b + rho * z_{t-1}),
//
// where z_{t-1} = +1 if the previous track was completed, -1 if not, and
// 0 for the first track of a session.
struct SyntheticSpec {
  std::size_t num_sessions = 1000;
  std::size_t session_length = 20;
  std::size_t context_size = 5;
  std::size_t num_tracks = 2000;
  std::size_t feature_dim = 8;
  std::size_t num_clusters = 8;
  double center_scale = 1.5;
  double cluster_spread = 0.6;
  std::size_t preference_dim = 8;  // w is zero beyond this many coordinates
  double preference_scale = 1.5;
  double preference_noise = 0.4;
  double context_affinity = 0.8;  // chance a context track comes from the preferred cluster
  double bias_mean = 0.0;
  double bias_std = 0.5;
  double rho = 0.0;  // sequential coefficient, in [0, 1)
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& json);
};

struct SessionTruth {
  Eigen::VectorXd preference;
  double bias = 0.0;
};

class SyntheticTruth {
 public:
  SyntheticTruth() = default;
  SyntheticTruth(double rho, std::vector<SessionTruth> sessions)
      : rho_(rho), sessions_(std::move(sessions)) {}

  // previous: +1 completed, -1 not completed, 0 no previous track.
  double p_complete(std::size_t session, const Eigen::VectorXd& features, double previous) const;
  double base_logit(std::size_t session, const Eigen::VectorXd& features) const;
  double rho() const { return rho_; }
  const std::vector<SessionTruth>& sessions() const { return sessions_; }

 private:
  double rho_ = 0.0;
  std::vector<SessionTruth> sessions_;
};

struct SyntheticDataset {
  std::vector<SessionRecord> sessions;
  FeatureTable features;
  SyntheticTruth truth;
  // True completion probability each logged interaction was sampled from.
  std::vector<std::vector<double>> true_probability;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace plrl

#endif  // PLRL_SYNTHETIC_H_
