#include "plrl/synthetic.h"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "plrl/error.h"
#include "plrl/rng.h"

namespace plrl {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string padded_id(char prefix, std::size_t value, int width) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%c%0*zu", prefix, width, value);
  return buffer;
}

}  // namespace

void SyntheticSpec::validate() const {
  require(num_sessions > 0, ErrorCode::kInvalidArgument, "synthetic: num_sessions must be positive");
  require(session_length > context_size, ErrorCode::kInvalidArgument,
          "synthetic: session_length must exceed context_size");
  require(num_tracks >= session_length, ErrorCode::kInvalidArgument,
          "synthetic: catalog smaller than a session");
  require(feature_dim > 0 && num_clusters > 0, ErrorCode::kInvalidArgument,
          "synthetic: feature_dim and num_clusters must be positive");
  require(preference_dim >= 1 && preference_dim <= feature_dim, ErrorCode::kInvalidArgument,
          "synthetic: preference_dim must be in [1, feature_dim]");
  require(rho >= 0.0 && rho < 1.0, ErrorCode::kInvalidArgument, "synthetic: rho must be in [0, 1)");
  require(context_affinity >= 0.0 && context_affinity <= 1.0, ErrorCode::kInvalidArgument,
          "synthetic: context_affinity must be in [0, 1]");
  require(cluster_spread >= 0.0 && bias_std >= 0.0 && preference_noise >= 0.0,
          ErrorCode::kInvalidArgument, "synthetic: spreads must be non-negative");
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"num_sessions", num_sessions},   {"session_length", session_length},
          {"context_size", context_size},   {"num_tracks", num_tracks},
          {"feature_dim", feature_dim},     {"num_clusters", num_clusters},
          {"center_scale", center_scale},   {"cluster_spread", cluster_spread},
          {"preference_dim", preference_dim}, {"preference_scale", preference_scale},
          {"preference_noise", preference_noise}, {"context_affinity", context_affinity},
          {"bias_mean", bias_mean},         {"bias_std", bias_std},
          {"rho", rho},                     {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& json) {
  SyntheticSpec s;
  try {
    s.num_sessions = json.value("num_sessions", s.num_sessions);
    s.session_length = json.value("session_length", s.session_length);
    s.context_size = json.value("context_size", s.context_size);
    s.num_tracks = json.value("num_tracks", s.num_tracks);
    s.feature_dim = json.value("feature_dim", s.feature_dim);
    s.num_clusters = json.value("num_clusters", s.num_clusters);
    s.center_scale = json.value("center_scale", s.center_scale);
    s.cluster_spread = json.value("cluster_spread", s.cluster_spread);
    s.preference_dim = json.value("preference_dim", s.feature_dim);
    s.preference_scale = json.value("preference_scale", s.preference_scale);
    s.preference_noise = json.value("preference_noise", s.preference_noise);
    s.context_affinity = json.value("context_affinity", s.context_affinity);
    s.bias_mean = json.value("bias_mean", s.bias_mean);
    s.bias_std = json.value("bias_std", s.bias_std);
    s.rho = json.value("rho", s.rho);
    s.seed = json.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

double SyntheticTruth::base_logit(std::size_t session, const Eigen::VectorXd& features) const {
  const SessionTruth& truth = sessions_.at(session);
  return truth.preference.dot(features) + truth.bias;
}

double SyntheticTruth::p_complete(std::size_t session, const Eigen::VectorXd& features,
                                  double previous) const {
  return sigmoid(base_logit(session, features) + rho_ * previous);
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto dim = static_cast<Eigen::Index>(spec.feature_dim);

  std::vector<Eigen::VectorXd> centers;
  for (std::size_t c = 0; c < spec.num_clusters; ++c) {
    Eigen::VectorXd center(dim);
    for (Eigen::Index k = 0; k < dim; ++k) center(k) = rng.normal();
    centers.push_back(spec.center_scale * center / std::max(center.norm(), 1e-12));
  }

  SyntheticDataset data;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < spec.feature_dim; ++k) names.push_back("feature_" + std::to_string(k));
  data.features = FeatureTable(names);
  std::vector<std::vector<std::size_t>> cluster_members(spec.num_clusters);
  const int id_width = static_cast<int>(std::to_string(spec.num_tracks).size());
  for (std::size_t t = 0; t < spec.num_tracks; ++t) {
    const std::size_t cluster = t % spec.num_clusters;
    Eigen::VectorXd x(dim);
    for (Eigen::Index k = 0; k < dim; ++k) x(k) = centers[cluster](k) + rng.normal(0.0, spec.cluster_spread);
    cluster_members[cluster].push_back(t);
    data.features.insert({padded_id('t', t, id_width), std::move(x)});
  }
  const auto& catalog = data.features.tracks();

  std::vector<SessionTruth> truths;
  const int session_width = static_cast<int>(std::to_string(spec.num_sessions).size());
  for (std::size_t s = 0; s < spec.num_sessions; ++s) {
    const std::size_t preferred = rng.uniform_index(spec.num_clusters);
    SessionTruth truth;
    truth.preference = spec.preference_scale * centers[preferred] / spec.center_scale;
    for (Eigen::Index k = 0; k < dim; ++k) truth.preference(k) += rng.normal(0.0, spec.preference_noise);
    for (Eigen::Index k = static_cast<Eigen::Index>(spec.preference_dim); k < dim; ++k) {
      truth.preference(k) = 0.0;
    }
    truth.bias = rng.normal(spec.bias_mean, spec.bias_std);

    std::vector<std::size_t> chosen;
    std::vector<bool> used(spec.num_tracks, false);
    auto take = [&](const std::vector<std::size_t>& candidates) {
      std::size_t pick;
      do {
        pick = candidates[rng.uniform_index(candidates.size())];
      } while (used[pick]);
      used[pick] = true;
      chosen.push_back(pick);
    };
    std::vector<std::size_t> everything(spec.num_tracks);
    std::iota(everything.begin(), everything.end(), 0);
    for (std::size_t p = 0; p < spec.session_length; ++p) {
      const bool from_preferred = p < spec.context_size && rng.bernoulli(spec.context_affinity) &&
                                  cluster_members[preferred].size() > spec.context_size;
      take(from_preferred ? cluster_members[preferred] : everything);
    }

    SessionRecord session;
    session.session_id = padded_id('s', s, session_width);
    std::vector<double> probabilities;
    double previous = 0.0;
    for (std::size_t p = 0; p < chosen.size(); ++p) {
      const TrackFeatures& track = catalog[chosen[p]];
      const double prob =
          sigmoid(truth.preference.dot(track.features) + truth.bias + spec.rho * previous);
      const bool completed = rng.bernoulli(prob);
      InteractionRecord item;
      item.track_id = track.track_id;
      item.position = static_cast<int>(p) + 1;
      item.completed = completed;
      if (!completed) {
        // Skip markers are nested: a skip before marker 1 is also before 2 and 3.
        item.skip_3 = rng.bernoulli(0.9);
        item.skip_2 = item.skip_3 && rng.bernoulli(0.7);
        item.skip_1 = item.skip_2 && rng.bernoulli(0.6);
      }
      session.items.push_back(std::move(item));
      probabilities.push_back(prob);
      previous = completed ? 1.0 : -1.0;
    }
    data.sessions.push_back(std::move(session));
    data.true_probability.push_back(std::move(probabilities));
    truths.push_back(std::move(truth));
  }
  data.truth = SyntheticTruth(spec.rho, std::move(truths));
  return data;
}

}  // namespace plrl
