#include "plrl/environment.h"

#include <algorithm>
#include <functional>
#include <string>
#include <unordered_set>

#include "plrl/error.h"

namespace plrl {

Eigen::MatrixXd ResponseModel::respond_many(const ContextVector& u,
                                            std::span<const Eigen::VectorXd> items) const {
  require(!sequential(), ErrorCode::kUnsupported, "respond_many needs a non-sequential model");
  Eigen::MatrixXd out(3, static_cast<Eigen::Index>(items.size()));
  ResponseState state = begin_episode(u);
  for (std::size_t k = 0; k < items.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = respond(u, items[k], state).as_vector();
  }
  return out;
}

CwmResponse::CwmResponse(std::shared_ptr<const Cwm> model) : model_(std::move(model)) {
  require(model_ != nullptr, ErrorCode::kInvalidArgument, "CwmResponse: null model");
}

UserResponseProbs CwmResponse::respond(const ContextVector& u, const Eigen::VectorXd& item,
                                       ResponseState&) const {
  return model_->predict(u, item);
}

Eigen::MatrixXd CwmResponse::respond_many(const ContextVector& u,
                                          std::span<const Eigen::VectorXd> items) const {
  return model_->predict_many(u, items);
}

SwmResponse::SwmResponse(std::shared_ptr<const Swm> model) : model_(std::move(model)) {
  require(model_ != nullptr, ErrorCode::kInvalidArgument, "SwmResponse: null model");
}

ResponseState SwmResponse::begin_episode(const ContextVector& u) const {
  return {model_->initial_state(u)};
}

UserResponseProbs SwmResponse::respond(const ContextVector&, const Eigen::VectorXd& item,
                                       ResponseState& state) const {
  require(state.swm.has_value(), ErrorCode::kInvalidArgument,
          "SwmResponse: episode state was not started by this model");
  return model_->step(*state.swm, item);
}

EnvConfig EnvConfig::session_mode() { return EnvConfig{}; }

EnvConfig EnvConfig::selection_mode() {
  EnvConfig c;
  c.pool_size = 40;
  c.fill_pool_from_catalog = true;
  return c;
}

void EnvConfig::validate() const {
  require(horizon >= 1 && horizon <= pool_size, ErrorCode::kInvalidArgument,
          "environment: need 1 <= horizon <= pool_size (horizon " + std::to_string(horizon) +
              ", pool_size " + std::to_string(pool_size) + ")");
  require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::kInvalidArgument, "environment: gamma must be in [0, 1]");
}

nlohmann::json EnvConfig::to_json() const {
  return {{"context_size", context_size},
          {"horizon", horizon},
          {"pool_size", pool_size},
          {"reward_head", std::string(head_name(reward_head))},
          {"gamma", gamma},
          {"fill_pool_from_catalog", fill_pool_from_catalog},
          {"shuffle_pool", shuffle_pool}};
}

EnvConfig EnvConfig::from_json(const nlohmann::json& json) {
  EnvConfig c;
  if (json.contains("mode")) {
    const std::string mode = json.at("mode").get<std::string>();
    if (mode == "session") {
      c = session_mode();
    } else if (mode == "selection") {
      c = selection_mode();
    } else {
      fail(ErrorCode::kSchema, "environment: unknown mode '" + mode + "' (expected session or selection)");
    }
  }
  c.context_size = json.value("context_size", c.context_size);
  c.horizon = json.value("horizon", c.horizon);
  c.pool_size = json.value("pool_size", c.pool_size);
  if (json.contains("reward_head")) c.reward_head = head_from_name(json.at("reward_head").get<std::string>());
  c.gamma = json.value("gamma", c.gamma);
  c.fill_pool_from_catalog = json.value("fill_pool_from_catalog", c.fill_pool_from_catalog);
  c.shuffle_pool = json.value("shuffle_pool", c.shuffle_pool);
  c.validate();
  return c;
}

Environment::Environment(EnvConfig config, std::shared_ptr<const ResponseModel> model)
    : config_(config), model_(std::move(model)) {
  config_.validate();
  require(model_ != nullptr, ErrorCode::kInvalidArgument, "environment: null response model");
}

EnvState Environment::reset(const SessionRecord& session, const FeatureTable& features, Rng& rng) const {
  const std::size_t k = config_.context_size;
  const std::size_t n = config_.pool_size;
  const std::size_t length = session.items.size();
  require(length >= k + n || (config_.fill_pool_from_catalog && length >= k), ErrorCode::kInvalidArgument,
          "session '" + session.session_id + "' has " + std::to_string(length) +
              " tracks; need " + std::to_string(k + n) + " for context " + std::to_string(k) +
              " and pool " + std::to_string(n));
  const auto lookup = [&](const std::string& id) -> const TrackFeatures& {
    const TrackFeatures* track = features.find(id);
    require(track != nullptr, ErrorCode::kNotFound,
            "session '" + session.session_id + "' references unknown track '" + id + "'");
    return *track;
  };

  ContextVector context = ContextVector::Zero(static_cast<Eigen::Index>(features.dim()));
  for (std::size_t i = 0; i < k; ++i) context += lookup(session.items[i].track_id).features;
  if (k > 0) context /= static_cast<double>(k);

  std::vector<TrackFeatures> pool;
  std::unordered_set<std::string> used;
  for (std::size_t i = 0; i < length; ++i) used.insert(session.items[i].track_id);
  for (std::size_t i = k; i < std::min(length, k + n); ++i) pool.push_back(lookup(session.items[i].track_id));
  if (pool.size() < n) {
    const auto& catalog = features.tracks();
    require(catalog.size() >= used.size() + (n - pool.size()), ErrorCode::kInvalidArgument,
            "feature table too small to fill a pool of " + std::to_string(n));
    while (pool.size() < n) {
      const TrackFeatures& candidate = catalog[rng.uniform_index(catalog.size())];
      if (used.insert(candidate.track_id).second) pool.push_back(candidate);
    }
  }
  if (config_.shuffle_pool) rng.shuffle(pool.begin(), pool.end());
  return reset(context, std::move(pool));
}

EnvState Environment::reset(const ContextVector& context, std::vector<TrackFeatures> pool) const {
  require(pool.size() == config_.pool_size, ErrorCode::kInvalidArgument,
          "environment: pool has " + std::to_string(pool.size()) + " tracks, expected " +
              std::to_string(config_.pool_size));
  for (const auto& track : pool) {
    require(track.features.size() == context.size(), ErrorCode::kDimensionMismatch,
            "environment: track '" + track.track_id + "' has the wrong feature dimension");
  }
  EnvState state;
  state.context = context;
  state.pool = std::move(pool);
  state.horizon = config_.horizon;
  state.response = model_->begin_episode(state.context);
  return state;
}

StepResult Environment::step(EnvState& state, std::size_t action) const {
  require(!state.done(), ErrorCode::kInvalidArgument, "environment: step after episode end");
  require(action < state.pool.size(), ErrorCode::kOutOfRange,
          "environment: action " + std::to_string(action) + " outside pool of " +
              std::to_string(state.pool.size()));
  TrackFeatures track = std::move(state.pool[action]);
  state.pool.erase(state.pool.begin() + static_cast<std::ptrdiff_t>(action));
  const UserResponseProbs probs = model_->respond(state.context, track.features, state.response);
  const double reward = probs.head(config_.reward_head);
  require(reward >= 0.0 && reward <= 1.0, ErrorCode::kNumeric,
          "environment: user model returned probability " + std::to_string(reward));
  state.selected.push_back({std::move(track), probs, reward});
  ++state.step;
  state.total_return += reward;
  return {reward, probs, state.done()};
}

double Environment::max_theoretical_return(const EnvState& state) const {
  require(!model_->sequential(), ErrorCode::kUnsupported,
          "max_theoretical_return needs a non-sequential user model");
  std::vector<Eigen::VectorXd> items;
  for (const auto& s : state.selected) items.push_back(s.track.features);
  for (const auto& t : state.pool) items.push_back(t.features);
  const Eigen::MatrixXd probs = model_->respond_many(state.context, items);
  std::vector<double> values(items.size());
  const auto head = static_cast<Eigen::Index>(config_.reward_head);
  for (std::size_t i = 0; i < items.size(); ++i) values[i] = probs(head, static_cast<Eigen::Index>(i));
  std::sort(values.begin(), values.end(), std::greater<>());
  double total = 0.0;
  for (std::size_t i = 0; i < std::min(state.horizon, values.size()); ++i) total += values[i];
  return total;
}

}  // namespace plrl
