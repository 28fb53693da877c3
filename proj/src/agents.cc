#include "plrl/agents.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "plrl/error.h"
#include "plrl/log.h"
#include "plrl/nn/checkpoint.h"
#include "plrl/nn/loss.h"

namespace plrl {

Eigen::VectorXd StateFeaturizer::state_features(const EnvState& state) const {
  const int f = feature_dim();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(state_dim());
  out.head(f) = normalizer_.apply(state.context);
  if (!state.selected.empty()) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(f);
    double reward = 0.0;
    for (const auto& s : state.selected) {
      mean += normalizer_.apply(s.track.features);
      reward += s.reward;
    }
    const auto n = static_cast<double>(state.selected.size());
    out.segment(f, f) = mean / n;
    out(2 * f + 1) = reward / n;
  }
  out(2 * f) = state.horizon == 0 ? 0.0 : static_cast<double>(state.step) / static_cast<double>(state.horizon);
  return out;
}

Eigen::MatrixXd StateFeaturizer::action_features(const EnvState& state) const {
  Eigen::MatrixXd out(feature_dim(), static_cast<Eigen::Index>(state.pool.size()));
  for (std::size_t k = 0; k < state.pool.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = normalizer_.apply(state.pool[k].features);
  }
  return out;
}

Eigen::VectorXd StateFeaturizer::action_features(const TrackFeatures& track) const {
  return normalizer_.apply(track.features);
}

QNetwork::QNetwork(StateFeaturizer featurizer, nn::DenseNet net)
    : featurizer_(std::move(featurizer)), net_(std::move(net)) {
  require(net_.input_dim() == input_dim() && net_.output_dim() == 1, ErrorCode::kDimensionMismatch,
          "Q network must map " + std::to_string(input_dim()) + " inputs to one value");
}

QNetwork QNetwork::create(const Normalizer& normalizer, std::span<const int> hidden, Rng& rng) {
  StateFeaturizer featurizer(normalizer);
  std::vector<int> widths(hidden.begin(), hidden.end());
  std::vector<nn::Activation> acts(widths.size(), nn::Activation::kRelu);
  widths.push_back(1);
  acts.push_back(nn::Activation::kIdentity);
  const int input = featurizer.state_dim() + featurizer.feature_dim();
  return QNetwork(std::move(featurizer), nn::DenseNet::random(input, widths, acts, rng));
}

namespace {

Eigen::MatrixXd pair_inputs(const Eigen::VectorXd& state, const Eigen::MatrixXd& actions) {
  Eigen::MatrixXd x(state.size() + actions.rows(), actions.cols());
  x.topRows(state.size()) = state.replicate(1, actions.cols());
  x.bottomRows(actions.rows()) = actions;
  return x;
}

}  // namespace

Eigen::VectorXd QNetwork::score(const Eigen::VectorXd& state_features,
                                const Eigen::MatrixXd& action_features) const {
  require(state_features.size() == featurizer_.state_dim() && action_features.rows() == featurizer_.feature_dim(),
          ErrorCode::kDimensionMismatch, "Q network: feature dimension mismatch");
  Eigen::VectorXd q(action_features.cols());
  Eigen::VectorXd x(input_dim());
  x.head(state_features.size()) = state_features;
  for (Eigen::Index a = 0; a < action_features.cols(); ++a) {
    x.tail(action_features.rows()) = action_features.col(a);
    q(a) = net_.forward(x)(0, 0);
  }
  return q;
}

Eigen::VectorXd QNetwork::score_batch(const Eigen::VectorXd& state_features,
                                      const Eigen::MatrixXd& action_features) const {
  require(state_features.size() == featurizer_.state_dim() && action_features.rows() == featurizer_.feature_dim(),
          ErrorCode::kDimensionMismatch, "Q network: feature dimension mismatch");
  return net_.forward(pair_inputs(state_features, action_features)).row(0).transpose();
}

void QNetwork::save(const std::filesystem::path& path) const {
  nn::write_checkpoint(path,
                       {{"kind", "qnet"},
                        {"normalizer", featurizer_.normalizer().to_json()},
                        {"net", net_.descriptor()}},
                       net_.parameters());
}

QNetwork QNetwork::load(const std::filesystem::path& path) {
  const nn::Checkpoint checkpoint = nn::read_checkpoint(path);
  require(checkpoint.descriptor.value("kind", "") == "qnet", ErrorCode::kCorrupt,
          "'" + path.string() + "' is not a Q-network checkpoint");
  try {
    nn::DenseNet net = nn::DenseNet::from_descriptor(checkpoint.descriptor.at("net"));
    nn::assign_parameters(checkpoint, net.parameters());
    return QNetwork(StateFeaturizer(Normalizer::from_json(checkpoint.descriptor.at("normalizer"))),
                    std::move(net));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("malformed Q-network descriptor: ") + e.what());
  }
}

Eigen::VectorXd q_values(const QNetwork& net, const EnvState& state) {
  require(!state.pool.empty(), ErrorCode::kInvalidArgument, "q_values: empty pool");
  const StateFeaturizer& f = net.featurizer();
  return net.score(f.state_features(state), f.action_features(state));
}

std::size_t argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& values) {
  require(values.size() > 0, ErrorCode::kInvalidArgument, "argmax of an empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < values.size(); ++k) {
    if (values(k) > values(best)) best = k;
  }
  return static_cast<std::size_t>(best);
}

std::size_t act_greedy(const QNetwork& net, const EnvState& state) {
  return argmax_lowest(q_values(net, state));
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity > 0, ErrorCode::kInvalidArgument, "replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::add(Transition transition) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(transition));
  } else {
    items_[next_] = std::move(transition);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  require(!items_.empty(), ErrorCode::kInvalidArgument, "sample from an empty replay buffer");
  std::vector<const Transition*> out(count);
  for (auto& t : out) t = &items_[rng.uniform_index(items_.size())];
  return out;
}

Eigen::VectorXd td_targets(const QNetwork& target, std::span<const Transition* const> batch, double gamma) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  Eigen::Index pairs = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    y(static_cast<Eigen::Index>(i)) = t.reward;
    if (t.done) continue;
    require(t.next_actions.cols() > 0, ErrorCode::kInvalidArgument, "non-terminal transition without next actions");
    require(t.next_state.size() == target.featurizer().state_dim() &&
                t.next_actions.rows() == target.featurizer().feature_dim(),
            ErrorCode::kDimensionMismatch, "Q network: feature dimension mismatch");
    pairs += t.next_actions.cols();
  }
  if (gamma == 0.0 || pairs == 0) return y;

  const int sd = target.featurizer().state_dim();
  Eigen::MatrixXd x(target.input_dim(), pairs);
  Eigen::Index col = 0;
  for (const Transition* t : batch) {
    if (t->done) continue;
    const Eigen::Index n = t->next_actions.cols();
    x.block(0, col, sd, n) = t->next_state.replicate(1, n);
    x.block(sd, col, t->next_actions.rows(), n) = t->next_actions;
    col += n;
  }
  const Eigen::MatrixXd q = target.net().forward(x);
  col = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    if (t.done) continue;
    const Eigen::Index n = t.next_actions.cols();
    y(static_cast<Eigen::Index>(i)) += gamma * q.row(0).segment(col, n).maxCoeff();
    col += n;
  }
  return y;
}

TdGradient td_gradient(const QNetwork& net, const QNetwork& target, std::span<const Transition* const> batch,
                       double gamma) {
  require(!batch.empty(), ErrorCode::kInvalidArgument, "td_update: empty batch");
  require(net.net().same_architecture(target.net()), ErrorCode::kDimensionMismatch,
          "td_update: target network architecture differs");
  const Eigen::VectorXd y = td_targets(target, batch, gamma);
  Eigen::MatrixXd x(net.input_dim(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    x.col(col).head(batch[i]->state.size()) = batch[i]->state;
    x.col(col).tail(batch[i]->action.size()) = batch[i]->action;
  }
  nn::DenseCache cache;
  const Eigen::MatrixXd q = net.net().forward(x, cache);
  TdGradient out;
  out.loss = nn::mse_loss(q, y.transpose());
  require(std::isfinite(out.loss), ErrorCode::kNumeric, "td_update: TD loss is " + std::to_string(out.loss));
  out.grads = net.net().backward(cache, nn::mse_gradient(q, y.transpose())).params;
  return out;
}

double td_update(QNetwork& net, const QNetwork& target, std::span<const Transition* const> batch,
                 double gamma, nn::OptimizerState& optimizer) {
  const TdGradient g = td_gradient(net, target, batch, gamma);
  nn::optimizer_step(net.mutable_net().parameters(), g.grads, optimizer);
  return g.loss;
}

void AgentConfig::validate() const {
  require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::kInvalidArgument, "agent: gamma must be in [0, 1]");
  require(target_period >= 1, ErrorCode::kInvalidArgument, "agent: target_period must be >= 1");
  require(batch_size >= 1 && buffer_capacity >= 1, ErrorCode::kInvalidArgument,
          "agent: batch_size and buffer_capacity must be positive");
  require(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0,
          ErrorCode::kInvalidArgument, "agent: epsilon values must be in [0, 1]");
  require(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0, ErrorCode::kInvalidArgument,
          "agent: epsilon_decay_fraction must be in [0, 1]");
}

nlohmann::json AgentConfig::to_json() const {
  return {{"gamma", gamma},
          {"epsilon_start", epsilon_start},
          {"epsilon_end", epsilon_end},
          {"epsilon_decay_fraction", epsilon_decay_fraction},
          {"target_period", target_period},
          {"batch_size", batch_size},
          {"buffer_capacity", buffer_capacity},
          {"warmup", warmup},
          {"hidden", hidden},
          {"learning_rate", adam.learning_rate},
          {"clip_norm", adam.clip_norm},
          {"episodes", episodes},
          {"seed", seed}};
}

AgentConfig AgentConfig::from_json(const nlohmann::json& json) {
  AgentConfig c;
  c.gamma = json.value("gamma", c.gamma);
  c.epsilon_start = json.value("epsilon_start", c.epsilon_start);
  c.epsilon_end = json.value("epsilon_end", c.epsilon_end);
  c.epsilon_decay_fraction = json.value("epsilon_decay_fraction", c.epsilon_decay_fraction);
  c.target_period = json.value("target_period", c.target_period);
  c.batch_size = json.value("batch_size", c.batch_size);
  c.buffer_capacity = json.value("buffer_capacity", c.buffer_capacity);
  c.warmup = json.value("warmup", c.warmup);
  c.hidden = json.value("hidden", c.hidden);
  c.adam.learning_rate = json.value("learning_rate", c.adam.learning_rate);
  c.adam.clip_norm = json.value("clip_norm", c.adam.clip_norm);
  c.episodes = json.value("episodes", c.episodes);
  c.seed = json.value("seed", c.seed);
  c.validate();
  return c;
}

double epsilon_at(const AgentConfig& config, std::size_t step, std::size_t total_steps) {
  const double decay_steps = config.epsilon_decay_fraction * static_cast<double>(total_steps);
  if (decay_steps <= 0.0) return config.epsilon_end;
  const double frac = static_cast<double>(step) / decay_steps;
  if (frac >= 1.0) return config.epsilon_end;
  return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpisodeLog> log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write training log '" + path.string() + "'");
  out << "episode,return,epsilon,loss,updates,target_syncs\n";
  out.precision(8);
  for (const auto& e : log) {
    out << e.episode << ',' << e.episode_return << ',' << e.epsilon << ',';
    if (!std::isnan(e.mean_loss)) out << e.mean_loss;
    out << ',' << e.updates << ',' << e.syncs << '\n';
  }
}

AgentFit train_agent(const Environment& env, std::span<const SessionRecord> sessions,
                     const FeatureTable& features, const AgentConfig& config,
                     const std::optional<QNetwork>& initial, const TrainObserver& observer) {
  config.validate();
  Rng rng(config.seed);
  AgentFit fit;
  if (initial.has_value()) {
    require(initial->featurizer().feature_dim() == static_cast<int>(features.dim()), ErrorCode::kDimensionMismatch,
            "resumed Q network expects " + std::to_string(initial->featurizer().feature_dim()) + " features");
    fit.net = *initial;
  } else {
    std::vector<Eigen::VectorXd> catalog;
    for (const auto& t : features.tracks()) catalog.push_back(t.features);
    fit.net = QNetwork::create(Normalizer::fit(catalog), config.hidden, rng);
  }
  if (config.episodes == 0) return fit;
  require(!sessions.empty(), ErrorCode::kInvalidArgument, "train_agent: no sessions");

  QNetwork target = fit.net;
  ReplayBuffer buffer(config.buffer_capacity);
  nn::OptimizerState optimizer(config.adam);
  const StateFeaturizer& featurizer = fit.net.featurizer();
  const std::size_t total_steps = config.episodes * env.config().horizon;
  std::size_t steps = 0;

  for (std::size_t episode = 0; episode < config.episodes; ++episode) {
    const SessionRecord& session = sessions[rng.uniform_index(sessions.size())];
    EnvState state = env.reset(session, features, rng);
    Eigen::VectorXd s = featurizer.state_features(state);
    Eigen::MatrixXd actions = featurizer.action_features(state);
    double loss_sum = 0.0;
    std::size_t losses = 0;
    double epsilon = 0.0;
    while (!state.done()) {
      epsilon = epsilon_at(config, steps, total_steps);
      std::size_t action;
      if (rng.uniform() < epsilon) {
        action = rng.uniform_index(state.pool.size());
      } else {
        action = argmax_lowest(fit.net.score(s, actions));
      }
      const StepResult result = env.step(state, action);
      Transition t;
      t.state = s;
      t.action = actions.col(static_cast<Eigen::Index>(action));
      t.reward = result.reward;
      t.next_state = featurizer.state_features(state);
      t.next_actions = featurizer.action_features(state);
      t.done = result.done;
      s = t.next_state;
      actions = t.next_actions;
      buffer.add(std::move(t));
      ++steps;

      if (buffer.size() >= std::max<std::size_t>(config.warmup, 1)) {
        const auto batch = buffer.sample(config.batch_size, rng);
        loss_sum += td_update(fit.net, target, batch, config.gamma, optimizer);
        ++losses;
        ++fit.updates;
        if (observer) observer({TrainEvent::Kind::kUpdate, fit.updates, fit.syncs}, fit.net, target);
        if (fit.updates % static_cast<std::size_t>(config.target_period) == 0) {
          nn::copy_params(fit.net.net(), target.mutable_net());
          ++fit.syncs;
          if (observer) observer({TrainEvent::Kind::kSync, fit.updates, fit.syncs}, fit.net, target);
        }
      }
    }
    fit.log.push_back({episode + 1, state.total_return, epsilon,
                       losses == 0 ? std::numeric_limits<double>::quiet_NaN() : loss_sum / static_cast<double>(losses),
                       fit.updates, fit.syncs});
    if ((episode + 1) % 100 == 0) {
      log_info("agent episode " + std::to_string(episode + 1) + " return " + std::to_string(state.total_return) +
               " epsilon " + std::to_string(epsilon));
    }
  }
  return fit;
}

std::size_t policy_random(const EnvState& state, Rng& rng) {
  require(!state.pool.empty(), ErrorCode::kInvalidArgument, "policy_random: empty pool");
  return rng.uniform_index(state.pool.size());
}

std::size_t policy_cosine(const EnvState& state) {
  require(!state.pool.empty(), ErrorCode::kInvalidArgument, "policy_cosine: empty pool");
  const double user_norm = state.context.norm();
  Eigen::VectorXd sims(static_cast<Eigen::Index>(state.pool.size()));
  bool any = false;
  for (std::size_t k = 0; k < state.pool.size(); ++k) {
    const double norm = state.pool[k].features.norm();
    double sim = -std::numeric_limits<double>::infinity();
    if (norm > 0.0 && user_norm > 0.0) {
      sim = state.context.dot(state.pool[k].features) / (user_norm * norm);
      any = true;
    }
    sims(static_cast<Eigen::Index>(k)) = sim;
  }
  require(any, ErrorCode::kInvalidArgument, "policy_cosine: every embedding has zero norm");
  return argmax_lowest(sims);
}

std::size_t policy_gmpc(const EnvState& state, const ResponseModel& model, ResponseHead head) {
  require(!state.pool.empty(), ErrorCode::kInvalidArgument, "policy_gmpc: empty pool");
  require(!model.sequential(), ErrorCode::kUnsupported, "policy_gmpc needs a non-sequential user model");
  ResponseState scratch = model.begin_episode(state.context);
  Eigen::VectorXd p(static_cast<Eigen::Index>(state.pool.size()));
  for (std::size_t k = 0; k < state.pool.size(); ++k) {
    p(static_cast<Eigen::Index>(k)) = model.respond(state.context, state.pool[k].features, scratch).head(head);
  }
  return argmax_lowest(p);
}

GmpcPolicy::GmpcPolicy(std::shared_ptr<const ResponseModel> model, ResponseHead head)
    : model_(std::move(model)), head_(head) {
  require(model_ != nullptr && !model_->sequential(), ErrorCode::kUnsupported,
          "GMPC needs a non-sequential user model");
}

AgentPolicy::AgentPolicy(std::shared_ptr<const QNetwork> net, std::string name)
    : net_(std::move(net)), name_(std::move(name)) {
  require(net_ != nullptr, ErrorCode::kInvalidArgument, "AgentPolicy: null network");
}

}  // namespace plrl
