#include "plrl/user_model.h"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "plrl/error.h"
#include "plrl/log.h"
#include "plrl/nn/checkpoint.h"
#include "plrl/nn/loss.h"
#include "plrl/rng.h"

namespace plrl {
namespace {

constexpr double kMinScale = 1e-8;
constexpr double kImprovement = 1e-6;

std::string format_losses(const HeadLosses& l) {
  std::ostringstream out;
  out << "complete=" << l[0] << " skip=" << l[1] << " listen_tau=" << l[2];
  return out.str();
}

void check_finite(const HeadLosses& losses, int epoch, const char* model, const char* split) {
  for (double v : losses) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::kNumeric, std::string(model) + " training diverged at epoch " +
                                    std::to_string(epoch) + " (" + split + " loss " +
                                    format_losses(losses) + ")");
    }
  }
}

Eigen::MatrixXd label_column(const ResponseLabels& labels) {
  const auto a = labels.as_array();
  return Eigen::Vector3d(a[0], a[1], a[2]);
}

// Early-stopping bookkeeping shared by both trainers.
template <class Net>
class BestTracker {
 public:
  explicit BestTracker(int patience) : patience_(patience) {}

  // Returns true when training should stop.
  bool update(const EpochMetrics& metrics, const Net& net, TrainingHistory& history) {
    const double val = total_loss(metrics.validation);
    if (history.epochs.size() == 1 || val < best_ - kImprovement) {
      best_ = val;
      best_net_ = net;
      history.best_epoch = metrics.epoch;
      history.best_validation = metrics.validation;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }

  const Net& best() const { return best_net_; }

 private:
  int patience_;
  int stale_ = 0;
  double best_ = 0.0;
  Net best_net_;
};

void check_train_config(const TrainConfig& cfg) {
  require(cfg.batch_size > 0 && cfg.max_epochs > 0 && cfg.patience > 0,
          ErrorCode::kInvalidArgument, "training config needs positive batch size, epochs, patience");
}

}  // namespace

Normalizer Normalizer::identity(Eigen::Index dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Normalizer Normalizer::fit(std::span<const Eigen::VectorXd> samples) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "Normalizer::fit: no samples");
  const Eigen::Index dim = samples.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  for (const auto& s : samples) var += (s - mean).cwiseAbs2();
  var /= static_cast<double>(samples.size());
  Eigen::VectorXd scale = var.cwiseSqrt();
  for (Eigen::Index k = 0; k < dim; ++k) {
    if (scale(k) < kMinScale) scale(k) = 1.0;
  }
  return {mean, scale};
}

Eigen::VectorXd Normalizer::apply(const Eigen::Ref<const Eigen::VectorXd>& raw) const {
  require(raw.size() == mean.size(), ErrorCode::kDimensionMismatch,
          "Normalizer: expected " + std::to_string(mean.size()) + " features, got " +
              std::to_string(raw.size()));
  return (raw - mean).cwiseQuotient(scale);
}

nlohmann::json Normalizer::to_json() const {
  return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())}};
}

Normalizer Normalizer::from_json(const nlohmann::json& json) {
  const auto m = json.at("mean").get<std::vector<double>>();
  const auto s = json.at("scale").get<std::vector<double>>();
  require(m.size() == s.size(), ErrorCode::kCorrupt, "normalizer mean/scale length mismatch");
  Normalizer n;
  n.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  n.scale = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  return n;
}

ExampleSet build_examples(std::span<const SessionRecord> sessions, const FeatureTable& features,
                          std::size_t context_size) {
  ExampleSet set;
  const auto dim = static_cast<Eigen::Index>(features.dim());
  for (const SessionRecord& session : sessions) {
    if (session.items.size() <= context_size) {
      ++set.too_short_sessions;
      continue;
    }
    std::vector<const TrackFeatures*> tracks;
    bool known = true;
    for (const auto& item : session.items) {
      const TrackFeatures* track = features.find(item.track_id);
      if (track == nullptr) {
        log_warning("session '" + session.session_id + "' references unknown track '" +
                    item.track_id + "'; skipped");
        known = false;
        break;
      }
      tracks.push_back(track);
    }
    if (!known) {
      ++set.unknown_track_sessions;
      continue;
    }
    TrainingExample example;
    example.session_id = session.session_id;
    example.context = Eigen::VectorXd::Zero(dim);
    for (std::size_t k = 0; k < context_size; ++k) example.context += tracks[k]->features;
    if (context_size > 0) example.context /= static_cast<double>(context_size);
    for (std::size_t k = context_size; k < tracks.size(); ++k) {
      example.items.push_back(tracks[k]->features);
      example.labels.push_back(derive_labels(session.items[k]));
    }
    set.examples.push_back(std::move(example));
  }
  return set;
}

Normalizer fit_normalizer(std::span<const TrainingExample> examples) {
  std::vector<Eigen::VectorXd> samples;
  for (const auto& e : examples) {
    for (const auto& item : e.items) samples.push_back(item);
  }
  return Normalizer::fit(samples);
}

void write_metrics_log(const std::filesystem::path& path, const TrainingHistory& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write metrics log '" + path.string() + "'");
  out << "epoch,train_complete,train_skip,train_listen_tau,train_total,"
         "val_complete,val_skip,val_listen_tau,val_total\n";
  out.precision(8);
  for (const auto& m : history.epochs) {
    out << m.epoch;
    for (double v : m.train) out << ',' << v;
    out << ',' << total_loss(m.train);
    for (double v : m.validation) out << ',' << v;
    out << ',' << total_loss(m.validation) << '\n';
  }
}

// ---------------------------------------------------------------- CWM

Cwm::Cwm(Normalizer normalizer, nn::DenseNet body)
    : normalizer_(std::move(normalizer)), body_(std::move(body)) {
  require(body_.input_dim() == 2 * normalizer_.dim() && body_.output_dim() == 3,
          ErrorCode::kDimensionMismatch, "CWM body must map 2F inputs to 3 heads");
}

Cwm Cwm::create(int feature_dim, std::span<const int> hidden, Normalizer normalizer, Rng& rng) {
  require(normalizer.dim() == feature_dim, ErrorCode::kDimensionMismatch,
          "CWM normalizer dimension mismatch");
  std::vector<int> widths(hidden.begin(), hidden.end());
  std::vector<nn::Activation> acts(widths.size(), nn::Activation::kRelu);
  widths.push_back(3);
  acts.push_back(nn::Activation::kSigmoid);
  return Cwm(std::move(normalizer), nn::DenseNet::random(2 * feature_dim, widths, acts, rng));
}

Eigen::VectorXd Cwm::encode(const ContextVector& u, const Eigen::VectorXd& item) const {
  require(u.size() == context_dim() && item.size() == feature_dim(), ErrorCode::kDimensionMismatch,
          "CWM expects context and item of dimension " + std::to_string(feature_dim()));
  Eigen::VectorXd x(2 * feature_dim());
  x << normalizer_.apply(u), normalizer_.apply(item);
  return x;
}

UserResponseProbs Cwm::predict(const ContextVector& u, const Eigen::VectorXd& item) const {
  const Eigen::MatrixXd out = body_.forward(encode(u, item));
  return UserResponseProbs::from_vector(out.col(0));
}

Eigen::MatrixXd Cwm::predict_many(const ContextVector& u, std::span<const Eigen::VectorXd> items) const {
  Eigen::MatrixXd x(2 * feature_dim(), static_cast<Eigen::Index>(items.size()));
  for (std::size_t k = 0; k < items.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = encode(u, items[k]);
  return body_.forward(x);
}

void Cwm::save(const std::filesystem::path& path) const {
  nn::write_checkpoint(path,
                       {{"kind", "cwm"},
                        {"feature_dim", feature_dim()},
                        {"normalizer", normalizer_.to_json()},
                        {"net", body_.descriptor()}},
                       body_.parameters());
}

Cwm Cwm::load(const std::filesystem::path& path) {
  const nn::Checkpoint checkpoint = nn::read_checkpoint(path);
  require(checkpoint.descriptor.value("kind", "") == "cwm", ErrorCode::kCorrupt,
          "'" + path.string() + "' is not a CWM checkpoint");
  try {
    nn::DenseNet body = nn::DenseNet::from_descriptor(checkpoint.descriptor.at("net"));
    nn::assign_parameters(checkpoint, body.parameters());
    return Cwm(Normalizer::from_json(checkpoint.descriptor.at("normalizer")), std::move(body));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("malformed CWM descriptor: ") + e.what());
  }
}

UserResponseProbs predict_cwm(const Cwm& model, const ContextVector& u, const Eigen::VectorXd& item) {
  return model.predict(u, item);
}

namespace {

struct FlatData {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd labels;
};

FlatData flatten_examples(const Cwm& model, std::span<const TrainingExample> examples) {
  std::size_t n = 0;
  for (const auto& e : examples) n += e.items.size();
  FlatData data{Eigen::MatrixXd(2 * model.feature_dim(), static_cast<Eigen::Index>(n)),
                Eigen::MatrixXd(3, static_cast<Eigen::Index>(n))};
  Eigen::Index col = 0;
  for (const auto& e : examples) {
    require(e.items.size() == e.labels.size(), ErrorCode::kInvalidArgument,
            "training example has mismatched items and labels");
    for (std::size_t k = 0; k < e.items.size(); ++k, ++col) {
      data.inputs.col(col) = model.encode(e.context, e.items[k]);
      data.labels.col(col) = label_column(e.labels[k]);
    }
  }
  return data;
}

HeadLosses head_losses(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
  HeadLosses losses{};
  for (int h = 0; h < 3; ++h) losses[h] = nn::bce_loss(p.row(h), y.row(h));
  return losses;
}

HeadLosses evaluate_flat(const nn::DenseNet& body, const FlatData& data) {
  require(data.inputs.cols() > 0, ErrorCode::kInvalidArgument, "no examples to evaluate");
  return head_losses(body.forward(data.inputs), data.labels);
}

}  // namespace

HeadLosses evaluate_cwm(const Cwm& model, std::span<const TrainingExample> examples) {
  return evaluate_flat(model.body(), flatten_examples(model, examples));
}

CwmFit train_cwm(std::span<const TrainingExample> train, std::span<const TrainingExample> validation,
                 const CwmConfig& config) {
  require(!train.empty() && !validation.empty(), ErrorCode::kInvalidArgument,
          "train_cwm needs non-empty train and validation sets");
  check_train_config(config.train);
  Rng rng(config.train.seed);
  const Normalizer normalizer = fit_normalizer(train);
  Cwm model = Cwm::create(static_cast<int>(normalizer.dim()), config.hidden, normalizer, rng);
  const FlatData train_data = flatten_examples(model, train);
  const FlatData val_data = flatten_examples(model, validation);
  const Eigen::Index n = train_data.inputs.cols();
  require(n > 0 && val_data.inputs.cols() > 0, ErrorCode::kInvalidArgument,
          "train_cwm: examples contain no labelled items");

  nn::OptimizerState optimizer(config.train.adam);
  TrainingHistory history;
  BestTracker<nn::DenseNet> tracker(config.train.patience);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index batch = config.train.batch_size;

  for (int epoch = 1; epoch <= config.train.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    HeadLosses train_sum{};
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index size = std::min(batch, n - start);
      Eigen::MatrixXd x(train_data.inputs.rows(), size), y(3, size);
      for (Eigen::Index j = 0; j < size; ++j) {
        x.col(j) = train_data.inputs.col(order[static_cast<std::size_t>(start + j)]);
        y.col(j) = train_data.labels.col(order[static_cast<std::size_t>(start + j)]);
      }
      nn::DenseCache cache;
      const Eigen::MatrixXd p = model.mutable_body().forward(x, cache);
      Eigen::MatrixXd upstream(3, size);
      for (int h = 0; h < 3; ++h) {
        train_sum[h] += nn::bce_loss(p.row(h), y.row(h)) * static_cast<double>(size);
        upstream.row(h) = nn::bce_gradient(p.row(h), y.row(h));
      }
      const nn::DenseBackward grads = model.body().backward(cache, upstream);
      nn::optimizer_step(model.mutable_body().parameters(), grads.params, optimizer);
    }
    EpochMetrics metrics;
    metrics.epoch = epoch;
    for (int h = 0; h < 3; ++h) metrics.train[h] = train_sum[h] / static_cast<double>(n);
    check_finite(metrics.train, epoch, "CWM", "train");
    metrics.validation = evaluate_flat(model.body(), val_data);
    check_finite(metrics.validation, epoch, "CWM", "validation");
    history.epochs.push_back(metrics);
    log_info("cwm epoch " + std::to_string(epoch) + " val " + format_losses(metrics.validation));
    if (tracker.update(metrics, model.body(), history)) break;
  }
  return {Cwm(normalizer, tracker.best()), std::move(history)};
}

// ---------------------------------------------------------------- SWM

Swm::Swm(Normalizer normalizer, nn::RecurrentNet net)
    : normalizer_(std::move(normalizer)), net_(std::move(net)) {
  require(net_.input_dim() == input_dim() && net_.output_dim() == 3, ErrorCode::kDimensionMismatch,
          "SWM network must map 2F+3 inputs to 3 heads");
}

Swm Swm::create(int feature_dim, std::span<const int> hidden, Normalizer normalizer, Rng& rng) {
  require(normalizer.dim() == feature_dim, ErrorCode::kDimensionMismatch,
          "SWM normalizer dimension mismatch");
  const std::array<int, 1> widths{3};
  const std::array<nn::Activation, 1> acts{nn::Activation::kSigmoid};
  return Swm(std::move(normalizer),
             nn::RecurrentNet::random(2 * feature_dim + 3, hidden, widths, acts, rng));
}

Eigen::VectorXd Swm::encode_step(const ContextVector& u, const Eigen::VectorXd& item,
                                 const Eigen::Vector3d& previous_response) const {
  require(u.size() == feature_dim() && item.size() == feature_dim(), ErrorCode::kDimensionMismatch,
          "SWM expects context and item of dimension " + std::to_string(feature_dim()));
  Eigen::VectorXd x(input_dim());
  x << normalizer_.apply(item), previous_response, normalizer_.apply(u);
  return x;
}

SwmState Swm::initial_state(const ContextVector& u) const {
  require(u.size() == feature_dim(), ErrorCode::kDimensionMismatch, "SWM context dimension mismatch");
  return {u, net_.initial_state(1), Eigen::Vector3d::Zero(), 0};
}

UserResponseProbs Swm::step(SwmState& state, const Eigen::VectorXd& item,
                            const Eigen::Vector3d& previous_response) const {
  const Eigen::MatrixXd out = net_.step(state.recurrent, encode_step(state.context, item, previous_response));
  state.last_prediction = out.col(0);
  ++state.steps;
  return UserResponseProbs::from_vector(out.col(0));
}

UserResponseProbs Swm::step(SwmState& state, const Eigen::VectorXd& item) const {
  const Eigen::Vector3d previous = state.last_prediction;
  return step(state, item, previous);
}

std::vector<UserResponseProbs> Swm::predict_sequence(const ContextVector& u,
                                                     std::span<const Eigen::VectorXd> items,
                                                     std::span<const ResponseLabels> labels) const {
  require(!items.empty(), ErrorCode::kInvalidArgument, "SWM: empty item sequence");
  require(labels.empty() || labels.size() == items.size(), ErrorCode::kDimensionMismatch,
          "SWM: labels and items differ in length");
  SwmState state = initial_state(u);
  std::vector<UserResponseProbs> out;
  for (std::size_t t = 0; t < items.size(); ++t) {
    if (labels.empty()) {
      out.push_back(step(state, items[t]));
    } else {
      const Eigen::Vector3d previous =
          t == 0 ? Eigen::Vector3d::Zero() : Eigen::Vector3d(label_column(labels[t - 1]));
      out.push_back(step(state, items[t], previous));
    }
  }
  return out;
}

void Swm::save(const std::filesystem::path& path) const {
  nn::write_checkpoint(path,
                       {{"kind", "swm"},
                        {"feature_dim", feature_dim()},
                        {"normalizer", normalizer_.to_json()},
                        {"net", net_.descriptor()}},
                       net_.parameters());
}

Swm Swm::load(const std::filesystem::path& path) {
  const nn::Checkpoint checkpoint = nn::read_checkpoint(path);
  require(checkpoint.descriptor.value("kind", "") == "swm", ErrorCode::kCorrupt,
          "'" + path.string() + "' is not an SWM checkpoint");
  try {
    nn::RecurrentNet net = nn::RecurrentNet::from_descriptor(checkpoint.descriptor.at("net"));
    nn::assign_parameters(checkpoint, net.parameters());
    return Swm(Normalizer::from_json(checkpoint.descriptor.at("normalizer")), std::move(net));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("malformed SWM descriptor: ") + e.what());
  }
}

std::pair<UserResponseProbs, SwmState> predict_swm_step(const Swm& model, const SwmState& state,
                                                        const Eigen::VectorXd& item,
                                                        const Eigen::Vector3d& previous_response) {
  SwmState next = state;
  const UserResponseProbs probs = model.step(next, item, previous_response);
  return {probs, std::move(next)};
}

namespace {

// Teacher-forced, padded batch of sequences.
struct SequenceBatch {
  std::vector<Eigen::MatrixXd> inputs;  // [t] input_dim x B
  std::vector<Eigen::MatrixXd> labels;  // [t] 3 x B
  std::vector<Eigen::MatrixXd> mask;    // [t] 3 x B, 1 where the step exists
};

SequenceBatch make_batch(const Swm& model, std::span<const TrainingExample> examples,
                         std::span<const std::size_t> indices) {
  std::size_t steps = 0;
  for (std::size_t i : indices) steps = std::max(steps, examples[i].items.size());
  const auto batch = static_cast<Eigen::Index>(indices.size());
  SequenceBatch out;
  for (std::size_t t = 0; t < steps; ++t) {
    out.inputs.push_back(Eigen::MatrixXd::Zero(model.input_dim(), batch));
    out.labels.push_back(Eigen::MatrixXd::Zero(3, batch));
    out.mask.push_back(Eigen::MatrixXd::Zero(3, batch));
  }
  for (Eigen::Index b = 0; b < batch; ++b) {
    const TrainingExample& e = examples[indices[static_cast<std::size_t>(b)]];
    require(e.items.size() == e.labels.size(), ErrorCode::kInvalidArgument,
            "training example has mismatched items and labels");
    Eigen::Vector3d previous = Eigen::Vector3d::Zero();
    for (std::size_t t = 0; t < e.items.size(); ++t) {
      out.inputs[t].col(b) = model.encode_step(e.context, e.items[t], previous);
      out.labels[t].col(b) = label_column(e.labels[t]);
      out.mask[t].col(b).setOnes();
      previous = out.labels[t].col(b);
    }
  }
  return out;
}

// Per-head masked BCE over all steps; fills dL/d(output_t) when requested.
HeadLosses sequence_losses(const std::vector<Eigen::MatrixXd>& outputs, const SequenceBatch& batch,
                           std::vector<Eigen::MatrixXd>* upstream) {
  const std::size_t steps = outputs.size();
  const Eigen::Index b = outputs.front().cols();
  Eigen::MatrixXd p(3, static_cast<Eigen::Index>(steps) * b), y(p.rows(), p.cols()), w(p.rows(), p.cols());
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::Index offset = static_cast<Eigen::Index>(t) * b;
    p.middleCols(offset, b) = outputs[t];
    y.middleCols(offset, b) = batch.labels[t];
    w.middleCols(offset, b) = batch.mask[t];
  }
  HeadLosses losses{};
  Eigen::MatrixXd grad(p.rows(), p.cols());
  for (int h = 0; h < 3; ++h) {
    losses[h] = nn::bce_loss(p.row(h), y.row(h), w.row(h));
    if (upstream != nullptr) grad.row(h) = nn::bce_gradient(p.row(h), y.row(h), w.row(h));
  }
  if (upstream != nullptr) {
    upstream->clear();
    for (std::size_t t = 0; t < steps; ++t) {
      upstream->push_back(grad.middleCols(static_cast<Eigen::Index>(t) * b, b));
    }
  }
  return losses;
}

HeadLosses evaluate_sequences(const Swm& model, std::span<const TrainingExample> examples) {
  require(!examples.empty(), ErrorCode::kInvalidArgument, "no examples to evaluate");
  constexpr std::size_t kChunk = 256;
  HeadLosses sum{};
  double weight = 0.0;
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    indices.clear();
    for (std::size_t i = start; i < std::min(examples.size(), start + kChunk); ++i) indices.push_back(i);
    const SequenceBatch batch = make_batch(model, examples, indices);
    const auto outputs = model.net().forward(batch.inputs);
    const HeadLosses losses = sequence_losses(outputs, batch, nullptr);
    double count = 0.0;
    for (const auto& m : batch.mask) count += m.row(0).sum();
    for (int h = 0; h < 3; ++h) sum[h] += losses[h] * count;
    weight += count;
  }
  for (double& v : sum) v /= weight;
  return sum;
}

}  // namespace

HeadLosses evaluate_swm(const Swm& model, std::span<const TrainingExample> examples) {
  return evaluate_sequences(model, examples);
}

SwmFit train_swm(std::span<const TrainingExample> train, std::span<const TrainingExample> validation,
                 const SwmConfig& config) {
  require(!train.empty() && !validation.empty(), ErrorCode::kInvalidArgument,
          "train_swm needs non-empty train and validation sets");
  check_train_config(config.train);
  Rng rng(config.train.seed);
  const Normalizer normalizer = fit_normalizer(train);
  Swm model = Swm::create(static_cast<int>(normalizer.dim()), config.hidden, normalizer, rng);

  nn::OptimizerState optimizer(config.train.adam);
  TrainingHistory history;
  BestTracker<nn::RecurrentNet> tracker(config.train.patience);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_size = static_cast<std::size_t>(config.train.batch_size);

  for (int epoch = 1; epoch <= config.train.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    HeadLosses train_sum{};
    double train_weight = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::span<const std::size_t> indices(order.data() + start,
                                                 std::min(batch_size, order.size() - start));
      const SequenceBatch batch = make_batch(model, train, indices);
      nn::RecurrentCache cache;
      const auto outputs = model.mutable_net().forward(batch.inputs, cache);
      std::vector<Eigen::MatrixXd> upstream;
      const HeadLosses losses = sequence_losses(outputs, batch, &upstream);
      double count = 0.0;
      for (const auto& m : batch.mask) count += m.row(0).sum();
      for (int h = 0; h < 3; ++h) train_sum[h] += losses[h] * count;
      train_weight += count;
      const nn::RecurrentBackward grads = model.net().backward(cache, upstream);
      nn::optimizer_step(model.mutable_net().parameters(), grads.params, optimizer);
    }
    EpochMetrics metrics;
    metrics.epoch = epoch;
    for (int h = 0; h < 3; ++h) metrics.train[h] = train_sum[h] / train_weight;
    check_finite(metrics.train, epoch, "SWM", "train");
    metrics.validation = evaluate_sequences(model, validation);
    check_finite(metrics.validation, epoch, "SWM", "validation");
    history.epochs.push_back(metrics);
    log_info("swm epoch " + std::to_string(epoch) + " val " + format_losses(metrics.validation));
    if (tracker.update(metrics, model.net(), history)) break;
  }
  return {Swm(normalizer, tracker.best()), std::move(history)};
}

}  // namespace plrl
