#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "plrl/error.h"
#include "plrl/nn/checkpoint.h"
#include "plrl/rng.h"
#include "plrl/synthetic.h"
#include "plrl/user_model.h"

namespace plrl {
namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "plrl_user_model";
  std::filesystem::create_directories(dir);
  return dir / name;
}

FeatureTable small_table(int dim, int count, Rng& rng) {
  FeatureTable table(std::vector<std::string>{});
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd x(dim);
    for (int j = 0; j < dim; ++j) x(j) = rng.normal(0.0, 1.0);
    table.insert({"t" + std::to_string(k), x});
  }
  return table;
}

SessionRecord make_session(const std::string& id, const std::vector<std::string>& tracks) {
  SessionRecord s{id, {}};
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const bool done = k % 2 == 0;
    s.items.push_back({tracks[k], static_cast<int>(k + 1), !done, !done, !done, done});
  }
  return s;
}

// Sessions whose responses are independent given (u, item): every session
// shares the cluster-derived preference and the context always comes from
// the preferred cluster, so the context identifies the session completely.
SyntheticSpec identifiable_spec(double rho, std::uint64_t seed, std::size_t sessions) {
  SyntheticSpec spec;
  spec.num_sessions = sessions;
  spec.num_tracks = 1500;
  spec.preference_noise = 0.0;
  spec.bias_std = 0.0;
  spec.context_affinity = 1.0;
  spec.rho = rho;
  spec.seed = seed;
  return spec;
}

struct Split {
  std::vector<TrainingExample> train, validation, test;
};

Split split_examples(std::vector<TrainingExample> all) {
  Split s;
  const std::size_t n = all.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n * 7 / 10) {
      s.train.push_back(std::move(all[i]));
    } else if (i < n * 85 / 100) {
      s.validation.push_back(std::move(all[i]));
    } else {
      s.test.push_back(std::move(all[i]));
    }
  }
  return s;
}

Split synthetic_split(const SyntheticDataset& data, std::size_t context) {
  return split_examples(build_examples(data.sessions, data.features, context).examples);
}

TEST(BuildExamples, SessionOfTwentyGivesFifteenItems) {
  Rng rng(1);
  const FeatureTable table = small_table(3, 20, rng);
  std::vector<std::string> ids;
  for (int k = 0; k < 20; ++k) ids.push_back("t" + std::to_string(k));
  const std::vector<SessionRecord> sessions{make_session("s", ids)};
  const ExampleSet set = build_examples(sessions, table, 5);
  ASSERT_EQ(set.examples.size(), 1u);
  const TrainingExample& e = set.examples[0];
  EXPECT_EQ(e.items.size(), 15u);
  EXPECT_EQ(e.labels.size(), 15u);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (int k = 0; k < 5; ++k) mean += table.at("t" + std::to_string(k)).features;
  mean /= 5.0;
  EXPECT_LT((e.context - mean).norm(), 1e-12);
  EXPECT_EQ(e.items[0], table.at("t5").features);
  EXPECT_EQ(e.labels[0].as_array(), derive_labels(sessions[0].items[5]).as_array());
}

TEST(BuildExamples, SessionOfContextLengthIsRejected) {
  Rng rng(2);
  const FeatureTable table = small_table(2, 5, rng);
  const std::vector<SessionRecord> sessions{make_session("s", {"t0", "t1", "t2", "t3", "t4"})};
  const ExampleSet set = build_examples(sessions, table, 5);
  EXPECT_TRUE(set.examples.empty());
  EXPECT_EQ(set.too_short_sessions, 1u);
}

TEST(BuildExamples, UnknownTrackExcludesSessionAndCounts) {
  Rng rng(3);
  const FeatureTable table = small_table(2, 4, rng);
  const std::vector<SessionRecord> sessions{make_session("a", {"t0", "t1", "t2"}),
                                            make_session("b", {"t0", "zz", "t2"})};
  const ExampleSet set = build_examples(sessions, table, 1);
  ASSERT_EQ(set.examples.size(), 1u);
  EXPECT_EQ(set.examples[0].session_id, "a");
  EXPECT_EQ(set.unknown_track_sessions, 1u);
}

TEST(BuildExamples, ZeroContextGivesZeroVector) {
  Rng rng(4);
  const FeatureTable table = small_table(3, 3, rng);
  const std::vector<SessionRecord> sessions{make_session("a", {"t0", "t1"})};
  const ExampleSet set = build_examples(sessions, table, 0);
  ASSERT_EQ(set.examples.size(), 1u);
  EXPECT_EQ(set.examples[0].context, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(set.examples[0].items.size(), 2u);
}

TEST(NormalizerTest, StandardisesAndKeepsConstantColumns) {
  const std::vector<Eigen::VectorXd> samples{Eigen::Vector2d(1.0, 4.0), Eigen::Vector2d(3.0, 4.0)};
  const Normalizer n = Normalizer::fit(samples);
  EXPECT_DOUBLE_EQ(n.mean(0), 2.0);
  EXPECT_DOUBLE_EQ(n.scale(0), 1.0);
  EXPECT_DOUBLE_EQ(n.scale(1), 1.0);
  EXPECT_EQ(n.apply(Eigen::Vector2d(3.0, 5.0)), Eigen::Vector2d(1.0, 1.0));
  const Normalizer back = Normalizer::from_json(n.to_json());
  EXPECT_EQ(back.mean, n.mean);
  EXPECT_EQ(back.scale, n.scale);
  EXPECT_THROW(n.apply(Eigen::Vector3d::Zero()), Error);
}

Cwm random_cwm(int dim, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<int> hidden{16, 8};
  return Cwm::create(dim, hidden, Normalizer::identity(dim), rng);
}

TEST(CwmPredict, OutputsAreProbabilities) {
  const Cwm model = random_cwm(4, 5);
  Rng rng(6);
  for (int k = 0; k < 1000; ++k) {
    Eigen::VectorXd u(4), i(4);
    for (int j = 0; j < 4; ++j) {
      u(j) = rng.normal(0.0, 3.0);
      i(j) = rng.normal(0.0, 3.0);
    }
    const Eigen::Vector3d p = model.predict(u, i).as_vector();
    ASSERT_TRUE((p.array() >= 0.0).all() && (p.array() <= 1.0).all());
  }
}

TEST(CwmPredict, DimensionMismatchThrows) {
  const Cwm model = random_cwm(4, 7);
  try {
    model.predict(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  EXPECT_THROW(model.predict(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(5)), Error);
}

TEST(CwmPredict, DuplicatesAndPoolContentsDoNotMatter) {
  const Cwm model = random_cwm(3, 8);
  Rng rng(9);
  const Eigen::VectorXd u = Eigen::Vector3d(0.2, -1.0, 0.5);
  std::vector<Eigen::VectorXd> pool;
  for (int k = 0; k < 6; ++k) pool.push_back(Eigen::Vector3d(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)));
  pool.push_back(pool[2]);
  const Eigen::MatrixXd all = model.predict_many(u, pool);
  EXPECT_EQ(all.col(2), all.col(6));
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const std::vector<Eigen::VectorXd> alone{pool[k]};
    EXPECT_LT((model.predict_many(u, alone).col(0) - all.col(static_cast<Eigen::Index>(k))).norm(), 1e-15);
    EXPECT_EQ(model.predict(u, pool[k]).as_vector(), model.predict(u, pool[k]).as_vector());
  }
}

TEST(CwmTrain, ReachesBayesLossOnKnownPreference) {
  SyntheticSpec spec;
  spec.num_sessions = 3000;
  spec.num_clusters = 1;
  spec.preference_noise = 0.0;
  spec.bias_std = 0.0;
  spec.seed = 11;
  const SyntheticDataset data = generate_synthetic(spec);
  const Split split = synthetic_split(data, spec.context_size);
  CwmConfig config;
  config.train.seed = 12;
  const CwmFit fit = train_cwm(split.train, split.validation, config);

  // Oracle: BCE of the generator's own probabilities on the held-out items.
  double bayes = 0.0;
  std::size_t count = 0;
  for (std::size_t s = data.sessions.size() * 85 / 100; s < data.sessions.size(); ++s) {
    for (std::size_t t = spec.context_size; t < spec.session_length; ++t) {
      const double p = data.true_probability[s][t];
      const bool y = data.sessions[s].items[t].completed;
      bayes -= y ? std::log(p) : std::log(1.0 - p);
      ++count;
    }
  }
  bayes /= static_cast<double>(count);
  const HeadLosses test = evaluate_cwm(fit.model, split.test);
  EXPECT_LT(std::abs(test[0] - bayes), 0.02) << "model " << test[0] << " bayes " << bayes;
  EXPECT_GE(fit.history.best_epoch, 1);
  EXPECT_FALSE(fit.history.epochs.empty());
}

TEST(CwmTrain, AllCompletedLabelsGiveHighProbability) {
  Rng rng(13);
  std::vector<TrainingExample> examples;
  for (int s = 0; s < 60; ++s) {
    TrainingExample e;
    e.context = Eigen::Vector2d(rng.normal(0, 1), rng.normal(0, 1));
    for (int t = 0; t < 10; ++t) {
      e.items.push_back(Eigen::Vector2d(rng.normal(0, 1), rng.normal(0, 1)));
      e.labels.push_back({true, false, true});
    }
    examples.push_back(e);
  }
  const std::span<const TrainingExample> all(examples);
  const CwmFit fit = train_cwm(all.first(50), all.subspan(50), CwmConfig{});
  for (int k = 0; k < 200; ++k) {
    const Eigen::Vector2d u(rng.normal(0, 1), rng.normal(0, 1));
    const Eigen::Vector2d i(rng.normal(0, 1), rng.normal(0, 1));
    ASSERT_GE(fit.model.predict(u, i).p_complete, 0.95);
  }
}

TEST(CwmTrain, ShuffledItemOrderGivesIdenticalPredictions) {
  const SyntheticDataset data = generate_synthetic(identifiable_spec(0.0, 14, 200));
  const Split split = synthetic_split(data, 5);
  CwmConfig config;
  config.train.max_epochs = 3;
  const CwmFit fit = train_cwm(split.train, split.validation, config);
  Rng rng(15);
  for (const TrainingExample& e : split.test) {
    std::vector<std::size_t> perm(e.items.size());
    for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
    rng.shuffle(perm.begin(), perm.end());
    std::vector<Eigen::VectorXd> shuffled;
    for (std::size_t k : perm) shuffled.push_back(e.items[k]);
    const Eigen::MatrixXd a = fit.model.predict_many(e.context, e.items);
    const Eigen::MatrixXd b = fit.model.predict_many(e.context, shuffled);
    for (std::size_t k = 0; k < perm.size(); ++k) {
      ASSERT_LT((a.col(static_cast<Eigen::Index>(perm[k])) - b.col(static_cast<Eigen::Index>(k))).norm(),
                1e-12);
    }
  }
}

TEST(CwmTrain, DivergenceRaisesNumericError) {
  const SyntheticDataset data = generate_synthetic(identifiable_spec(0.0, 16, 100));
  const Split split = synthetic_split(data, 5);
  CwmConfig config;
  config.train.adam.learning_rate = std::nan("");
  try {
    train_cwm(split.train, split.validation, config);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
  }
}

TEST(CwmTrain, EmptyInputsRejected) {
  const std::vector<TrainingExample> none;
  EXPECT_THROW(train_cwm(none, none, CwmConfig{}), Error);
  EXPECT_THROW(train_swm(none, none, SwmConfig{}), Error);
}

TEST(CwmCheckpoint, RoundTripPredictsIdentically) {
  Cwm model = random_cwm(3, 17);
  nn::round_to_stored_precision(model.mutable_body().parameters());
  const auto path = temp_file("cwm.ckpt");
  model.save(path);
  const Cwm back = Cwm::load(path);
  const Eigen::Vector3d u(0.1, 0.2, 0.3), i(-1.0, 0.0, 2.0);
  EXPECT_EQ(back.predict(u, i).as_vector(), model.predict(u, i).as_vector());
  EXPECT_THROW(Swm::load(path), Error);
}

Swm random_swm(int dim, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<int> hidden{12, 6};
  return Swm::create(dim, hidden, Normalizer::identity(dim), rng);
}

std::vector<Eigen::VectorXd> random_items(int dim, int count, Rng& rng) {
  std::vector<Eigen::VectorXd> items;
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd x(dim);
    for (int j = 0; j < dim; ++j) x(j) = rng.normal(0.0, 1.0);
    items.push_back(x);
  }
  return items;
}

TEST(SwmPredict, StepwiseEqualsFullSequence) {
  const Swm model = random_swm(3, 18);
  Rng rng(19);
  const Eigen::VectorXd u = random_items(3, 1, rng)[0];
  const auto items = random_items(3, 8, rng);
  std::vector<ResponseLabels> labels;
  for (int t = 0; t < 8; ++t) labels.push_back({t % 3 == 0, t % 2 == 0, t % 4 != 0});

  const auto full = model.predict_sequence(u, items, labels);
  SwmState state = model.initial_state(u);
  Eigen::Vector3d previous = Eigen::Vector3d::Zero();
  for (int t = 0; t < 8; ++t) {
    const auto [probs, next] = predict_swm_step(model, state, items[t], previous);
    EXPECT_LT((probs.as_vector() - full[t].as_vector()).norm(), 1e-14);
    state = next;
    const auto a = labels[t].as_array();
    previous = Eigen::Vector3d(a[0], a[1], a[2]);
  }

  const auto free_running = model.predict_sequence(u, items);
  SwmState s2 = model.initial_state(u);
  for (int t = 0; t < 8; ++t) {
    const Eigen::Vector3d p = model.step(s2, items[t]).as_vector();
    EXPECT_LT((p - free_running[t].as_vector()).norm(), 1e-14);
  }
}

TEST(SwmPredict, FutureItemsDoNotAffectEarlierSteps) {
  const Swm model = random_swm(4, 20);
  Rng rng(21);
  const Eigen::VectorXd u = random_items(4, 1, rng)[0];
  auto items = random_items(4, 6, rng);
  const auto before = model.predict_sequence(u, items);
  items[4] = random_items(4, 1, rng)[0];
  items[5] *= -3.0;
  const auto after = model.predict_sequence(u, items);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(before[t].as_vector(), after[t].as_vector());
  EXPECT_NE(before[4].as_vector(), after[4].as_vector());
}

TEST(SwmPredict, MismatchedStateThrows) {
  const Swm a = random_swm(3, 22);
  Rng rng(23);
  const std::vector<int> hidden{5};
  const Swm b = Swm::create(3, hidden, Normalizer::identity(3), rng);
  SwmState state = b.initial_state(Eigen::Vector3d::Zero());
  EXPECT_THROW(a.step(state, Eigen::Vector3d::Zero()), Error);
  SwmState ok = a.initial_state(Eigen::Vector3d::Zero());
  EXPECT_THROW(a.step(ok, Eigen::Vector2d::Zero()), Error);
}

TEST(SwmTrain, SingleStepSequences) {
  Rng rng(24);
  std::vector<TrainingExample> examples;
  for (int s = 0; s < 40; ++s) {
    TrainingExample e;
    e.context = random_items(2, 1, rng)[0];
    e.items = random_items(2, 1, rng);
    e.labels = {{s % 2 == 0, s % 2 == 1, s % 3 == 0}};
    examples.push_back(e);
  }
  const std::span<const TrainingExample> all(examples);
  SwmConfig config;
  config.train.max_epochs = 3;
  const SwmFit fit = train_swm(all.first(30), all.subspan(30), config);
  const auto out = fit.model.predict_sequence(examples[0].context, examples[0].items);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_GE(out[0].p_complete, 0.0);
  EXPECT_LE(out[0].p_complete, 1.0);
}

TEST(SwmCheckpoint, RoundTripPredictsIdentically) {
  Swm model = random_swm(3, 25);
  nn::round_to_stored_precision(model.mutable_net().parameters());
  const auto path = temp_file("swm.ckpt");
  model.save(path);
  const Swm back = Swm::load(path);
  Rng rng(26);
  const Eigen::VectorXd u = random_items(3, 1, rng)[0];
  const auto items = random_items(3, 5, rng);
  const auto a = model.predict_sequence(u, items);
  const auto b = back.predict_sequence(u, items);
  for (int t = 0; t < 5; ++t) EXPECT_EQ(a[t].as_vector(), b[t].as_vector());
  EXPECT_THROW(Cwm::load(path), Error);
}

TEST(MetricsLog, OneRowPerEpoch) {
  TrainingHistory history;
  history.epochs.push_back({1, {0.5, 0.4, 0.3}, {0.6, 0.5, 0.4}});
  history.epochs.push_back({2, {0.4, 0.3, 0.2}, {0.5, 0.4, 0.3}});
  const auto path = temp_file("metrics.csv");
  write_metrics_log(path, history);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("epoch,", 0), 0u);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2);
}

// Trained on sequential synthetic data: CWM and SWM fits reused by several tests.
class SequentialFit : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new SyntheticDataset(generate_synthetic(identifiable_spec(0.8, 30, 2000)));
    split_ = new Split(synthetic_split(*data_, 5));
    SwmConfig config;
    config.train.seed = 31;
    swm_ = new Swm(train_swm(split_->train, split_->validation, config).model);
    CwmConfig cwm_config;
    cwm_config.train.seed = 31;
    cwm_ = new Cwm(train_cwm(split_->train, split_->validation, cwm_config).model);
  }
  static void TearDownTestSuite() {
    delete data_;
    delete split_;
    delete swm_;
    delete cwm_;
  }

  static double empirical_completion(const std::vector<TrainingExample>& examples) {
    double done = 0.0, count = 0.0;
    for (const auto& e : examples) {
      for (const auto& l : e.labels) {
        done += l.complete ? 1.0 : 0.0;
        count += 1.0;
      }
    }
    return done / count;
  }

  static SyntheticDataset* data_;
  static Split* split_;
  static Swm* swm_;
  static Cwm* cwm_;
};

SyntheticDataset* SequentialFit::data_ = nullptr;
Split* SequentialFit::split_ = nullptr;
Swm* SequentialFit::swm_ = nullptr;
Cwm* SequentialFit::cwm_ = nullptr;

TEST_F(SequentialFit, ForcedCompleteRaisesNextCompletion) {
  double after_complete = 0.0, after_skip = 0.0;
  for (const TrainingExample& e : split_->test) {
    for (std::size_t t = 1; t < e.items.size(); ++t) {
      SwmState state = swm_->initial_state(e.context);
      for (std::size_t k = 0; k + 1 < t; ++k) swm_->step(state, e.items[k]);
      SwmState skip_state = state;
      swm_->step(state, e.items[t - 1], Eigen::Vector3d(1.0, 0.0, 1.0));
      swm_->step(skip_state, e.items[t - 1], Eigen::Vector3d(0.0, 1.0, 0.0));
      after_complete += swm_->step(state, e.items[t]).p_complete;
      after_skip += swm_->step(skip_state, e.items[t]).p_complete;
    }
  }
  EXPECT_GT(after_complete, after_skip);
}

TEST_F(SequentialFit, CalibratedOnHeldOutSplit) {
  const double empirical = empirical_completion(split_->test);
  double swm_mean = 0.0, cwm_mean = 0.0, count = 0.0;
  for (const TrainingExample& e : split_->test) {
    const auto teacher = swm_->predict_sequence(e.context, e.items, e.labels);
    const Eigen::MatrixXd c = cwm_->predict_many(e.context, e.items);
    for (std::size_t t = 0; t < e.items.size(); ++t) {
      swm_mean += teacher[t].p_complete;
      cwm_mean += c(0, static_cast<Eigen::Index>(t));
      count += 1.0;
    }
  }
  EXPECT_NEAR(swm_mean / count, empirical, 0.05);
  EXPECT_NEAR(cwm_mean / count, empirical, 0.05);
}

TEST_F(SequentialFit, SwmBeatsCwmOnHeldOutBce) {
  const HeadLosses swm = evaluate_swm(*swm_, split_->test);
  const HeadLosses cwm = evaluate_cwm(*cwm_, split_->test);
  EXPECT_LT(total_loss(swm), total_loss(cwm));
  EXPECT_LT(swm[0], cwm[0]);
}

}  // namespace
}  // namespace plrl
