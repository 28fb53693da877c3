#ifndef PLRL_EVALUATION_H_
#define PLRL_EVALUATION_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plrl/agents.h"
#include "plrl/environment.h"
#include "plrl/rng.h"

namespace plrl {

struct EpisodeResult {
  std::string policy;
  std::string session_id;
  std::vector<double> rewards;
  double total = 0.0;
};

// Every (policy, session) pair, policy-major. Episode initialisation uses
// derive_seed(seed, 0, session) for every policy (paired design); actions use
// derive_seed(seed, policy + 1, session). workers <= 0 means the OpenMP default.
std::vector<EpisodeResult> rollout_suite(std::span<const Policy* const> policies,
                                         std::span<const SessionRecord> sessions, const FeatureTable& features,
                                         const Environment& evaluator, std::uint64_t seed, int workers = 0);
// Single-threaded reference; identical output to rollout_suite.
std::vector<EpisodeResult> rollout_suite_serial(std::span<const Policy* const> policies,
                                                std::span<const SessionRecord> sessions,
                                                const FeatureTable& features, const Environment& evaluator,
                                                std::uint64_t seed);

// Linear interpolation between closest ranks; q in [0, 1].
double percentile(std::vector<double> values, double q);

struct ReturnStats {
  std::string policy;
  std::size_t episodes = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double low = 0.0;  // 2.5th percentile
  double high = 0.0;  // 97.5th percentile
};

// Totals grouped by policy in order of first appearance.
std::vector<std::pair<std::string, std::vector<double>>> group_returns(std::span<const EpisodeResult> results);

// One row per policy. Throws kInvalidArgument when empty or a policy has fewer
// than two episodes.
std::vector<ReturnStats> summarize_table(std::span<const EpisodeResult> results);

struct GmmOptions {
  int restarts = 10;
  double tolerance = 1e-8;  // on the log-likelihood change
  int max_iterations = 500;
  double min_variance = 1e-12;
  int max_attempts = 100;  // restarts including re-seeded degenerate ones
};

struct GmmFit {
  std::vector<double> means;  // ascending
  std::vector<double> variances;
  std::vector<double> weights;
  double log_likelihood = 0.0;
  std::vector<double> trace;  // log-likelihood after each EM iteration of the kept restart
  bool converged = false;
};

// EM for a k-component 1-D Gaussian mixture. Throws kInvalidArgument for
// fewer than 10 values or k < 1, kNumeric when every restart degenerates.
GmmFit fit_gmm_1d(std::span<const double> values, int k, Rng& rng, const GmmOptions& options = {});
// Single EM run from the given starting point; throws kNumeric on degeneracy.
GmmFit run_em_1d(std::span<const double> values, GmmFit start, const GmmOptions& options = {});

double gmm_log_likelihood(std::span<const double> values, const GmmFit& fit);

struct ModalResult {
  std::string policy;
  std::vector<double> means;
  std::vector<double> weights;
  double modal_average = 0.0;  // sum_k weight_k * mean_k
  double transformed = 0.0;    // log(1 + modal_average)
  double score = 0.0;          // min-max scaled over the compared policies
};

using PolicyReturns = std::vector<std::pair<std::string, std::vector<double>>>;

// k=2 mixture per policy; each policy's fit uses a fresh Rng(seed). A policy
// with constant returns takes both modes at that constant.
std::vector<ModalResult> modal_score(const PolicyReturns& returns, std::uint64_t seed,
                                     const GmmOptions& options = {});
// Min-max scaling of the transformed values; 0.5 for all when the range is < 1e-9.
void scale_modal_scores(std::vector<ModalResult>& results);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

using Statistic = std::function<double(std::span<const double>)>;

double mean_of(std::span<const double> values);

// Percentile bootstrap; replicate b resamples with Rng(derive_seed(seed, b, 0)).
Interval bootstrap_ci(std::span<const double> values, const Statistic& statistic, std::size_t replicates,
                      double level, std::uint64_t seed, int workers = 0);
Interval bootstrap_ci_serial(std::span<const double> values, const Statistic& statistic,
                             std::size_t replicates, double level, std::uint64_t seed);

// Paired bootstrap of the modal scores: every replicate resamples the same
// episode indices for all policies (which must have equal counts). Replicate
// fits warm-start EM from the full-sample mixture of each policy.
std::vector<Interval> bootstrap_modal_scores(const PolicyReturns& returns, const std::vector<ModalResult>& full,
                                             std::size_t replicates, double level, std::uint64_t seed,
                                             int workers = 0, const GmmOptions& options = {});
std::vector<Interval> bootstrap_modal_scores_serial(const PolicyReturns& returns,
                                                    const std::vector<ModalResult>& full,
                                                    std::size_t replicates, double level, std::uint64_t seed,
                                                    const GmmOptions& options = {});

struct EvalConfig {
  std::size_t episodes = 500;  // sessions drawn from the test split
  std::size_t bootstrap_replicates = 2000;
  double level = 0.95;
  double histogram_bin = 0.5;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& json);
};

struct EvalSummary {
  ReturnStats stats;
  Interval mean_ci;
  ModalResult modal;
  Interval score_ci;
};

std::vector<EvalSummary> summarize_evaluation(std::span<const EpisodeResult> results, const EvalConfig& config,
                                              int workers = 0);

void write_summary_csv(const std::filesystem::path& path, std::span<const EvalSummary> summaries);
// Counts per policy over bins of width `bin` covering [0, horizon]; the last
// bin is closed on the right.
void write_histograms_csv(const std::filesystem::path& path, std::span<const EpisodeResult> results,
                          double horizon, double bin);
void write_episodes_csv(const std::filesystem::path& path, std::span<const EpisodeResult> results);

}  // namespace plrl

#endif  // PLRL_EVALUATION_H_
