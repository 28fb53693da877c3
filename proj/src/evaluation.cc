#include "plrl/evaluation.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "plrl/error.h"
#include "plrl/log.h"

namespace plrl {
namespace {

constexpr double kConstantSpread = 1e-12;
constexpr double kScaleGuard = 1e-9;

int thread_count(int workers) { return workers > 0 ? workers : omp_get_max_threads(); }

// Runs body(i) for i in [0, n) on `workers` threads and rethrows the first
// exception after the loop.
template <class Body>
void parallel_for(std::size_t n, int workers, Body body) {
  std::exception_ptr error;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) num_threads(thread_count(workers))
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(plrl_parallel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

EpisodeResult run_episode(const Policy& policy, std::size_t policy_index, const SessionRecord& session,
                          std::size_t session_index, const FeatureTable& features, const Environment& env,
                          std::uint64_t seed) {
  Rng reset_rng(derive_seed(seed, 0, session_index));
  Rng act_rng(derive_seed(seed, policy_index + 1, session_index));
  EnvState state = env.reset(session, features, reset_rng);
  EpisodeResult result{policy.name(), session.session_id, {}, 0.0};
  while (!state.done()) result.rewards.push_back(env.step(state, policy.act(state, act_rng)).reward);
  result.total = state.total_return;
  return result;
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::ofstream open_report(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write report '" + path.string() + "'");
  return out;
}

bool is_constant(std::span<const double> values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return *hi - *lo < kConstantSpread;
}

double transform(double modal_average) { return std::log1p(modal_average); }

ModalResult constant_modes(const std::string& policy, double c) {
  ModalResult r;
  r.policy = policy;
  r.means = {c, c};
  r.weights = {0.5, 0.5};
  r.modal_average = c;
  r.transformed = transform(c);
  return r;
}

ModalResult modal_from_fit(const std::string& policy, const GmmFit& fit) {
  ModalResult r;
  r.policy = policy;
  r.means = fit.means;
  r.weights = fit.weights;
  for (std::size_t k = 0; k < fit.means.size(); ++k) r.modal_average += fit.weights[k] * fit.means[k];
  require(r.modal_average > -1.0, ErrorCode::kNumeric, "modal average below -1 cannot be log-transformed");
  r.transformed = transform(r.modal_average);
  return r;
}

void sort_components(GmmFit& fit) {
  std::vector<std::size_t> order(fit.means.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit.means[a] < fit.means[b]; });
  GmmFit sorted = fit;
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted.means[k] = fit.means[order[k]];
    sorted.variances[k] = fit.variances[order[k]];
    sorted.weights[k] = fit.weights[order[k]];
  }
  fit = std::move(sorted);
}

Interval percentile_interval(std::vector<double> stats, double level) {
  const double tail = (1.0 - level) / 2.0;
  std::sort(stats.begin(), stats.end());
  return {percentile(stats, tail), percentile(stats, 1.0 - tail)};
}

void check_bootstrap(std::size_t n, std::size_t replicates, double level) {
  require(n >= 2, ErrorCode::kInvalidArgument, "bootstrap needs at least 2 values");
  require(replicates >= 1, ErrorCode::kInvalidArgument, "bootstrap needs at least one replicate");
  require(level > 0.0 && level < 1.0, ErrorCode::kInvalidArgument, "bootstrap level must be in (0, 1)");
}

double bootstrap_replicate(std::span<const double> values, const Statistic& statistic, std::size_t b,
                           std::uint64_t seed) {
  Rng rng(derive_seed(seed, b, 0));
  std::vector<double> sample(values.size());
  for (double& v : sample) v = values[rng.uniform_index(values.size())];
  return statistic(sample);
}

std::vector<double> modal_replicate(const PolicyReturns& returns, const std::vector<ModalResult>& full,
                                    std::size_t b, std::uint64_t seed, const GmmOptions& options) {
  const std::size_t n = returns.front().second.size();
  Rng rng(derive_seed(seed, b, 0));
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.uniform_index(n);
  std::vector<ModalResult> rep;
  for (std::size_t p = 0; p < returns.size(); ++p) {
    std::vector<double> sample(n);
    for (std::size_t j = 0; j < n; ++j) sample[j] = returns[p].second[idx[j]];
    if (is_constant(sample)) {
      rep.push_back(constant_modes(returns[p].first, sample.front()));
      continue;
    }
    GmmFit start;
    start.means = full[p].means;
    start.weights = full[p].weights;
    const double m = mean_of(sample);
    double var = 0.0;
    for (double x : sample) var += (x - m) * (x - m);
    start.variances.assign(start.means.size(), var / static_cast<double>(n));
    GmmFit fit;
    try {
      fit = run_em_1d(sample, start, options);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      try {
        Rng fallback(derive_seed(seed, b, p + 1));
        fit = fit_gmm_1d(sample, 2, fallback, options);
      } catch (const Error& inner) {
        if (inner.code() != ErrorCode::kNumeric) throw;
        // Weighted modal mean of any EM fixed point is the sample mean.
        fit.means = {m};
        fit.variances = {var / static_cast<double>(n)};
        fit.weights = {1.0};
      }
    }
    rep.push_back(modal_from_fit(returns[p].first, fit));
  }
  scale_modal_scores(rep);
  std::vector<double> scores;
  for (const auto& r : rep) scores.push_back(r.score);
  return scores;
}

std::vector<Interval> modal_intervals(const std::vector<std::vector<double>>& replicates, std::size_t policies,
                                      double level) {
  std::vector<Interval> out;
  for (std::size_t p = 0; p < policies; ++p) {
    std::vector<double> column;
    for (const auto& r : replicates) column.push_back(r[p]);
    out.push_back(percentile_interval(std::move(column), level));
  }
  return out;
}

void check_modal_inputs(const PolicyReturns& returns, const std::vector<ModalResult>& full, std::size_t replicates,
                        double level) {
  require(!returns.empty() && returns.size() == full.size(), ErrorCode::kInvalidArgument,
          "modal bootstrap: returns and full-sample results differ");
  for (const auto& [name, values] : returns) {
    require(values.size() == returns.front().second.size(), ErrorCode::kInvalidArgument,
            "modal bootstrap: policy '" + name + "' has a different episode count");
  }
  check_bootstrap(returns.front().second.size(), replicates, level);
}

}  // namespace

std::vector<EpisodeResult> rollout_suite(std::span<const Policy* const> policies,
                                         std::span<const SessionRecord> sessions, const FeatureTable& features,
                                         const Environment& evaluator, std::uint64_t seed, int workers) {
  std::vector<EpisodeResult> results(policies.size() * sessions.size());
  parallel_for(results.size(), workers, [&](std::size_t i) {
    const std::size_t p = i / sessions.size(), s = i % sessions.size();
    results[i] = run_episode(*policies[p], p, sessions[s], s, features, evaluator, seed);
  });
  return results;
}

std::vector<EpisodeResult> rollout_suite_serial(std::span<const Policy* const> policies,
                                                std::span<const SessionRecord> sessions,
                                                const FeatureTable& features, const Environment& evaluator,
                                                std::uint64_t seed) {
  std::vector<EpisodeResult> results;
  for (std::size_t p = 0; p < policies.size(); ++p) {
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      results.push_back(run_episode(*policies[p], p, sessions[s], s, features, evaluator, seed));
    }
  }
  return results;
}

double percentile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "percentile of an empty set");
  require(q >= 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "percentile rank must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<std::pair<std::string, std::vector<double>>> group_returns(std::span<const EpisodeResult> results) {
  PolicyReturns groups;
  for (const auto& r : results) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r.policy; });
    if (it == groups.end()) {
      groups.push_back({r.policy, {}});
      it = std::prev(groups.end());
    }
    it->second.push_back(r.total);
  }
  return groups;
}

std::vector<ReturnStats> summarize_table(std::span<const EpisodeResult> results) {
  require(!results.empty(), ErrorCode::kInvalidArgument, "summarize_table: no results");
  std::vector<ReturnStats> out;
  for (const auto& [policy, values] : group_returns(results)) {
    require(values.size() >= 2, ErrorCode::kInvalidArgument,
            "summarize_table: policy '" + policy + "' has fewer than 2 episodes");
    ReturnStats s;
    s.policy = policy;
    s.episodes = values.size();
    s.mean = mean_of(values);
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    s.low = percentile(values, 0.025);
    s.high = percentile(values, 0.975);
    out.push_back(s);
  }
  return out;
}

double gmm_log_likelihood(std::span<const double> values, const GmmFit& fit) {
  double total = 0.0;
  std::vector<double> terms(fit.means.size());
  for (double x : values) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < fit.means.size(); ++k) {
      const double d = x - fit.means[k];
      terms[k] = std::log(fit.weights[k]) - 0.5 * std::log(2.0 * std::numbers::pi * fit.variances[k]) -
                 0.5 * d * d / fit.variances[k];
      top = std::max(top, terms[k]);
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - top);
    total += top + std::log(sum);
  }
  return total;
}

GmmFit run_em_1d(std::span<const double> values, GmmFit fit, const GmmOptions& options) {
  const std::size_t k = fit.means.size();
  const std::size_t n = values.size();
  require(k >= 1 && fit.variances.size() == k && fit.weights.size() == k, ErrorCode::kInvalidArgument,
          "run_em_1d: inconsistent starting mixture");
  for (double v : fit.variances) {
    require(v >= options.min_variance, ErrorCode::kNumeric, "run_em_1d: degenerate starting variance");
  }
  fit.trace.clear();
  fit.converged = false;
  std::vector<double> resp(n * k), terms(k);
  double previous = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iterations; ++it) {
    // E step: responsibilities and log-likelihood of the current parameters.
    std::vector<double> log_norm(k);
    for (std::size_t c = 0; c < k; ++c) {
      log_norm[c] = std::log(fit.weights[c]) - 0.5 * std::log(2.0 * std::numbers::pi * fit.variances[c]);
    }
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = values[i] - fit.means[c];
        terms[c] = log_norm[c] - 0.5 * d * d / fit.variances[c];
        top = std::max(top, terms[c]);
      }
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) sum += std::exp(terms[c] - top);
      const double lse = top + std::log(sum);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) resp[i * k + c] = std::exp(terms[c] - lse);
    }
    require(std::isfinite(ll), ErrorCode::kNumeric, "run_em_1d: non-finite log-likelihood");
    fit.trace.push_back(ll);
    fit.log_likelihood = ll;
    if (it > 0 && std::abs(ll - previous) < options.tolerance) {
      fit.converged = true;
      break;
    }
    previous = ll;
    // M step.
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * k + c];
        sx += resp[i * k + c] * values[i];
      }
      require(nk > 0.0, ErrorCode::kNumeric, "run_em_1d: empty component");
      const double mean = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = values[i] - mean;
        sv += resp[i * k + c] * d * d;
      }
      const double var = sv / nk;
      require(var >= options.min_variance, ErrorCode::kNumeric, "run_em_1d: degenerate component");
      fit.means[c] = mean;
      fit.variances[c] = var;
      fit.weights[c] = nk / static_cast<double>(n);
    }
  }
  if (!fit.converged) fit.log_likelihood = gmm_log_likelihood(values, fit);
  sort_components(fit);
  return fit;
}

GmmFit fit_gmm_1d(std::span<const double> values, int k, Rng& rng, const GmmOptions& options) {
  require(values.size() >= 10, ErrorCode::kInvalidArgument, "fit_gmm_1d needs at least 10 values");
  require(k >= 1 && static_cast<std::size_t>(k) <= values.size(), ErrorCode::kInvalidArgument,
          "fit_gmm_1d: invalid component count");
  const double mean = mean_of(values);
  double var = 0.0;
  for (double x : values) var += (x - mean) * (x - mean);
  var /= static_cast<double>(values.size());

  GmmFit best;
  bool found = false;
  int successes = 0;
  for (int attempt = 0; attempt < options.max_attempts && successes < options.restarts; ++attempt) {
    GmmFit start;
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int c = 0; c < k; ++c) {
      const std::size_t j = c + rng.uniform_index(values.size() - static_cast<std::size_t>(c));
      std::swap(idx[static_cast<std::size_t>(c)], idx[j]);
      start.means.push_back(values[idx[static_cast<std::size_t>(c)]]);
    }
    start.variances.assign(static_cast<std::size_t>(k), var);
    start.weights.assign(static_cast<std::size_t>(k), 1.0 / k);
    try {
      GmmFit fit = run_em_1d(values, start, options);
      ++successes;
      if (!found || fit.log_likelihood > best.log_likelihood) {
        best = std::move(fit);
        found = true;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
    }
  }
  require(found, ErrorCode::kNumeric, "fit_gmm_1d: every restart produced a degenerate component");
  return best;
}

void scale_modal_scores(std::vector<ModalResult>& results) {
  if (results.empty()) return;
  double lo = results.front().transformed, hi = lo;
  for (const auto& r : results) {
    lo = std::min(lo, r.transformed);
    hi = std::max(hi, r.transformed);
  }
  for (auto& r : results) r.score = hi - lo < kScaleGuard ? 0.5 : (r.transformed - lo) / (hi - lo);
}

std::vector<ModalResult> modal_score(const PolicyReturns& returns, std::uint64_t seed, const GmmOptions& options) {
  require(!returns.empty(), ErrorCode::kInvalidArgument, "modal_score: no policies");
  std::vector<ModalResult> out;
  for (const auto& [policy, values] : returns) {
    require(!values.empty(), ErrorCode::kInvalidArgument, "modal_score: policy '" + policy + "' has no returns");
    if (is_constant(values)) {
      out.push_back(constant_modes(policy, values.front()));
      continue;
    }
    Rng rng(seed);
    out.push_back(modal_from_fit(policy, fit_gmm_1d(values, 2, rng, options)));
  }
  scale_modal_scores(out);
  return out;
}

double mean_of(std::span<const double> values) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "mean of an empty set");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

Interval bootstrap_ci(std::span<const double> values, const Statistic& statistic, std::size_t replicates,
                      double level, std::uint64_t seed, int workers) {
  check_bootstrap(values.size(), replicates, level);
  std::vector<double> stats(replicates);
  parallel_for(replicates, workers, [&](std::size_t b) { stats[b] = bootstrap_replicate(values, statistic, b, seed); });
  return percentile_interval(std::move(stats), level);
}

Interval bootstrap_ci_serial(std::span<const double> values, const Statistic& statistic,
                             std::size_t replicates, double level, std::uint64_t seed) {
  check_bootstrap(values.size(), replicates, level);
  std::vector<double> stats(replicates);
  for (std::size_t b = 0; b < replicates; ++b) stats[b] = bootstrap_replicate(values, statistic, b, seed);
  return percentile_interval(std::move(stats), level);
}

std::vector<Interval> bootstrap_modal_scores(const PolicyReturns& returns, const std::vector<ModalResult>& full,
                                             std::size_t replicates, double level, std::uint64_t seed,
                                             int workers, const GmmOptions& options) {
  check_modal_inputs(returns, full, replicates, level);
  std::vector<std::vector<double>> reps(replicates);
  parallel_for(replicates, workers, [&](std::size_t b) { reps[b] = modal_replicate(returns, full, b, seed, options); });
  return modal_intervals(reps, returns.size(), level);
}

std::vector<Interval> bootstrap_modal_scores_serial(const PolicyReturns& returns,
                                                    const std::vector<ModalResult>& full,
                                                    std::size_t replicates, double level, std::uint64_t seed,
                                                    const GmmOptions& options) {
  check_modal_inputs(returns, full, replicates, level);
  std::vector<std::vector<double>> reps(replicates);
  for (std::size_t b = 0; b < replicates; ++b) reps[b] = modal_replicate(returns, full, b, seed, options);
  return modal_intervals(reps, returns.size(), level);
}

nlohmann::json EvalConfig::to_json() const {
  return {{"episodes", episodes},
          {"bootstrap_replicates", bootstrap_replicates},
          {"level", level},
          {"histogram_bin", histogram_bin},
          {"seed", seed}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& json) {
  EvalConfig c;
  c.episodes = json.value("episodes", c.episodes);
  c.bootstrap_replicates = json.value("bootstrap_replicates", c.bootstrap_replicates);
  c.level = json.value("level", c.level);
  c.histogram_bin = json.value("histogram_bin", c.histogram_bin);
  c.seed = json.value("seed", c.seed);
  require(c.episodes >= 2 && c.bootstrap_replicates >= 1 && c.level > 0.0 && c.level < 1.0 && c.histogram_bin > 0.0,
          ErrorCode::kInvalidArgument, "evaluation config: need episodes >= 2, replicates >= 1, level in (0, 1), bin > 0");
  return c;
}

std::vector<EvalSummary> summarize_evaluation(std::span<const EpisodeResult> results, const EvalConfig& config,
                                              int workers) {
  const std::vector<ReturnStats> stats = summarize_table(results);
  const PolicyReturns returns = group_returns(results);
  const std::vector<ModalResult> modal = modal_score(returns, config.seed);
  const std::vector<Interval> score_ci = bootstrap_modal_scores(returns, modal, config.bootstrap_replicates,
                                                                config.level, derive_seed(config.seed, 2, 0), workers);
  std::vector<EvalSummary> out;
  for (std::size_t p = 0; p < returns.size(); ++p) {
    EvalSummary s;
    s.stats = stats[p];
    s.mean_ci = bootstrap_ci(returns[p].second, mean_of, config.bootstrap_replicates, config.level,
                             derive_seed(config.seed, 1, p), workers);
    s.modal = modal[p];
    s.score_ci = score_ci[p];
    out.push_back(s);
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, std::span<const EvalSummary> summaries) {
  std::ofstream out = open_report(path);
  out << "policy,episodes,mean,std,ci_low,ci_high,mean_ci_low,mean_ci_high,mode1_mean,mode2_mean,"
         "mode1_weight,mode2_weight,modal_average,score,score_ci_low,score_ci_high\n";
  for (const auto& s : summaries) {
    out << s.stats.policy << ',' << s.stats.episodes << ',' << fixed(s.stats.mean) << ',' << fixed(s.stats.std)
        << ',' << fixed(s.stats.low) << ',' << fixed(s.stats.high) << ',' << fixed(s.mean_ci.low) << ','
        << fixed(s.mean_ci.high) << ',' << fixed(s.modal.means[0]) << ',' << fixed(s.modal.means[1]) << ','
        << fixed(s.modal.weights[0]) << ',' << fixed(s.modal.weights[1]) << ',' << fixed(s.modal.modal_average)
        << ',' << fixed(s.modal.score) << ',' << fixed(s.score_ci.low) << ',' << fixed(s.score_ci.high) << '\n';
  }
}

void write_histograms_csv(const std::filesystem::path& path, std::span<const EpisodeResult> results,
                          double horizon, double bin) {
  require(horizon > 0.0 && bin > 0.0, ErrorCode::kInvalidArgument, "histogram needs positive horizon and bin");
  const auto bins = static_cast<std::size_t>(std::ceil(horizon / bin - 1e-9));
  std::ofstream out = open_report(path);
  out << "policy,bin_low,bin_high,count\n";
  for (const auto& [policy, values] : group_returns(results)) {
    std::vector<std::size_t> counts(bins, 0);
    for (double v : values) {
      const auto b = static_cast<std::size_t>(std::clamp(std::floor(v / bin), 0.0, static_cast<double>(bins - 1)));
      ++counts[b];
    }
    for (std::size_t b = 0; b < bins; ++b) {
      out << policy << ',' << fixed(static_cast<double>(b) * bin) << ','
          << fixed(std::min(horizon, static_cast<double>(b + 1) * bin)) << ',' << counts[b] << '\n';
    }
  }
}

void write_episodes_csv(const std::filesystem::path& path, std::span<const EpisodeResult> results) {
  std::ofstream out = open_report(path);
  out << "policy,session_id,return,rewards\n";
  for (const auto& r : results) {
    out << r.policy << ',' << r.session_id << ',' << fixed(r.total) << ',';
    for (std::size_t t = 0; t < r.rewards.size(); ++t) out << (t ? ";" : "") << fixed(r.rewards[t]);
    out << '\n';
  }
}

}  // namespace plrl
