#pragma once

// Model-based trend classifiers: the noisy-line slope MLE, continuous
// likelihood estimators for an OU-type drift mu - a*Y with their bias
// approximations, and a Gaussian-emission HMM on log-returns.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendlab/simgen.hpp"
#include "trendlab/types.hpp"

namespace trendlab::mle {

struct MleEstimate {
  double mu_hat = 0.0;
  std::optional<double> a_hat;
  double bias_mu = 0.0;
  double bias_a = 0.0;
  double var_mu = 0.0;
};

/// Slope through the first point: sum (t_i-t_0)(y_i-y_0) / sum (t_i-t_0)^2.
/// var_mu uses the residual variance with n-1 fitted degrees of freedom
/// removed (n-2 when n > 2).
MleEstimate nle_slope(std::span<const double> t, std::span<const double> y);

/// Discrete left-point integrals of a path sampled every dt.
struct PathIntegrals {
  double T = 0.0;        // n_steps * dt
  double int_y = 0.0;    // sum y_i dt
  double int_y2 = 0.0;   // sum y_i^2 dt
  double int_dy = 0.0;   // sum (y_{i+1} - y_i)
  double int_ydy = 0.0;  // sum y_i (y_{i+1} - y_i)
  double y0 = 0.0;
  double yT = 0.0;

  /// (int Y dt)^2 - T int Y^2 dt; zero only for constant paths.
  double denominator() const { return int_y * int_y - T * int_y2; }
};

PathIntegrals path_integrals(std::span<const double> y, double dt);

/// Drift and pull of dY = (mu - a Y) dt + dW with their single-path bias
/// approximations. Throws DegenerateError when the denominator is zero.
MleEstimate oue_estimate(std::span<const double> y, double dt);

/// -1 if x <= -eps, +1 if x >= eps, else 0. With eps = 0 this is the
/// plain sign, so 0 stays flat.
TrendLabel sgn_eps(double x, double eps);

enum class Estimator { kNle, kOue };
std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view s);

struct SlidingWindowConfig {
  int eta = 20;
  double epsilon = 0.0;
  int stride = 1;

  void validate(Estimator e) const;
};

void to_json(nlohmann::json& j, const SlidingWindowConfig& c);
void from_json(const nlohmann::json& j, SlidingWindowConfig& c);

/// Per-step statistic mapped through sgn_eps. NLE uses the slope; OUE
/// uses the drift mu_hat - a_hat * y at the window end on a window rescaled
/// by its estimated per-step volatility. Steps before eta-1 are flat; a
/// degenerate window yields flat. With stride s the label is held between
/// evaluated steps.
struct ClassifyResult {
  LabelSeq labels;
  std::size_t degenerate_windows = 0;
};

ClassifyResult mle_classify(const Series& s, Estimator est, const SlidingWindowConfig& cfg);

/// Window statistic that mle_classify thresholds, or nullopt for a
/// degenerate window. Exposed for threshold tuning.
std::optional<double> window_statistic(const Series& s, std::size_t end, Estimator est, int eta);

/// Picks epsilon from `grid` minimizing the overall median loss on `ds`.
double tune_epsilon(const simgen::Dataset& ds, Estimator est, int eta,
                    std::span<const double> grid);

struct HmmModel {
  std::vector<double> initial;
  std::vector<std::vector<double>> transition;
  std::vector<double> means;
  std::vector<double> vars;

  std::size_t n_states() const { return means.size(); }
  void validate() const;
};

struct HmmFitOptions {
  std::size_t n_states = 3;
  int max_iters = 200;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

struct HmmFitResult {
  HmmModel model;
  std::vector<double> log_likelihood;  // one entry per EM iteration
  int restarts = 0;
  bool converged = false;
};

/// Log-returns of a strictly positive series.
std::vector<double> log_returns(std::span<const double> y);

/// Baum-Welch on independent observation sequences.
HmmFitResult hmm_fit_sequences(const std::vector<std::vector<double>>& obs,
                               const HmmFitOptions& opts);

/// Fits on the log-returns of every series in `ds`.
HmmFitResult hmm_fit(const simgen::Dataset& ds, const HmmFitOptions& opts);

/// Scaled forward-backward state posteriors (T x n_states) and total
/// log-likelihood.
struct Posterior {
  std::vector<std::vector<double>> gamma;
  double log_likelihood = 0.0;
};
Posterior hmm_posterior(const HmmModel& m, std::span<const double> obs);

/// Posterior over (down, flat, up) per step: states sorted by mean map to
/// -1, 0, +1. Step 0 copies step 1 since it has no return.
ProbSeq hmm_classify_probs(const HmmModel& m, const Series& s);
LabelSeq hmm_classify(const HmmModel& m, const Series& s);

/// True when the sorted state means are not separated by at least one
/// pooled standard deviation.
bool hmm_means_overlap(const HmmModel& m);

nlohmann::json hmm_to_json(const HmmModel& m);
HmmModel hmm_from_json(const nlohmann::json& j);

}  // namespace trendlab::mle
