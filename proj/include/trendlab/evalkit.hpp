#pragma once

// Scoring and comparison: per-series mismatch loss, quartile summaries,
// percentile bootstrap of median differences, OLS on one-hot encoded
// categorical features, probability pooling and 1-D Wasserstein
// calibration of simulator configs.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendlab/numeric.hpp"
#include "trendlab/simgen.hpp"
#include "trendlab/types.hpp"

namespace trendlab::evalkit {

/// Fraction of steps where the labels differ.
double series_loss(const LabelSeq& predicted, const LabelSeq& truth);

struct LossRow {
  std::string id;
  std::string group;
  double loss = 0.0;
};

struct GroupSummary {
  std::string group;
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
};

GroupSummary summarize_sample(const std::string& group, std::vector<double> losses);

struct EvalReport {
  std::vector<LossRow> rows;
  /// One entry per group in first-seen order, then "all".
  std::vector<GroupSummary> groups;

  const GroupSummary* find(const std::string& group) const;
  const GroupSummary& overall() const { return groups.back(); }
};

EvalReport summarize(std::vector<LossRow> rows);

void to_json(nlohmann::json& j, const GroupSummary& g);
void to_json(nlohmann::json& j, const EvalReport& r);

struct BootstrapResult {
  double point_diff = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.99;
  std::size_t n_resamples = 0;

  bool contains(double x) const { return ci_low <= x && x <= ci_high; }
};

void to_json(nlohmann::json& j, const BootstrapResult& b);

/// Independent resampling of a and b; statistic median(a*) - median(b*);
/// percentile interval.
BootstrapResult bootstrap_median_diff(std::span<const double> a, std::span<const double> b,
                                      double level = 0.99, std::size_t n_resamples = 10000,
                                      std::uint64_t seed = 0);

/// Same statistic, resampling within each stratum separately and pooling
/// the resampled strata before taking medians.
BootstrapResult bootstrap_median_diff_stratified(const std::vector<std::vector<double>>& a,
                                                 const std::vector<std::vector<double>>& b,
                                                 double level = 0.99,
                                                 std::size_t n_resamples = 10000,
                                                 std::uint64_t seed = 0);

struct CategoricalFeature {
  std::string name;
  std::vector<std::string> values;  // one per row
};

struct OlsCoefficient {
  std::string name;
  double coef = 0.0;
  double std_err = 0.0;
  double t = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct OlsFit {
  std::vector<OlsCoefficient> coefficients;
  std::vector<double> residuals;
  std::size_t n_rows = 0;
  std::size_t dof = 0;
  double sigma2 = 0.0;
  double r_squared = 0.0;
};

/// Dense-design OLS. Names label the columns of x. Throws ShapeError on
/// rank deficiency, naming the columns that are linear combinations of the
/// others.
OlsFit ols_fit_design(const numeric::Matrix& x, std::span<const double> y,
                      const std::vector<std::string>& names);

/// Intercept plus one-hot columns; per feature the lexicographically first
/// modality is the dropped baseline. Column names read "feature[modality]".
OlsFit ols_fit(std::span<const double> y, const std::vector<CategoricalFeature>& features);

/// Per-step arithmetic mean of the estimators' probability triples.
ProbSeq pool_probabilities(const std::vector<ProbSeq>& outputs);

/// W1 between two empirical distributions (exact quantile-function
/// integral; reduces to mean |sorted a - sorted b| for equal sizes).
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

/// Returns a generated path is compared on: increments for noisy line and
/// OU, log-returns for the Markov switch.
std::vector<double> simulated_returns(const Series& s);

struct CalibrationSearch {
  std::size_t n_draws = 8;
  std::size_t n_candidates = 64;
  std::uint64_t seed = 0;
};

struct CalibrationResult {
  simgen::DynamicConfigs configs;
  double distance = 0.0;
  std::vector<double> running_min;  // best distance after each candidate
};

/// Random search. Candidate k is drawn from seed-derived stream k, and all
/// candidates share the same simulation seeds.
CalibrationResult calibrate(Dynamic dynamic, std::span<const double> target_returns,
                            const CalibrationSearch& search,
                            const simgen::DynamicConfigs& base =
                                simgen::DynamicConfigs::defaults_for(simgen::Role::kTrain));

/// Average W1 between target_returns and n_draws simulated paths of `d`
/// under `configs` with the given simulation seed root.
double calibration_distance(Dynamic d, const simgen::DynamicConfigs& configs,
                            std::span<const double> target_returns, std::size_t n_draws,
                            std::uint64_t sim_seed);

}  // namespace trendlab::evalkit
