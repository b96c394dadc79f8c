#pragma once

// Non-model baselines: dual-EMA crossover, the convex net (identity-activation
// RNN whose [W_hh | w_ih] rows form a stochastic matrix) and a uniform
// random classifier.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendlab/numeric.hpp"
#include "trendlab/simgen.hpp"
#include "trendlab/tensornet.hpp"
#include "trendlab/types.hpp"

namespace trendlab::classical {

struct MaConfig {
  double mu_slow = 0.95;
  double mu_fast = 0.48;
  double epsilon = 0.1;

  /// Requires 0 < mu_fast < mu_slow < 1 and epsilon >= 0.
  void validate() const;
};

void to_json(nlohmann::json& j, const MaConfig& c);
void from_json(const nlohmann::json& j, MaConfig& c);

/// EMAs start at x_0; +1 when fast - slow > epsilon, -1 when < -epsilon.
LabelSeq ma_classify(const MaConfig& cfg, std::span<const double> x);

struct MaGrid {
  std::vector<double> mu_values;  // candidate decay factors, both speeds
  std::vector<double> eps_values;

  /// 19 decays in (0,1) and 11 thresholds in [0, 0.5].
  static MaGrid defaults();
};

struct MaSearchResult {
  MaConfig best;
  double median_loss = 1.0;
};

/// Exhaustive search minimizing the overall median loss on `ds`.
MaSearchResult ma_grid_search(const simgen::Dataset& ds, const MaGrid& grid);

struct ConvexNetParams {
  numeric::Matrix w_hh;             // m x m
  std::vector<double> w_ih;         // m
  numeric::Matrix w_out;            // 3 x m
  std::array<double, 3> b_out{};

  std::size_t dim() const { return w_ih.size(); }

  /// Nonnegative, row sums of [W_hh | w_ih] equal to 1 within 1e-12 and
  /// spectral radius of W_hh below 1. Throws ParamError otherwise.
  void validate() const;

  /// Rows (1-alpha_i) on the input, alpha_i on the diagonal: a bank of
  /// independent EMAs with decays spread over [0.3, 0.95]. Zero read-out.
  static ConvexNetParams ema_bank(std::size_t m);
};

/// Clip negatives to zero, then rescale to sum 1. An all-zero row becomes
/// uniform.
void project_row(std::span<double> row);

inline constexpr double kMinInputWeight = 1e-6;

/// Applies project_row to every row of [W_hh | w_ih], then lifts any input
/// weight below kMinInputWeight to that floor by shrinking the W_hh part.
void project_stochastic(ConvexNetParams& p);

/// Perron root estimate by power iteration (Collatz-Wielandt upper bound).
double spectral_radius(const numeric::Matrix& w);

struct ConvexTrajectory {
  std::vector<std::vector<double>> states;  // T x m
  ProbSeq probs;
  LabelSeq labels;
};

/// h_0 = y_0 w_ih, h_t = W_hh h_{t-1} + y_t w_ih, label = argmax(W h_t + b).
ConvexTrajectory convex_forward(const ConvexNetParams& p, std::span<const double> y);

struct ConvexTrainOptions {
  std::size_t dim = 5;
  double learning_rate = 0.005;
  int epochs = 50;
  std::uint64_t seed = 0;
};

struct ConvexTrainResult {
  ConvexNetParams params;
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
  bool failed = false;
  std::string failure_reason;
};

/// Adam on per-step cross-entropy, one series per step, each followed by
/// the stochastic-matrix projection.
ConvexTrainResult convex_train(const simgen::Dataset& ds, const ConvexTrainOptions& opts);

/// Uniform random label per step.
LabelSeq dummy_classify(std::size_t n, std::uint64_t seed);

nlohmann::json ma_to_json(const MaConfig& c);
MaConfig ma_from_json(const nlohmann::json& j);
nlohmann::json convex_to_json(const ConvexNetParams& p);
ConvexNetParams convex_from_json(const nlohmann::json& j);

}  // namespace trendlab::classical
