#pragma once

// Stacked recurrent trend classifiers (vanilla, GRU, LSTM) with a linear
// softmax read-out over (down, flat, up). Gradients are derived by hand for
// each cell; there is no general autodiff graph.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendlab/numeric.hpp"
#include "trendlab/rng.hpp"
#include "trendlab/simgen.hpp"
#include "trendlab/types.hpp"

namespace trendlab::tensornet {

enum class Cell { kVanilla, kGru, kLstm };

std::string_view to_string(Cell c);
Cell parse_cell(std::string_view s);

struct RnnSpec {
  static constexpr std::size_t kOutClasses = 3;

  Cell cell = Cell::kGru;
  std::size_t n_layers = 2;
  std::size_t hidden_dim = 20;
  double dropout = 0.2;

  /// Number of stacked gate blocks per layer: 1 (vanilla), 3 (GRU), 4 (LSTM).
  std::size_t gate_blocks() const;
  std::size_t input_dim(std::size_t layer) const { return layer == 0 ? 1 : hidden_dim; }
  void validate() const;

  /// GRU, 2 layers of 20, dropout 0.2.
  static RnnSpec baseline();
  friend bool operator==(const RnnSpec&, const RnnSpec&) = default;
};

void to_json(nlohmann::json& j, const RnnSpec& s);
void from_json(const nlohmann::json& j, RnnSpec& s);

/// All weights in one flat buffer; views address the blocks. Gradients use
/// the same type and layout.
///
/// Layer l holds W^x (G*H x in_dim), W^h (G*H x H) and bias (G*H), with the
/// gate blocks stacked in the order r,z,n (GRU) or i,f,g,o (LSTM). The
/// read-out maps the last layer's state to three logits.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(const RnnSpec& spec);

  const RnnSpec& spec() const { return spec_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  numeric::MatrixView wx(std::size_t layer);
  numeric::MatrixView wh(std::size_t layer);
  std::span<double> bias(std::size_t layer);
  numeric::MatrixView w_out();
  std::span<double> b_out();

  numeric::ConstMatrixView wx(std::size_t layer) const;
  numeric::ConstMatrixView wh(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;
  numeric::ConstMatrixView w_out() const;
  std::span<const double> b_out() const;

  bool all_finite() const;
  void fill(double v);
  /// Uniform in +-1/sqrt(hidden_dim).
  void init_uniform(Rng& rng);

 private:
  struct LayerOffsets {
    std::size_t wx = 0, wh = 0, b = 0;
  };
  RnnSpec spec_;
  std::vector<LayerOffsets> layers_;
  std::size_t w_out_ = 0, b_out_ = 0;
  std::vector<double> values_;
};

using Gradients = ModelParams;

/// Activations retained by forward() for backpropagation through time.
struct ForwardCache {
  struct Layer {
    std::vector<double> input;  // T x in_dim, after dropout
    std::vector<double> gates;  // T x G*H, post-activation
    std::vector<double> h;      // T x H
    std::vector<double> c;      // T x H, LSTM cell state
    std::vector<double> mask;   // T x in_dim dropout scale, empty when off
  };
  std::size_t steps = 0;
  std::vector<Layer> layers;
  ProbSeq probs;
};

/// Inference pass: dropout is never applied.
ProbSeq forward(const ModelParams& params, std::span<const double> inputs);

/// Forward pass keeping every activation. When `dropout_rng` is given and
/// the spec's dropout is positive, inverted dropout is applied to the
/// inputs of every layer above the first.
ForwardCache forward_cached(const ModelParams& params, std::span<const double> inputs,
                            Rng* dropout_rng = nullptr);

/// Mean per-step cross-entropy.
double sequence_loss(const ProbSeq& probs, const LabelSeq& targets);

/// Exact gradient of sequence_loss through the cached unrolling.
Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   const LabelSeq& targets);

/// Last-layer hidden state at every step (T x hidden_dim).
std::vector<std::vector<double>> hidden_states(const ModelParams& params,
                                               std::span<const double> inputs);

enum class Optimizer { kAdam, kRmsprop };
std::string_view to_string(Optimizer o);
Optimizer parse_optimizer(std::string_view s);

struct OptimState {
  Optimizer algorithm = Optimizer::kAdam;
  double learning_rate = 0.005;
  std::vector<double> m;  // first moment (Adam only)
  std::vector<double> v;  // second moment, elementwise >= 0
  long step = 0;

  static constexpr double kAdamBeta1 = 0.9;
  static constexpr double kAdamBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  static constexpr double kRmsDecay = 0.99;

  OptimState() = default;
  OptimState(Optimizer alg, double lr, std::size_t n_params)
      : algorithm(alg), learning_rate(lr), m(n_params, 0.0), v(n_params, 0.0) {}
};

void adam_step(OptimState& state, std::span<double> params, std::span<const double> grads);
void rmsprop_step(OptimState& state, std::span<double> params, std::span<const double> grads);
void optimizer_step(OptimState& state, std::span<double> params, std::span<const double> grads);

/// First differences scaled by a global constant; step 0 gets 0.
std::vector<double> preprocess(std::span<const double> y, double scale);

/// Median absolute increment over every series of a dataset (1 when zero).
double robust_increment_scale(const simgen::Dataset& ds);

struct TrainOptions {
  Optimizer optimizer = Optimizer::kAdam;
  double learning_rate = 0.005;
  int epochs = 200;
  std::uint64_t seed = 0;
  /// Overrides the spec's dropout when set.
  std::optional<double> dropout;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

void to_json(nlohmann::json& j, const TrainOptions& o);

struct TrainResult {
  ModelParams params;
  double input_scale = 1.0;
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
  bool failed = false;
  std::string failure_reason;
};

/// Full-sequence BPTT, one series per optimizer step, series visited in a
/// seeded random order each epoch. Declares failure on a non-finite loss
/// or when the epoch loss exceeds 10x the initial loss for 3 consecutive
/// epochs.
TrainResult train(const RnnSpec& spec, const simgen::Dataset& dataset, const TrainOptions& opts);

/// Trained network plus its input preprocessing.
struct RnnModel {
  ModelParams params;
  double input_scale = 1.0;
  nlohmann::json metadata = nlohmann::json::object();

  ProbSeq predict(const Series& s) const;
  std::vector<std::vector<double>> states(const Series& s) const;
};

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const RnnModel& m);
RnnModel model_from_json(const nlohmann::json& j);
void save_model(const RnnModel& m, const std::string& path);
RnnModel load_model(const std::string& path);

}  // namespace trendlab::tensornet
