#include "trendlab/tensornet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace trendlab::tensornet {

using nlohmann::json;
using numeric::ConstMatrixView;
using numeric::MatrixView;

std::string_view to_string(Cell c) {
  switch (c) {
    case Cell::kVanilla:
      return "vanilla";
    case Cell::kGru:
      return "gru";
    case Cell::kLstm:
      return "lstm";
  }
  return "unknown";
}

Cell parse_cell(std::string_view s) {
  if (s == "vanilla" || s == "rnn") return Cell::kVanilla;
  if (s == "gru") return Cell::kGru;
  if (s == "lstm") return Cell::kLstm;
  throw ConfigError("unknown cell type: " + std::string(s));
}

std::size_t RnnSpec::gate_blocks() const {
  switch (cell) {
    case Cell::kVanilla:
      return 1;
    case Cell::kGru:
      return 3;
    case Cell::kLstm:
      return 4;
  }
  return 1;
}

void RnnSpec::validate() const {
  if (n_layers < 1) throw ConfigError("rnn: n_layers must be >= 1");
  if (hidden_dim < 1) throw ConfigError("rnn: hidden_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("rnn: dropout must be in [0, 1)");
}

RnnSpec RnnSpec::baseline() { return RnnSpec{Cell::kGru, 2, 20, 0.2}; }

void to_json(json& j, const RnnSpec& s) {
  j = json{{"cell", std::string(to_string(s.cell))},
           {"n_layers", s.n_layers},
           {"hidden_dim", s.hidden_dim},
           {"dropout", s.dropout},
           {"out_classes", RnnSpec::kOutClasses}};
}

void from_json(const json& j, RnnSpec& s) {
  s.cell = parse_cell(j.at("cell").get<std::string>());
  s.n_layers = j.at("n_layers").get<std::size_t>();
  s.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  s.dropout = j.value("dropout", 0.0);
  if (j.value("out_classes", RnnSpec::kOutClasses) != RnnSpec::kOutClasses) {
    throw ShapeError("rnn: out_classes must be 3");
  }
  s.validate();
}

ModelParams::ModelParams(const RnnSpec& spec) : spec_(spec) {
  spec_.validate();
  const std::size_t H = spec_.hidden_dim;
  const std::size_t GH = spec_.gate_blocks() * H;
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec_.n_layers; ++l) {
    LayerOffsets lo;
    lo.wx = off;
    off += GH * spec_.input_dim(l);
    lo.wh = off;
    off += GH * H;
    lo.b = off;
    off += GH;
    layers_.push_back(lo);
  }
  w_out_ = off;
  off += RnnSpec::kOutClasses * H;
  b_out_ = off;
  off += RnnSpec::kOutClasses;
  values_.assign(off, 0.0);
}

MatrixView ModelParams::wx(std::size_t l) {
  return {values_.data() + layers_[l].wx, spec_.gate_blocks() * spec_.hidden_dim,
          spec_.input_dim(l)};
}
MatrixView ModelParams::wh(std::size_t l) {
  return {values_.data() + layers_[l].wh, spec_.gate_blocks() * spec_.hidden_dim,
          spec_.hidden_dim};
}
std::span<double> ModelParams::bias(std::size_t l) {
  return {values_.data() + layers_[l].b, spec_.gate_blocks() * spec_.hidden_dim};
}
MatrixView ModelParams::w_out() {
  return {values_.data() + w_out_, RnnSpec::kOutClasses, spec_.hidden_dim};
}
std::span<double> ModelParams::b_out() { return {values_.data() + b_out_, RnnSpec::kOutClasses}; }

ConstMatrixView ModelParams::wx(std::size_t l) const {
  return {values_.data() + layers_[l].wx, spec_.gate_blocks() * spec_.hidden_dim,
          spec_.input_dim(l)};
}
ConstMatrixView ModelParams::wh(std::size_t l) const {
  return {values_.data() + layers_[l].wh, spec_.gate_blocks() * spec_.hidden_dim,
          spec_.hidden_dim};
}
std::span<const double> ModelParams::bias(std::size_t l) const {
  return {values_.data() + layers_[l].b, spec_.gate_blocks() * spec_.hidden_dim};
}
ConstMatrixView ModelParams::w_out() const {
  return {values_.data() + w_out_, RnnSpec::kOutClasses, spec_.hidden_dim};
}
std::span<const double> ModelParams::b_out() const {
  return {values_.data() + b_out_, RnnSpec::kOutClasses};
}

bool ModelParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void ModelParams::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void ModelParams::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.hidden_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : values_) v = dist(rng);
}

namespace {

using numeric::sigmoid;

// Rows [first, first + count) of a stacked gate matrix.
ConstMatrixView row_block(ConstMatrixView m, std::size_t first, std::size_t count) {
  return {m.data + first * m.cols, count, m.cols};
}
MatrixView row_block(MatrixView m, std::size_t first, std::size_t count) {
  return {m.data + first * m.cols, count, m.cols};
}

void forward_layer(const ModelParams& p, std::size_t l, ForwardCache::Layer& L,
                   std::size_t T) {
  const auto& spec = p.spec();
  const std::size_t H = spec.hidden_dim;
  const std::size_t G = spec.gate_blocks();
  const std::size_t in = spec.input_dim(l);
  const auto wx = p.wx(l);
  const auto wh = p.wh(l);
  const auto b = p.bias(l);

  L.gates.assign(T * G * H, 0.0);
  L.h.assign(T * H, 0.0);
  if (spec.cell == Cell::kLstm) L.c.assign(T * H, 0.0);

  std::vector<double> zeros(H, 0.0);
  std::vector<double> pre(G * H);
  std::vector<double> rh(H);
  for (std::size_t t = 0; t < T; ++t) {
    std::span<const double> x(L.input.data() + t * in, in);
    std::span<const double> hprev = t == 0 ? std::span<const double>(zeros)
                                           : std::span<const double>(L.h.data() + (t - 1) * H, H);
    std::span<double> gates(L.gates.data() + t * G * H, G * H);
    std::span<double> h(L.h.data() + t * H, H);

    std::copy(b.begin(), b.end(), pre.begin());
    numeric::gemv_acc(wx, x, pre);
    switch (spec.cell) {
      case Cell::kVanilla: {
        numeric::gemv_acc(wh, hprev, pre);
        for (std::size_t k = 0; k < H; ++k) h[k] = gates[k] = std::tanh(pre[k]);
        break;
      }
      case Cell::kGru: {
        std::span<double> pre_rz(pre.data(), 2 * H);
        numeric::gemv_acc(row_block(wh, 0, 2 * H), hprev, pre_rz);
        for (std::size_t k = 0; k < 2 * H; ++k) gates[k] = sigmoid(pre[k]);
        for (std::size_t k = 0; k < H; ++k) rh[k] = gates[k] * hprev[k];
        std::span<double> pre_n(pre.data() + 2 * H, H);
        numeric::gemv_acc(row_block(wh, 2 * H, H), rh, pre_n);
        for (std::size_t k = 0; k < H; ++k) {
          const double n = std::tanh(pre_n[k]);
          const double z = gates[H + k];
          gates[2 * H + k] = n;
          h[k] = z * hprev[k] + (1.0 - z) * n;
        }
        break;
      }
      case Cell::kLstm: {
        numeric::gemv_acc(wh, hprev, pre);
        std::span<const double> cprev =
            t == 0 ? std::span<const double>(zeros)
                   : std::span<const double>(L.c.data() + (t - 1) * H, H);
        std::span<double> c(L.c.data() + t * H, H);
        for (std::size_t k = 0; k < H; ++k) {
          const double i = sigmoid(pre[k]);
          const double f = sigmoid(pre[H + k]);
          const double g = std::tanh(pre[2 * H + k]);
          const double o = sigmoid(pre[3 * H + k]);
          gates[k] = i;
          gates[H + k] = f;
          gates[2 * H + k] = g;
          gates[3 * H + k] = o;
          c[k] = f * cprev[k] + i * g;
          h[k] = o * std::tanh(c[k]);
        }
        break;
      }
    }
  }
}

// Backpropagates dh_above (T x H, gradient of the loss w.r.t. this layer's
// outputs from everything above) through time. Accumulates weight
// gradients into `g` and, when `dinput` is non-null, writes the gradient
// w.r.t. the layer inputs (T x in_dim).
void backward_layer(const ModelParams& p, std::size_t l, const ForwardCache::Layer& L,
                    std::size_t T, std::span<const double> dh_above, Gradients& g,
                    std::vector<double>* dinput) {
  const auto& spec = p.spec();
  const std::size_t H = spec.hidden_dim;
  const std::size_t G = spec.gate_blocks();
  const std::size_t in = spec.input_dim(l);
  const auto wx = p.wx(l);
  const auto wh = p.wh(l);
  auto gwx = g.wx(l);
  auto gwh = g.wh(l);
  auto gb = g.bias(l);

  if (dinput) dinput->assign(T * in, 0.0);
  std::vector<double> zeros(H, 0.0);
  std::vector<double> dh(H), dh_next(H, 0.0), dc_next(H, 0.0);
  std::vector<double> dpre(G * H), drh(H), rh(H);

  for (std::size_t t = T; t-- > 0;) {
    std::span<const double> x(L.input.data() + t * in, in);
    std::span<const double> gates(L.gates.data() + t * G * H, G * H);
    std::span<const double> h(L.h.data() + t * H, H);
    std::span<const double> hprev = t == 0 ? std::span<const double>(zeros)
                                           : std::span<const double>(L.h.data() + (t - 1) * H, H);
    for (std::size_t k = 0; k < H; ++k) dh[k] = dh_above[t * H + k] + dh_next[k];

    switch (spec.cell) {
      case Cell::kVanilla: {
        for (std::size_t k = 0; k < H; ++k) dpre[k] = dh[k] * (1.0 - h[k] * h[k]);
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        numeric::gemv_t_acc(wh, dpre, dh_next);
        numeric::outer_acc(dpre, hprev, gwh);
        break;
      }
      case Cell::kGru: {
        for (std::size_t k = 0; k < H; ++k) {
          const double r = gates[k];
          const double z = gates[H + k];
          const double n = gates[2 * H + k];
          const double dn = dh[k] * (1.0 - z);
          const double dz = dh[k] * (hprev[k] - n);
          dh_next[k] = dh[k] * z;
          dpre[2 * H + k] = dn * (1.0 - n * n);
          dpre[H + k] = dz * z * (1.0 - z);
          (void)r;
        }
        std::span<const double> dpre_n(dpre.data() + 2 * H, H);
        std::fill(drh.begin(), drh.end(), 0.0);
        numeric::gemv_t_acc(row_block(wh, 2 * H, H), dpre_n, drh);
        for (std::size_t k = 0; k < H; ++k) {
          const double r = gates[k];
          rh[k] = r * hprev[k];
          dh_next[k] += drh[k] * r;
          dpre[k] = drh[k] * hprev[k] * r * (1.0 - r);
        }
        numeric::outer_acc(dpre_n, rh, row_block(gwh, 2 * H, H));
        std::span<const double> dpre_rz(dpre.data(), 2 * H);
        numeric::outer_acc(dpre_rz, hprev, row_block(gwh, 0, 2 * H));
        numeric::gemv_t_acc(row_block(wh, 0, 2 * H), dpre_rz, dh_next);
        break;
      }
      case Cell::kLstm: {
        std::span<const double> c(L.c.data() + t * H, H);
        std::span<const double> cprev = t == 0
                                            ? std::span<const double>(zeros)
                                            : std::span<const double>(L.c.data() + (t - 1) * H, H);
        for (std::size_t k = 0; k < H; ++k) {
          const double i = gates[k];
          const double f = gates[H + k];
          const double gg = gates[2 * H + k];
          const double o = gates[3 * H + k];
          const double tc = std::tanh(c[k]);
          const double dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
          dpre[k] = dc * gg * i * (1.0 - i);
          dpre[H + k] = dc * cprev[k] * f * (1.0 - f);
          dpre[2 * H + k] = dc * i * (1.0 - gg * gg);
          dpre[3 * H + k] = dh[k] * tc * o * (1.0 - o);
          dc_next[k] = dc * f;
        }
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        numeric::gemv_t_acc(wh, dpre, dh_next);
        numeric::outer_acc(dpre, hprev, gwh);
        break;
      }
    }
    numeric::outer_acc(dpre, x, gwx);
    numeric::axpy(1.0, dpre, gb);
    if (dinput) {
      numeric::gemv_t_acc(wx, dpre, std::span<double>(dinput->data() + t * in, in));
    }
  }
}

void check_inputs(std::span<const double> inputs) {
  if (inputs.empty()) throw InputError("rnn: empty input sequence");
  for (double v : inputs) {
    if (!std::isfinite(v)) throw InputError("rnn: non-finite value in input sequence");
  }
}

}  // namespace

ForwardCache forward_cached(const ModelParams& params, std::span<const double> inputs,
                            Rng* dropout_rng) {
  check_inputs(inputs);
  const auto& spec = params.spec();
  const std::size_t T = inputs.size();
  const std::size_t H = spec.hidden_dim;
  ForwardCache cache;
  cache.steps = T;
  cache.layers.resize(spec.n_layers);

  cache.layers[0].input.assign(inputs.begin(), inputs.end());
  forward_layer(params, 0, cache.layers[0], T);
  const bool use_dropout = dropout_rng != nullptr && spec.dropout > 0.0;
  for (std::size_t l = 1; l < spec.n_layers; ++l) {
    auto& L = cache.layers[l];
    L.input = cache.layers[l - 1].h;
    if (use_dropout) {
      std::bernoulli_distribution keep(1.0 - spec.dropout);
      const double scale = 1.0 / (1.0 - spec.dropout);
      L.mask.resize(L.input.size());
      for (std::size_t k = 0; k < L.input.size(); ++k) {
        L.mask[k] = keep(*dropout_rng) ? scale : 0.0;
        L.input[k] *= L.mask[k];
      }
    }
    forward_layer(params, l, L, T);
  }

  const auto& top = cache.layers.back().h;
  const auto w_out = params.w_out();
  const auto b_out = params.b_out();
  cache.probs.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::array<double, 3> logits{b_out[0], b_out[1], b_out[2]};
    numeric::gemv_acc(w_out, std::span<const double>(top.data() + t * H, H), logits);
    cache.probs[t].p = numeric::softmax(logits);
  }
  return cache;
}

ProbSeq forward(const ModelParams& params, std::span<const double> inputs) {
  return forward_cached(params, inputs, nullptr).probs;
}

std::vector<std::vector<double>> hidden_states(const ModelParams& params,
                                               std::span<const double> inputs) {
  const auto cache = forward_cached(params, inputs, nullptr);
  const std::size_t H = params.spec().hidden_dim;
  const auto& top = cache.layers.back().h;
  std::vector<std::vector<double>> out(cache.steps);
  for (std::size_t t = 0; t < cache.steps; ++t) {
    out[t].assign(top.begin() + t * H, top.begin() + (t + 1) * H);
  }
  return out;
}

double sequence_loss(const ProbSeq& probs, const LabelSeq& targets) {
  if (probs.size() != targets.size() || probs.empty()) {
    throw InputError("loss: prediction/target length mismatch");
  }
  double s = 0.0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    s -= std::log(std::max(probs[t].p[targets[t].index()], 1e-300));
  }
  return s / static_cast<double>(probs.size());
}

Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   const LabelSeq& targets) {
  const std::size_t T = cache.steps;
  if (targets.size() != T) throw InputError("backward: target length mismatch");
  const auto& spec = params.spec();
  const std::size_t H = spec.hidden_dim;
  Gradients g(spec);

  // Read-out: d loss / d logits = (p - onehot) / T.
  std::vector<double> dh_above(T * H, 0.0);
  const auto& top = cache.layers.back().h;
  auto gw_out = g.w_out();
  auto gb_out = g.b_out();
  const auto w_out = params.w_out();
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::array<double, 3> dlogits{};
    for (std::size_t k = 0; k < 3; ++k) {
      dlogits[k] = (cache.probs[t].p[k] - (targets[t].index() == k ? 1.0 : 0.0)) * inv_t;
    }
    std::span<const double> h(top.data() + t * H, H);
    numeric::outer_acc(dlogits, h, gw_out);
    numeric::axpy(1.0, dlogits, gb_out);
    numeric::gemv_t_acc(w_out, dlogits, std::span<double>(dh_above.data() + t * H, H));
  }

  std::vector<double> dinput;
  for (std::size_t l = spec.n_layers; l-- > 0;) {
    const auto& L = cache.layers[l];
    backward_layer(params, l, L, T, dh_above, g, l > 0 ? &dinput : nullptr);
    if (l > 0) {
      if (!L.mask.empty()) {
        for (std::size_t k = 0; k < dinput.size(); ++k) dinput[k] *= L.mask[k];
      }
      dh_above.swap(dinput);
    }
  }
  return g;
}

std::string_view to_string(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "rmsprop"; }

Optimizer parse_optimizer(std::string_view s) {
  if (s == "adam") return Optimizer::kAdam;
  if (s == "rmsprop" || s == "rmsp") return Optimizer::kRmsprop;
  throw ConfigError("unknown optimizer: " + std::string(s));
}

namespace {
void check_shapes(const OptimState& st, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || st.v.size() != params.size()) {
    throw ShapeError("optimizer: parameter/gradient/state shape mismatch");
  }
}
}  // namespace

void adam_step(OptimState& st, std::span<double> params, std::span<const double> grads) {
  check_shapes(st, params, grads);
  if (st.m.size() != params.size()) throw ShapeError("optimizer: first-moment shape mismatch");
  ++st.step;
  const double b1 = OptimState::kAdamBeta1;
  const double b2 = OptimState::kAdamBeta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
    const double m_hat = st.m[i] / c1;
    const double v_hat = st.v[i] / c2;
    params[i] -= st.learning_rate * m_hat / (std::sqrt(v_hat) + OptimState::kEps);
  }
}

void rmsprop_step(OptimState& st, std::span<double> params, std::span<const double> grads) {
  check_shapes(st, params, grads);
  ++st.step;
  const double d = OptimState::kRmsDecay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.v[i] = d * st.v[i] + (1.0 - d) * g * g;
    params[i] -= st.learning_rate * g / std::sqrt(st.v[i] + OptimState::kEps);
  }
}

void optimizer_step(OptimState& st, std::span<double> params, std::span<const double> grads) {
  if (st.algorithm == Optimizer::kAdam) {
    adam_step(st, params, grads);
  } else {
    rmsprop_step(st, params, grads);
  }
}

std::vector<double> preprocess(std::span<const double> y, double scale) {
  if (y.empty()) throw InputError("rnn: empty series");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InputError("rnn: input scale must be > 0");
  std::vector<double> out(y.size(), 0.0);
  for (std::size_t t = 1; t < y.size(); ++t) out[t] = (y[t] - y[t - 1]) / scale;
  return out;
}

double robust_increment_scale(const simgen::Dataset& ds) {
  std::vector<double> inc;
  for (const auto& s : ds.series) {
    for (std::size_t t = 1; t < s.y.size(); ++t) inc.push_back(std::abs(s.y[t] - s.y[t - 1]));
  }
  if (inc.empty()) return 1.0;
  const double m = numeric::median(std::move(inc));
  return m > 0.0 && std::isfinite(m) ? m : 1.0;
}

void to_json(json& j, const TrainOptions& o) {
  j = json{{"optimizer", std::string(to_string(o.optimizer))},
           {"learning_rate", o.learning_rate},
           {"epochs", o.epochs},
           {"seed", o.seed},
           {"clip_norm", o.clip_norm}};
  if (o.dropout) j["dropout"] = *o.dropout;
}

TrainResult train(const RnnSpec& spec_in, const simgen::Dataset& dataset,
                  const TrainOptions& opts) {
  if (dataset.role != simgen::Role::kTrain) {
    throw ConfigError("train: dataset role must be 'train'");
  }
  if (dataset.series.empty()) throw InputError("train: empty dataset");
  if (opts.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(opts.learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
  RnnSpec spec = spec_in;
  if (opts.dropout) spec.dropout = *opts.dropout;
  spec.validate();

  TrainResult res;
  res.params = ModelParams(spec);
  Rng init_rng = make_rng(derive_seed(opts.seed, 0));
  res.params.init_uniform(init_rng);
  res.input_scale = robust_increment_scale(dataset);

  const std::size_t n = dataset.series.size();
  std::vector<std::vector<double>> inputs(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs[i] = preprocess(dataset.series[i].y, res.input_scale);
  }

  double init_loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    init_loss += sequence_loss(forward(res.params, inputs[i]), dataset.series[i].labels);
  }
  res.initial_loss = init_loss / static_cast<double>(n);
  if (opts.epochs == 0) return res;

  OptimState state(opts.optimizer, opts.learning_rate, res.params.size());
  std::vector<std::size_t> order(n);
  int blowup_streak = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_rng(derive_seed(opts.seed, {1, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng dropout_rng = make_rng(derive_seed(opts.seed, {2, static_cast<std::uint64_t>(epoch)}));

    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      const auto& s = dataset.series[idx];
      const auto cache = forward_cached(res.params, inputs[idx], &dropout_rng);
      const double loss = sequence_loss(cache.probs, s.labels);
      if (!std::isfinite(loss)) {
        res.failed = true;
        res.failure_reason = "non-finite loss at epoch " + std::to_string(epoch + 1);
        return res;
      }
      epoch_loss += loss;
      auto grads = backward(res.params, cache, s.labels);
      if (opts.clip_norm > 0.0) {
        const double norm = numeric::l2_norm(grads.values());
        if (norm > opts.clip_norm) {
          for (auto& v : grads.values()) v *= opts.clip_norm / norm;
        }
      }
      optimizer_step(state, res.params.values(), grads.values());
    }
    epoch_loss /= static_cast<double>(n);
    res.epoch_loss.push_back(epoch_loss);
    if (!res.params.all_finite()) {
      res.failed = true;
      res.failure_reason = "non-finite weights at epoch " + std::to_string(epoch + 1);
      return res;
    }
    blowup_streak = epoch_loss > 10.0 * res.initial_loss ? blowup_streak + 1 : 0;
    if (blowup_streak >= 3) {
      res.failed = true;
      res.failure_reason = "loss above 10x initial for 3 consecutive epochs";
      return res;
    }
  }
  return res;
}

ProbSeq RnnModel::predict(const Series& s) const {
  return forward(params, preprocess(s.y, input_scale));
}

std::vector<std::vector<double>> RnnModel::states(const Series& s) const {
  return hidden_states(params, preprocess(s.y, input_scale));
}

namespace {

json matrix_json(ConstMatrixView m) {
  return json{{"shape", {m.rows, m.cols}},
              {"data", std::vector<double>(m.data, m.data + m.size())}};
}

void read_matrix(const json& j, MatrixView dst, const std::string& what) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2 || shape[0] != dst.rows || shape[1] != dst.cols) {
    throw ShapeError("model: shape mismatch for " + what);
  }
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != dst.size()) throw ShapeError("model: data length mismatch for " + what);
  std::copy(data.begin(), data.end(), dst.data);
}

}  // namespace

json model_to_json(const RnnModel& m) {
  const auto& p = m.params;
  json layers = json::array();
  for (std::size_t l = 0; l < p.spec().n_layers; ++l) {
    const auto b = p.bias(l);
    layers.push_back(json{{"wx", matrix_json(p.wx(l))},
                          {"wh", matrix_json(p.wh(l))},
                          {"b", matrix_json(ConstMatrixView(b.data(), 1, b.size()))}});
  }
  const auto bo = p.b_out();
  return json{{"format_version", kModelFormatVersion},
              {"kind", "rnn"},
              {"spec", p.spec()},
              {"preprocessing", {{"kind", "scaled_first_difference"}, {"scale", m.input_scale}}},
              {"weights",
               {{"layers", layers},
                {"readout",
                 {{"w", matrix_json(p.w_out())},
                  {"b", matrix_json(ConstMatrixView(bo.data(), 1, bo.size()))}}}}},
              {"metadata", m.metadata}};
}

RnnModel model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw FormatError("model: unsupported format_version");
    }
    if (j.at("kind").get<std::string>() != "rnn") throw FormatError("model: kind is not 'rnn'");
    RnnModel m;
    m.params = ModelParams(j.at("spec").get<RnnSpec>());
    m.input_scale = j.at("preprocessing").at("scale").get<double>();
    const auto& w = j.at("weights");
    const auto& layers = w.at("layers");
    if (layers.size() != m.params.spec().n_layers) throw ShapeError("model: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto tag = "layer " + std::to_string(l);
      read_matrix(layers[l].at("wx"), m.params.wx(l), tag + " wx");
      read_matrix(layers[l].at("wh"), m.params.wh(l), tag + " wh");
      auto b = m.params.bias(l);
      read_matrix(layers[l].at("b"), MatrixView{b.data(), 1, b.size()}, tag + " b");
    }
    read_matrix(w.at("readout").at("w"), m.params.w_out(), "readout w");
    auto bo = m.params.b_out();
    read_matrix(w.at("readout").at("b"), MatrixView{bo.data(), 1, bo.size()}, "readout b");
    if (!m.params.all_finite()) throw FormatError("model: non-finite weights");
    m.metadata = j.value("metadata", json::object());
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: corrupt file: ") + e.what());
  }
}

void save_model(const RnnModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << model_to_json(m).dump(1) << '\n';
}

RnnModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("model: corrupt file: " + std::string(e.what()));
  }
  return model_from_json(j);
}

}  // namespace trendlab::tensornet
