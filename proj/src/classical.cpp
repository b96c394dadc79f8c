#include "trendlab/classical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trendlab/evalkit.hpp"
#include "trendlab/parallel.hpp"
#include "trendlab/rng.hpp"

namespace trendlab::classical {

using nlohmann::json;

void MaConfig::validate() const {
  if (!(mu_fast > 0.0 && mu_fast < mu_slow && mu_slow < 1.0)) {
    throw ConfigError("ma: need 0 < mu_fast < mu_slow < 1");
  }
  if (!(epsilon >= 0.0)) throw ConfigError("ma: epsilon must be >= 0");
}

void to_json(json& j, const MaConfig& c) {
  j = json{{"mu_slow", c.mu_slow}, {"mu_fast", c.mu_fast}, {"epsilon", c.epsilon}};
}

void from_json(const json& j, MaConfig& c) {
  c.mu_slow = j.value("mu_slow", c.mu_slow);
  c.mu_fast = j.value("mu_fast", c.mu_fast);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.validate();
}

LabelSeq ma_classify(const MaConfig& cfg, std::span<const double> x) {
  cfg.validate();
  if (x.empty()) throw InputError("ma: empty series");
  LabelSeq out(x.size());
  double slow = x[0];
  double fast = x[0];
  for (std::size_t t = 0; t < x.size(); ++t) {
    slow = cfg.mu_slow * slow + (1.0 - cfg.mu_slow) * x[t];
    fast = cfg.mu_fast * fast + (1.0 - cfg.mu_fast) * x[t];
    const double d = fast - slow;
    out[t] = d > cfg.epsilon ? TrendLabel::kUp : d < -cfg.epsilon ? TrendLabel::kDown
                                                                   : TrendLabel::kFlat;
  }
  return out;
}

MaGrid MaGrid::defaults() {
  MaGrid g;
  for (int k = 1; k <= 19; ++k) g.mu_values.push_back(0.05 * k);
  for (int k = 0; k <= 10; ++k) g.eps_values.push_back(0.05 * k);
  return g;
}

MaSearchResult ma_grid_search(const simgen::Dataset& ds, const MaGrid& grid) {
  if (ds.series.empty()) throw InputError("ma search: empty dataset");
  std::vector<MaConfig> candidates;
  for (double slow : grid.mu_values) {
    for (double fast : grid.mu_values) {
      if (!(fast < slow)) continue;
      for (double eps : grid.eps_values) candidates.push_back({slow, fast, eps});
    }
  }
  if (candidates.empty()) throw ConfigError("ma search: empty grid");
  std::vector<double> score(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t c) {
    std::vector<double> losses;
    losses.reserve(ds.series.size());
    for (const auto& s : ds.series) {
      losses.push_back(evalkit::series_loss(ma_classify(candidates[c], s.y), s.labels));
    }
    score[c] = numeric::median(std::move(losses));
  });
  const auto best = std::min_element(score.begin(), score.end()) - score.begin();
  return {candidates[best], score[best]};
}

void ConvexNetParams::validate() const {
  const std::size_t m = dim();
  if (m == 0) throw ParamError("convex net: dimension must be >= 1");
  if (w_hh.rows() != m || w_hh.cols() != m || w_out.rows() != 3 || w_out.cols() != m) {
    throw ParamError("convex net: inconsistent shapes");
  }
  for (std::size_t i = 0; i < m; ++i) {
    double s = w_ih[i];
    if (!(w_ih[i] >= 0.0)) throw ParamError("convex net: negative input weight");
    for (std::size_t j = 0; j < m; ++j) {
      if (!(w_hh(i, j) >= 0.0)) throw ParamError("convex net: negative recurrent weight");
      s += w_hh(i, j);
    }
    if (std::abs(s - 1.0) > 1e-12) {
      throw ParamError("convex net: row " + std::to_string(i) + " does not sum to 1");
    }
  }
  for (double v : w_out.values()) {
    if (!std::isfinite(v)) throw ParamError("convex net: non-finite read-out");
  }
  if (!(spectral_radius(w_hh) < 1.0)) {
    throw ParamError("convex net: spectral radius of W_hh is not below 1");
  }
}

ConvexNetParams ConvexNetParams::ema_bank(std::size_t m) {
  if (m == 0) throw ParamError("convex net: dimension must be >= 1");
  ConvexNetParams p;
  p.w_hh = numeric::Matrix(m, m);
  p.w_ih.assign(m, 0.0);
  p.w_out = numeric::Matrix(3, m);
  for (std::size_t i = 0; i < m; ++i) {
    const double alpha = m == 1 ? 0.5 : 0.3 + 0.65 * static_cast<double>(i) / (m - 1);
    p.w_hh(i, i) = alpha;
    p.w_ih[i] = 1.0 - alpha;
  }
  return p;
}

void project_row(std::span<double> row) {
  double s = 0.0;
  for (auto& v : row) {
    if (!(v > 0.0)) v = 0.0;
    s += v;
  }
  if (s <= 0.0) {
    std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(row.size()));
    return;
  }
  for (auto& v : row) v /= s;
}

void project_stochastic(ConvexNetParams& p) {
  const std::size_t m = p.dim();
  std::vector<double> row(m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) row[j] = p.w_hh(i, j);
    row[m] = p.w_ih[i];
    project_row(row);
    // A zero input weight would leave W_hh with a unit row sum and an
    // eigenvalue on the unit circle.
    if (row[m] < kMinInputWeight) {
      const double keep = (1.0 - kMinInputWeight) / (1.0 - row[m]);
      for (std::size_t j = 0; j < m; ++j) row[j] *= keep;
      row[m] = kMinInputWeight;
    }
    for (std::size_t j = 0; j < m; ++j) p.w_hh(i, j) = row[j];
    p.w_ih[i] = row[m];
  }
}

double spectral_radius(const numeric::Matrix& w) {
  const std::size_t n = w.rows();
  if (n == 0 || w.cols() != n) throw ShapeError("spectral radius: matrix must be square");
  std::vector<double> x(n, 1.0), y(n);
  double upper = 0.0;
  for (int it = 0; it < 2000; ++it) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) y[i] += std::abs(w(i, j)) * x[j];
    }
    upper = 0.0;
    double ymax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] > 0.0) upper = std::max(upper, y[i] / x[i]);
      ymax = std::max(ymax, y[i]);
    }
    if (ymax == 0.0) return 0.0;
    // Small floor keeps every coordinate positive, so the bound stays valid
    // for reducible matrices.
    for (std::size_t i = 0; i < n; ++i) x[i] = std::max(y[i] / ymax, 1e-300);
  }
  return upper;
}

namespace {

ConvexTrajectory convex_run(const ConvexNetParams& p, std::span<const double> y) {
  if (y.empty()) throw InputError("convex net: empty series");
  const std::size_t m = p.dim();
  ConvexTrajectory out;
  out.states.resize(y.size());
  out.probs.resize(y.size());
  out.labels.resize(y.size());
  std::vector<double> h(m), next(m);
  for (std::size_t i = 0; i < m; ++i) h[i] = y[0] * p.w_ih[i];
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (t > 0) {
      for (std::size_t i = 0; i < m; ++i) next[i] = y[t] * p.w_ih[i];
      numeric::gemv_acc(p.w_hh.view(), h, next);
      h.swap(next);
    }
    std::array<double, 3> logits = p.b_out;
    numeric::gemv_acc(p.w_out.view(), h, logits);
    out.states[t] = h;
    out.labels[t] = argmax_label(logits);
    out.probs[t].p = numeric::softmax(logits);
  }
  return out;
}

// Flat parameter vector: W_hh, w_ih, W_out, b_out.
std::vector<double> pack(const ConvexNetParams& p) {
  std::vector<double> v = p.w_hh.values();
  v.insert(v.end(), p.w_ih.begin(), p.w_ih.end());
  v.insert(v.end(), p.w_out.values().begin(), p.w_out.values().end());
  v.insert(v.end(), p.b_out.begin(), p.b_out.end());
  return v;
}

void unpack(std::span<const double> v, ConvexNetParams& p) {
  const std::size_t m = p.dim();
  auto it = v.begin();
  std::copy(it, it + m * m, p.w_hh.values().begin());
  it += m * m;
  std::copy(it, it + m, p.w_ih.begin());
  it += m;
  std::copy(it, it + 3 * m, p.w_out.values().begin());
  it += 3 * m;
  std::copy(it, it + 3, p.b_out.begin());
}

double convex_loss(const ConvexNetParams& p, const Series& s) {
  return tensornet::sequence_loss(convex_run(p, s.y).probs, s.labels);
}

// Loss and gradient in packed layout.
double convex_grad(const ConvexNetParams& p, const Series& s, std::vector<double>& g) {
  const std::size_t m = p.dim();
  const std::size_t T = s.y.size();
  const auto fwd = convex_run(p, s.y);
  const double loss = tensornet::sequence_loss(fwd.probs, s.labels);
  g.assign(m * m + m + 3 * m + 3, 0.0);
  numeric::MatrixView g_hh{g.data(), m, m};
  std::span<double> g_ih(g.data() + m * m, m);
  numeric::MatrixView g_out{g.data() + m * m + m, 3, m};
  std::span<double> g_b(g.data() + m * m + 4 * m, 3);

  std::vector<double> dh(m, 0.0), carry(m, 0.0);
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = T; t-- > 0;) {
    std::array<double, 3> dl{};
    for (std::size_t k = 0; k < 3; ++k) {
      dl[k] = (fwd.probs[t].p[k] - (s.labels[t].index() == k ? 1.0 : 0.0)) * inv_t;
    }
    numeric::outer_acc(dl, fwd.states[t], g_out);
    numeric::axpy(1.0, dl, g_b);
    dh = carry;
    numeric::gemv_t_acc(p.w_out.view(), dl, dh);
    numeric::axpy(s.y[t], dh, g_ih);
    if (t > 0) {
      numeric::outer_acc(dh, fwd.states[t - 1], g_hh);
      std::fill(carry.begin(), carry.end(), 0.0);
      numeric::gemv_t_acc(p.w_hh.view(), dh, carry);
    }
  }
  return loss;
}

}  // namespace

ConvexTrajectory convex_forward(const ConvexNetParams& p, std::span<const double> y) {
  p.validate();
  return convex_run(p, y);
}

ConvexTrainResult convex_train(const simgen::Dataset& ds, const ConvexTrainOptions& opts) {
  if (ds.role != simgen::Role::kTrain) throw ConfigError("convex train: dataset role must be 'train'");
  if (ds.series.empty()) throw InputError("convex train: empty dataset");
  if (opts.epochs < 0) throw ConfigError("convex train: epochs must be >= 0");

  ConvexTrainResult res;
  res.params = ConvexNetParams::ema_bank(opts.dim);
  Rng init = make_rng(derive_seed(opts.seed, 0));
  const double bound = 1.0 / std::sqrt(static_cast<double>(opts.dim));
  for (auto& v : res.params.w_out.values()) v = uniform(init, -bound, bound);

  const std::size_t n = ds.series.size();
  double init_loss = 0.0;
  for (const auto& s : ds.series) init_loss += convex_loss(res.params, s);
  res.initial_loss = init_loss / static_cast<double>(n);

  auto values = pack(res.params);
  tensornet::OptimState state(tensornet::Optimizer::kAdam, opts.learning_rate, values.size());
  std::vector<std::size_t> order(n);
  std::vector<double> grad;
  int streak = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_rng(derive_seed(opts.seed, {1, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle);
    double total = 0.0;
    for (std::size_t idx : order) {
      const double loss = convex_grad(res.params, ds.series[idx], grad);
      if (!std::isfinite(loss)) {
        res.failed = true;
        res.failure_reason = "non-finite loss at epoch " + std::to_string(epoch + 1);
        return res;
      }
      total += loss;
      tensornet::adam_step(state, values, grad);
      unpack(values, res.params);
      project_stochastic(res.params);
      values = pack(res.params);
    }
    total /= static_cast<double>(n);
    res.epoch_loss.push_back(total);
    streak = total > 10.0 * res.initial_loss ? streak + 1 : 0;
    if (streak >= 3) {
      res.failed = true;
      res.failure_reason = "loss above 10x initial for 3 consecutive epochs";
      return res;
    }
  }
  return res;
}

LabelSeq dummy_classify(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  LabelSeq out(n);
  for (auto& l : out) l = TrendLabel::from_int(static_cast<int>(uniform_int(rng, -1, 1)));
  return out;
}

json ma_to_json(const MaConfig& c) {
  return json{{"format_version", tensornet::kModelFormatVersion}, {"kind", "ma"}, {"params", c}};
}

MaConfig ma_from_json(const json& j) {
  if (j.value("format_version", 0) != tensornet::kModelFormatVersion) {
    throw FormatError("model: unsupported format_version");
  }
  if (j.value("kind", "") != "ma") throw FormatError("model: kind is not 'ma'");
  return j.at("params").get<MaConfig>();
}

json convex_to_json(const ConvexNetParams& p) {
  return json{{"format_version", tensornet::kModelFormatVersion},
              {"kind", "convex"},
              {"dim", p.dim()},
              {"w_hh", p.w_hh.values()},
              {"w_ih", p.w_ih},
              {"w_out", p.w_out.values()},
              {"b_out", p.b_out}};
}

ConvexNetParams convex_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != tensornet::kModelFormatVersion) {
      throw FormatError("model: unsupported format_version");
    }
    if (j.at("kind").get<std::string>() != "convex") throw FormatError("model: kind is not 'convex'");
    const auto m = j.at("dim").get<std::size_t>();
    ConvexNetParams p;
    p.w_hh = numeric::Matrix(m, m);
    p.w_out = numeric::Matrix(3, m);
    p.w_hh.values() = j.at("w_hh").get<std::vector<double>>();
    p.w_ih = j.at("w_ih").get<std::vector<double>>();
    p.w_out.values() = j.at("w_out").get<std::vector<double>>();
    p.b_out = j.at("b_out").get<std::array<double, 3>>();
    if (p.w_hh.values().size() != m * m || p.w_ih.size() != m || p.w_out.values().size() != 3 * m) {
      throw ShapeError("convex net: shape mismatch in model file");
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: corrupt file: ") + e.what());
  }
}

}  // namespace trendlab::classical
