#include "trendlab/mle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trendlab/evalkit.hpp"
#include "trendlab/numeric.hpp"
#include "trendlab/parallel.hpp"
#include "trendlab/rng.hpp"

namespace trendlab::mle {

using nlohmann::json;

MleEstimate nle_slope(std::span<const double> t, std::span<const double> y) {
  const std::size_t n = y.size();
  if (n < 2 || t.size() != n) throw InputError("nle: need >= 2 points with matching times");
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    if (!(t[i] > t[i - 1])) throw InputError("nle: times must be strictly increasing");
    const double dt = t[i] - t[0];
    sxx += dt * dt;
    sxy += dt * (y[i] - y[0]);
  }
  MleEstimate e;
  e.mu_hat = sxy / sxx;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      const double r = y[i] - y[0] - e.mu_hat * (t[i] - t[0]);
      rss += r * r;
    }
    e.var_mu = rss / static_cast<double>(n - 2) / sxx;
  }
  return e;
}

PathIntegrals path_integrals(std::span<const double> y, double dt) {
  if (y.size() < 2) throw InputError("path integrals: need >= 2 points");
  if (!(dt > 0.0)) throw InputError("path integrals: dt must be > 0");
  PathIntegrals I;
  const std::size_t n = y.size() - 1;
  I.T = static_cast<double>(n) * dt;
  I.y0 = y.front();
  I.yT = y.back();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = y[i + 1] - y[i];
    I.int_y += y[i] * dt;
    I.int_y2 += y[i] * y[i] * dt;
    I.int_dy += d;
    I.int_ydy += y[i] * d;
  }
  return I;
}

MleEstimate oue_estimate(std::span<const double> y, double dt) {
  if (y.size() < 10) throw InputError("oue: window length must be >= 10");
  const auto I = path_integrals(y, dt);
  const double D = I.denominator();
  if (!(std::abs(D) > 1e-12 * I.T * I.int_y2) || D == 0.0) {
    throw DegenerateError("oue: degenerate window (constant path)");
  }
  const double y0 = I.y0, yT = I.yT, T = I.T;
  // Closed forms from the Ito identities int Y dY = (Y_T^2 - Y_0^2 - T) / 2
  // and int dY = Y_T - Y_0.
  const double half_q = 0.5 * (yT * yT - y0 * y0 - T);
  MleEstimate e;
  e.mu_hat = (half_q * I.int_y - (yT - y0) * I.int_y2) / D;
  const double a_hat = (T * half_q - (yT - y0) * I.int_y) / D;
  e.a_hat = a_hat;

  // Residual increments dW_i = dY_i - (mu - a y_i) dt.
  double w_T = 0.0, int_ydw = 0.0;
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    const double dw = (y[i + 1] - y[i]) - (e.mu_hat - a_hat * y[i]) * dt;
    w_T += dw;
    int_ydw += y[i] * dw;
  }
  e.bias_mu = (int_ydw * I.int_y - w_T * I.int_y2) / D;
  e.bias_a = (T * int_ydw - w_T * I.int_y) / D;
  // Unit-diffusion Fisher information: inverse Gram matrix entry for mu.
  e.var_mu = -I.int_y2 / D;
  return e;
}

TrendLabel sgn_eps(double x, double eps) {
  if (eps == 0.0) return TrendLabel::sign_of(x);
  if (x <= -eps) return TrendLabel::kDown;
  if (x >= eps) return TrendLabel::kUp;
  return TrendLabel::kFlat;
}

std::string_view to_string(Estimator e) { return e == Estimator::kNle ? "nle" : "oue"; }

Estimator parse_estimator(std::string_view s) {
  if (s == "nle") return Estimator::kNle;
  if (s == "oue") return Estimator::kOue;
  throw ConfigError("unknown estimator: " + std::string(s));
}

void SlidingWindowConfig::validate(Estimator e) const {
  const int min_eta = e == Estimator::kNle ? 3 : 10;
  if (eta < min_eta) {
    throw ConfigError("sliding window: eta must be >= " + std::to_string(min_eta));
  }
  if (stride < 1) throw ConfigError("sliding window: stride must be >= 1");
  if (!(epsilon >= 0.0)) throw ConfigError("sliding window: epsilon must be >= 0");
}

void to_json(json& j, const SlidingWindowConfig& c) {
  j = json{{"eta", c.eta}, {"epsilon", c.epsilon}, {"stride", c.stride}};
}

void from_json(const json& j, SlidingWindowConfig& c) {
  c.eta = j.value("eta", c.eta);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.stride = j.value("stride", c.stride);
}

std::optional<double> window_statistic(const Series& s, std::size_t end, Estimator est, int eta) {
  const auto n = static_cast<std::size_t>(eta);
  if (end + 1 < n || end >= s.size()) throw InputError("window out of range");
  const std::size_t begin = end + 1 - n;
  std::span<const double> y(s.y.data() + begin, n);
  std::span<const double> t(s.t.data() + begin, n);
  if (est == Estimator::kNle) return nle_slope(t, y).mu_hat;

  const double dt = t[1] - t[0];
  double qv = 0.0;
  for (std::size_t i = 1; i < n; ++i) qv += (y[i] - y[i - 1]) * (y[i] - y[i - 1]);
  const double vol = std::sqrt(qv / (dt * static_cast<double>(n - 1)));
  if (!(vol > 0.0) || !std::isfinite(vol)) return std::nullopt;
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = y[i] / vol;
  try {
    const auto e = oue_estimate(z, dt);
    const double drift = e.mu_hat - *e.a_hat * z.back();
    if (!std::isfinite(drift)) return std::nullopt;
    return drift;
  } catch (const DegenerateError&) {
    return std::nullopt;
  }
}

namespace {

// Statistic per step (nullopt before the first full window or when degenerate).
std::vector<std::optional<double>> statistic_path(const Series& s, Estimator est, int eta,
                                                  int stride) {
  std::vector<std::optional<double>> out(s.size());
  const auto first = static_cast<std::size_t>(eta - 1);
  for (std::size_t t = first; t < s.size(); t += static_cast<std::size_t>(stride)) {
    out[t] = window_statistic(s, t, est, eta);
  }
  return out;
}

ClassifyResult labels_from_path(const std::vector<std::optional<double>>& path, int eta,
                                int stride, double eps) {
  ClassifyResult r;
  r.labels.assign(path.size(), TrendLabel::kFlat);
  const auto first = static_cast<std::size_t>(eta - 1);
  TrendLabel held = TrendLabel::kFlat;
  for (std::size_t t = first; t < path.size(); ++t) {
    if ((t - first) % static_cast<std::size_t>(stride) == 0) {
      if (path[t]) {
        held = sgn_eps(*path[t], eps);
      } else {
        held = TrendLabel::kFlat;
        ++r.degenerate_windows;
      }
    }
    r.labels[t] = held;
  }
  return r;
}

}  // namespace

ClassifyResult mle_classify(const Series& s, Estimator est, const SlidingWindowConfig& cfg) {
  cfg.validate(est);
  if (s.size() < static_cast<std::size_t>(cfg.eta)) {
    throw InputError("mle classify: series shorter than the window");
  }
  return labels_from_path(statistic_path(s, est, cfg.eta, cfg.stride), cfg.eta, cfg.stride,
                          cfg.epsilon);
}

double tune_epsilon(const simgen::Dataset& ds, Estimator est, int eta,
                    std::span<const double> grid) {
  if (ds.series.empty()) throw InputError("tune epsilon: empty dataset");
  if (grid.empty()) throw ConfigError("tune epsilon: empty grid");
  SlidingWindowConfig{eta, 0.0, 1}.validate(est);
  std::vector<std::vector<std::optional<double>>> paths(ds.series.size());
  parallel_for(ds.series.size(), [&](std::size_t i) {
    if (ds.series[i].size() >= static_cast<std::size_t>(eta)) {
      paths[i] = statistic_path(ds.series[i], est, eta, 1);
    }
  });
  double best_eps = grid[0];
  double best = 2.0;
  for (double eps : grid) {
    std::vector<double> losses;
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
      if (paths[i].empty()) continue;
      losses.push_back(
          evalkit::series_loss(labels_from_path(paths[i], eta, 1, eps).labels, ds.series[i].labels));
    }
    if (losses.empty()) throw InputError("tune epsilon: every series is shorter than the window");
    const double med = numeric::median(std::move(losses));
    if (med < best) {
      best = med;
      best_eps = eps;
    }
  }
  return best_eps;
}

void HmmModel::validate() const {
  const std::size_t k = n_states();
  if (k == 0) throw ParamError("hmm: no states");
  if (initial.size() != k || transition.size() != k || vars.size() != k) {
    throw ParamError("hmm: inconsistent shapes");
  }
  auto check_dist = [](const std::vector<double>& p, const char* what) {
    double s = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw ParamError(std::string("hmm: negative entry in ") + what);
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) throw ParamError(std::string("hmm: ") + what + " does not sum to 1");
  };
  check_dist(initial, "initial");
  for (const auto& row : transition) {
    if (row.size() != k) throw ParamError("hmm: transition row size mismatch");
    check_dist(row, "transition row");
  }
  for (double v : vars) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ParamError("hmm: variances must be positive");
  }
  for (double m : means) {
    if (!std::isfinite(m)) throw ParamError("hmm: non-finite mean");
  }
}

std::vector<double> log_returns(std::span<const double> y) {
  if (y.size() < 2) throw InputError("hmm: series needs >= 2 points");
  for (double v : y) {
    if (!(v > 0.0)) throw InputError("hmm: series must be strictly positive");
  }
  std::vector<double> r(y.size() - 1);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) r[i] = std::log(y[i + 1] / y[i]);
  return r;
}

namespace {

constexpr double kVarFloor = 1e-12;
constexpr double kLog2Pi = 1.8378770664093453;

// Emission likelihoods divided by their per-step maximum; the log of the
// maximum is returned in `log_scale`.
void emissions(const HmmModel& m, std::span<const double> obs, std::vector<double>& b,
               std::vector<double>& log_scale) {
  const std::size_t K = m.n_states();
  const std::size_t T = obs.size();
  b.resize(T * K);
  log_scale.resize(T);
  std::vector<double> lp(K);
  for (std::size_t t = 0; t < T; ++t) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      const double d = obs[t] - m.means[k];
      lp[k] = -0.5 * (kLog2Pi + std::log(m.vars[k]) + d * d / m.vars[k]);
      mx = std::max(mx, lp[k]);
    }
    for (std::size_t k = 0; k < K; ++k) b[t * K + k] = std::exp(lp[k] - mx);
    log_scale[t] = mx;
  }
}

struct ForwardBackward {
  std::vector<double> gamma;  // T x K
  std::vector<double> xi;     // K x K summed over t
  double log_likelihood = 0.0;
};

ForwardBackward forward_backward(const HmmModel& m, std::span<const double> obs, bool want_xi) {
  const std::size_t K = m.n_states();
  const std::size_t T = obs.size();
  std::vector<double> b, log_scale;
  emissions(m, obs, b, log_scale);
  std::vector<double> alpha(T * K), beta(T * K), c(T);

  double ll = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      double a = 0.0;
      if (t == 0) {
        a = m.initial[j];
      } else {
        for (std::size_t i = 0; i < K; ++i) a += alpha[(t - 1) * K + i] * m.transition[i][j];
      }
      a *= b[t * K + j];
      alpha[t * K + j] = a;
      s += a;
    }
    if (!(s > 0.0)) throw DegenerateError("hmm: zero-probability observation");
    c[t] = s;
    for (std::size_t j = 0; j < K; ++j) alpha[t * K + j] /= s;
    ll += std::log(s) + log_scale[t];
  }

  for (std::size_t k = 0; k < K; ++k) beta[(T - 1) * K + k] = 1.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t i = 0; i < K; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < K; ++j) {
        s += m.transition[i][j] * b[(t + 1) * K + j] * beta[(t + 1) * K + j];
      }
      beta[t * K + i] = s / c[t + 1];
    }
  }

  ForwardBackward fb;
  fb.log_likelihood = ll;
  fb.gamma.resize(T * K);
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += fb.gamma[t * K + k] = alpha[t * K + k] * beta[t * K + k];
    for (std::size_t k = 0; k < K; ++k) fb.gamma[t * K + k] /= s;
  }
  if (want_xi) {
    fb.xi.assign(K * K, 0.0);
    for (std::size_t t = 0; t + 1 < T; ++t) {
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j) {
          fb.xi[i * K + j] += alpha[t * K + i] * m.transition[i][j] * b[(t + 1) * K + j] *
                              beta[(t + 1) * K + j] / c[t + 1];
        }
      }
    }
  }
  return fb;
}

HmmModel initial_model(const std::vector<std::vector<double>>& obs, std::size_t K, Rng& rng,
                       bool random_means) {
  std::vector<double> all;
  for (const auto& o : obs) all.insert(all.end(), o.begin(), o.end());
  std::sort(all.begin(), all.end());
  const double mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
  double var = 0.0;
  for (double v : all) var += (v - mean) * (v - mean);
  var = std::max(var / static_cast<double>(all.size()), 1e-8);

  HmmModel m;
  m.initial.assign(K, 1.0 / static_cast<double>(K));
  m.transition.assign(K, std::vector<double>(K, K == 1 ? 1.0 : 0.1 / static_cast<double>(K - 1)));
  for (std::size_t k = 0; k < K; ++k) {
    if (K > 1) m.transition[k][k] = 0.9;
    const double q = random_means ? uniform(rng, 0.02, 0.98)
                                  : (static_cast<double>(k) + 0.5) / static_cast<double>(K);
    m.means.push_back(numeric::quantile_sorted(all, q));
    m.vars.push_back(var);
  }
  return m;
}

}  // namespace

Posterior hmm_posterior(const HmmModel& m, std::span<const double> obs) {
  m.validate();
  if (obs.empty()) throw InputError("hmm: empty observation sequence");
  const auto fb = forward_backward(m, obs, false);
  const std::size_t K = m.n_states();
  Posterior p;
  p.log_likelihood = fb.log_likelihood;
  p.gamma.resize(obs.size());
  for (std::size_t t = 0; t < obs.size(); ++t) {
    p.gamma[t].assign(fb.gamma.begin() + t * K, fb.gamma.begin() + (t + 1) * K);
  }
  return p;
}

HmmFitResult hmm_fit_sequences(const std::vector<std::vector<double>>& obs,
                               const HmmFitOptions& opts) {
  const std::size_t K = opts.n_states;
  if (K == 0) throw ConfigError("hmm: n_states must be >= 1");
  if (opts.max_iters < 1) throw ConfigError("hmm: max_iters must be >= 1");
  std::size_t total = 0;
  for (const auto& o : obs) {
    for (double v : o) {
      if (!std::isfinite(v)) throw InputError("hmm: non-finite observation");
    }
    total += o.size();
  }
  if (total < K) throw InputError("hmm: not enough observations");

  constexpr int kMaxRestarts = 5;
  for (int attempt = 0; attempt <= kMaxRestarts; ++attempt) {
    Rng rng = make_rng(derive_seed(opts.seed, static_cast<std::uint64_t>(attempt)));
    HmmFitResult res;
    res.restarts = attempt;
    res.model = initial_model(obs, K, rng, attempt > 0);
    bool collapsed = false;

    for (int it = 0; it < opts.max_iters; ++it) {
      std::vector<ForwardBackward> fbs(obs.size());
      parallel_for(obs.size(), [&](std::size_t s) {
        if (!obs[s].empty()) fbs[s] = forward_backward(res.model, obs[s], true);
      });
      // Ordered reduction of the sufficient statistics.
      double ll = 0.0;
      std::vector<double> init(K, 0.0), occ(K, 0.0), sum(K, 0.0), trans(K * K, 0.0),
          from(K, 0.0);
      for (std::size_t s = 0; s < obs.size(); ++s) {
        const auto& o = obs[s];
        if (o.empty()) continue;
        const auto& fb = fbs[s];
        ll += fb.log_likelihood;
        for (std::size_t k = 0; k < K; ++k) init[k] += fb.gamma[k];
        for (std::size_t t = 0; t < o.size(); ++t) {
          for (std::size_t k = 0; k < K; ++k) {
            const double g = fb.gamma[t * K + k];
            occ[k] += g;
            sum[k] += g * o[t];
            if (t + 1 < o.size()) from[k] += g;
          }
        }
        for (std::size_t i = 0; i < K * K; ++i) trans[i] += fb.xi[i];
      }
      res.log_likelihood.push_back(ll);
      const std::size_t n = res.log_likelihood.size();
      if (n >= 2 && res.log_likelihood[n - 1] - res.log_likelihood[n - 2] <
                        opts.tol * std::max(1.0, std::abs(res.log_likelihood[n - 2]))) {
        res.converged = true;
        break;
      }

      HmmModel next = res.model;
      const double init_total = std::accumulate(init.begin(), init.end(), 0.0);
      for (std::size_t k = 0; k < K; ++k) next.initial[k] = init[k] / init_total;
      for (std::size_t i = 0; i < K; ++i) {
        if (from[i] > 0.0) {
          double row = 0.0;
          for (std::size_t j = 0; j < K; ++j) row += trans[i * K + j];
          for (std::size_t j = 0; j < K; ++j) next.transition[i][j] = trans[i * K + j] / row;
        }
        if (occ[i] > 0.0) next.means[i] = sum[i] / occ[i];
      }
      for (std::size_t k = 0; k < K; ++k) {
        if (!(occ[k] > 0.0)) {
          collapsed = true;
          break;
        }
        double sq = 0.0;
        for (std::size_t s = 0; s < obs.size(); ++s) {
          const auto& o = obs[s];
          for (std::size_t t = 0; t < o.size(); ++t) {
            const double d = o[t] - next.means[k];
            sq += fbs[s].gamma[t * K + k] * d * d;
          }
        }
        next.vars[k] = sq / occ[k];
        if (!(next.vars[k] >= kVarFloor)) collapsed = true;
      }
      if (collapsed) break;
      res.model = std::move(next);
    }
    if (!collapsed) {
      // Exact renormalization so the model passes the 1e-12 row checks.
      auto renorm = [](std::vector<double>& p) {
        const double s = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& v : p) v /= s;
      };
      renorm(res.model.initial);
      for (auto& row : res.model.transition) renorm(row);
      return res;
    }
  }
  throw DegenerateError("hmm: variance collapse persisted after restarts");
}

HmmFitResult hmm_fit(const simgen::Dataset& ds, const HmmFitOptions& opts) {
  if (ds.series.empty()) throw InputError("hmm: empty dataset");
  std::vector<std::vector<double>> obs;
  obs.reserve(ds.series.size());
  for (const auto& s : ds.series) obs.push_back(log_returns(s.y));
  return hmm_fit_sequences(obs, opts);
}

namespace {
std::vector<std::size_t> states_by_mean(const HmmModel& m) {
  std::vector<std::size_t> order(m.n_states());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m.means[a] < m.means[b]; });
  return order;
}
}  // namespace

ProbSeq hmm_classify_probs(const HmmModel& m, const Series& s) {
  if (m.n_states() != 3) throw ConfigError("hmm classify: needs a 3-state model");
  const auto obs = log_returns(s.y);
  const auto post = hmm_posterior(m, obs);
  const auto order = states_by_mean(m);
  ProbSeq out(s.size());
  for (std::size_t t = 0; t < obs.size(); ++t) {
    for (std::size_t c = 0; c < 3; ++c) out[t + 1].p[c] = post.gamma[t][order[c]];
  }
  out[0] = out[1];
  return out;
}

LabelSeq hmm_classify(const HmmModel& m, const Series& s) {
  return labels_of(hmm_classify_probs(m, s));
}

bool hmm_means_overlap(const HmmModel& m) {
  const auto order = states_by_mean(m);
  const double pooled =
      std::sqrt(std::accumulate(m.vars.begin(), m.vars.end(), 0.0) / static_cast<double>(m.n_states()));
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (m.means[order[i]] - m.means[order[i - 1]] < pooled) return true;
  }
  return false;
}

json hmm_to_json(const HmmModel& m) {
  return json{{"format_version", 1},
              {"kind", "hmm"},
              {"n_states", m.n_states()},
              {"initial", m.initial},
              {"transition", m.transition},
              {"means", m.means},
              {"vars", m.vars}};
}

HmmModel hmm_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != 1) throw FormatError("model: unsupported format_version");
    if (j.at("kind").get<std::string>() != "hmm") throw FormatError("model: kind is not 'hmm'");
    HmmModel m;
    m.initial = j.at("initial").get<std::vector<double>>();
    m.transition = j.at("transition").get<std::vector<std::vector<double>>>();
    m.means = j.at("means").get<std::vector<double>>();
    m.vars = j.at("vars").get<std::vector<double>>();
    if (m.n_states() != j.at("n_states").get<std::size_t>()) {
      throw ShapeError("hmm: n_states does not match parameter arrays");
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: corrupt file: ") + e.what());
  }
}

}  // namespace trendlab::mle
