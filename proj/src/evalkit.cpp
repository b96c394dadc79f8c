#include "trendlab/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "trendlab/parallel.hpp"
#include "trendlab/rng.hpp"

namespace trendlab::evalkit {

using nlohmann::json;

double series_loss(const LabelSeq& predicted, const LabelSeq& truth) {
  if (predicted.size() != truth.size()) throw InputError("loss: length mismatch");
  if (truth.empty()) throw InputError("loss: empty sequences");
  std::size_t miss = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) miss += predicted[i] != truth[i];
  return static_cast<double>(miss) / static_cast<double>(truth.size());
}

GroupSummary summarize_sample(const std::string& group, std::vector<double> losses) {
  if (losses.empty()) throw InputError("summary: empty sample for group " + group);
  std::sort(losses.begin(), losses.end());
  GroupSummary g;
  g.group = group;
  g.count = losses.size();
  g.median = numeric::quantile_sorted(losses, 0.5);
  g.q1 = numeric::quantile_sorted(losses, 0.25);
  g.q3 = numeric::quantile_sorted(losses, 0.75);
  g.iqr = g.q3 - g.q1;
  return g;
}

const GroupSummary* EvalReport::find(const std::string& group) const {
  for (const auto& g : groups) {
    if (g.group == group) return &g;
  }
  return nullptr;
}

EvalReport summarize(std::vector<LossRow> rows) {
  if (rows.empty()) throw InputError("summary: no losses");
  EvalReport r;
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> by_group;
  std::vector<double> all;
  for (const auto& row : rows) {
    if (!(row.loss >= 0.0 && row.loss <= 1.0)) throw InputError("summary: loss outside [0, 1]");
    if (!by_group.count(row.group)) order.push_back(row.group);
    by_group[row.group].push_back(row.loss);
    all.push_back(row.loss);
  }
  for (const auto& g : order) r.groups.push_back(summarize_sample(g, by_group[g]));
  r.groups.push_back(summarize_sample("all", std::move(all)));
  r.rows = std::move(rows);
  return r;
}

void to_json(json& j, const GroupSummary& g) {
  j = json{{"group", g.group}, {"count", g.count}, {"median", g.median},
           {"q1", g.q1},       {"q3", g.q3},       {"iqr", g.iqr}};
}

void to_json(json& j, const EvalReport& r) {
  j = json{{"groups", r.groups}};
}

void to_json(json& j, const BootstrapResult& b) {
  j = json{{"point_diff", b.point_diff}, {"ci_low", b.ci_low},  {"ci_high", b.ci_high},
           {"level", b.level},           {"n_resamples", b.n_resamples}};
}

namespace {

double resampled_median(const std::vector<std::vector<double>>& strata, Rng& rng,
                        std::vector<double>& buf) {
  buf.clear();
  for (const auto& s : strata) {
    std::uniform_int_distribution<std::size_t> pick(0, s.size() - 1);
    for (std::size_t i = 0; i < s.size(); ++i) buf.push_back(s[pick(rng)]);
  }
  return numeric::median(buf);
}

std::vector<double> flatten(const std::vector<std::vector<double>>& strata) {
  std::vector<double> out;
  for (const auto& s : strata) out.insert(out.end(), s.begin(), s.end());
  return out;
}

BootstrapResult bootstrap_impl(const std::vector<std::vector<double>>& a,
                               const std::vector<std::vector<double>>& b, double level,
                               std::size_t n_resamples, std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("bootstrap: level must be in (0, 1)");
  if (n_resamples == 0) throw ConfigError("bootstrap: n_resamples must be >= 1");
  for (const auto* side : {&a, &b}) {
    std::size_t total = 0;
    for (const auto& s : *side) {
      if (s.empty()) throw InputError("bootstrap: empty stratum");
      total += s.size();
    }
    if (total == 0) throw InputError("bootstrap: empty sample");
  }
  BootstrapResult r;
  r.level = level;
  r.n_resamples = n_resamples;
  r.point_diff = numeric::median(flatten(a)) - numeric::median(flatten(b));

  std::vector<double> stats(n_resamples);
  const std::size_t workers = worker_count();
  const std::size_t chunk = (n_resamples + workers - 1) / workers;
  parallel_for(workers, [&](std::size_t w) {
    std::vector<double> buf;
    const std::size_t end = std::min(n_resamples, (w + 1) * chunk);
    for (std::size_t k = w * chunk; k < end; ++k) {
      Rng rng = make_rng(derive_seed(seed, k));
      const double ma = resampled_median(a, rng, buf);
      const double mb = resampled_median(b, rng, buf);
      stats[k] = ma - mb;
    }
  });
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  r.ci_low = numeric::quantile_sorted(stats, tail);
  r.ci_high = numeric::quantile_sorted(stats, 1.0 - tail);
  return r;
}

}  // namespace

BootstrapResult bootstrap_median_diff(std::span<const double> a, std::span<const double> b,
                                      double level, std::size_t n_resamples, std::uint64_t seed) {
  if (a.empty() || b.empty()) throw InputError("bootstrap: both samples must be non-empty");
  return bootstrap_impl({{a.begin(), a.end()}}, {{b.begin(), b.end()}}, level, n_resamples, seed);
}

BootstrapResult bootstrap_median_diff_stratified(const std::vector<std::vector<double>>& a,
                                                 const std::vector<std::vector<double>>& b,
                                                 double level, std::size_t n_resamples,
                                                 std::uint64_t seed) {
  if (a.empty() || b.empty()) throw InputError("bootstrap: both samples must be non-empty");
  return bootstrap_impl(a, b, level, n_resamples, seed);
}

namespace {
double normal_two_sided_p(double t) { return std::erfc(std::abs(t) / std::sqrt(2.0)); }
}  // namespace

OlsFit ols_fit_design(const numeric::Matrix& x, std::span<const double> y,
                      const std::vector<std::string>& names) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  if (y.size() != n) throw ShapeError("ols: response length does not match design rows");
  if (names.size() != p) throw ShapeError("ols: one name per design column required");
  if (n <= p) throw InputError("ols: need more rows than columns");

  Eigen::MatrixXd X(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) X(i, j) = x(i, j);
  }
  const Eigen::VectorXd Y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (static_cast<std::size_t>(qr.rank()) < p) {
    // Columns taking part in any null-space direction of the design.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(X);
    lu.setThreshold(1e-10);
    const Eigen::MatrixXd kernel = lu.kernel();
    std::string cols;
    for (std::size_t j = 0; j < p; ++j) {
      if (kernel.row(static_cast<Eigen::Index>(j)).cwiseAbs().maxCoeff() <= 1e-8) continue;
      if (!cols.empty()) cols += ", ";
      cols += names[j];
    }
    throw ShapeError("ols: rank-deficient design; collinear columns: " + cols);
  }

  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  Eigen::VectorXd beta;
  Eigen::MatrixXd xtx_inv;
  const bool well_posed = ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-12;
  if (well_posed) {
    beta = ldlt.solve(X.transpose() * Y);
    xtx_inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  } else {
    beta = qr.solve(Y);
    // (X^T X)^-1 = R^-1 R^-T in the pivoted basis.
    const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv =
        R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd inv_perm = r_inv * r_inv.transpose();
    xtx_inv = qr.colsPermutation() * inv_perm * qr.colsPermutation().transpose();
  }

  const Eigen::VectorXd resid = Y - X * beta;
  OlsFit fit;
  fit.n_rows = n;
  fit.dof = n - p;
  fit.sigma2 = resid.squaredNorm() / static_cast<double>(fit.dof);
  const double mean = Y.mean();
  const double tss = (Y.array() - mean).square().sum();
  fit.r_squared = tss > 0.0 ? 1.0 - resid.squaredNorm() / tss : 1.0;
  fit.residuals.assign(resid.data(), resid.data() + n);
  for (std::size_t j = 0; j < p; ++j) {
    OlsCoefficient c;
    c.name = names[j];
    c.coef = beta(static_cast<Eigen::Index>(j));
    c.std_err = std::sqrt(std::max(0.0, fit.sigma2 * xtx_inv(j, j)));
    c.t = c.std_err > 0.0 ? c.coef / c.std_err : (c.coef == 0.0 ? 0.0 : INFINITY);
    c.p_value = c.std_err > 0.0 ? normal_two_sided_p(c.t) : (c.coef == 0.0 ? 1.0 : 0.0);
    c.ci_low = c.coef - 1.959963984540054 * c.std_err;
    c.ci_high = c.coef + 1.959963984540054 * c.std_err;
    fit.coefficients.push_back(c);
  }
  return fit;
}

OlsFit ols_fit(std::span<const double> y, const std::vector<CategoricalFeature>& features) {
  const std::size_t n = y.size();
  std::vector<std::string> names{"intercept"};
  std::vector<std::pair<std::size_t, std::string>> columns;  // (feature, modality)
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& feat = features[f];
    if (feat.values.size() != n) throw ShapeError("ols: feature '" + feat.name + "' length mismatch");
    const std::set<std::string> mods(feat.values.begin(), feat.values.end());
    if (mods.size() < 2) {
      throw InputError("ols: feature '" + feat.name + "' needs >= 2 distinct modalities");
    }
    for (auto it = std::next(mods.begin()); it != mods.end(); ++it) {
      columns.emplace_back(f, *it);
      names.push_back(feat.name + "[" + *it + "]");
    }
  }
  numeric::Matrix x(n, names.size());
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      x(i, c + 1) = features[columns[c].first].values[i] == columns[c].second ? 1.0 : 0.0;
    }
  }
  return ols_fit_design(x, y, names);
}

ProbSeq pool_probabilities(const std::vector<ProbSeq>& outputs) {
  if (outputs.empty()) throw InputError("pool: need at least one estimator");
  const std::size_t T = outputs[0].size();
  for (const auto& o : outputs) {
    if (o.size() != T) throw InputError("pool: sequence length mismatch");
  }
  ProbSeq out(T, ProbTriple{{0.0, 0.0, 0.0}});
  const double w = 1.0 / static_cast<double>(outputs.size());
  for (const auto& o : outputs) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < 3; ++k) out[t].p[k] += w * o[t].p[k];
    }
  }
  return out;
}

double wasserstein_1d(std::span<const double> a_in, std::span<const double> b_in) {
  if (a_in.empty() || b_in.empty()) throw InputError("wasserstein: empty sample");
  std::vector<double> a(a_in.begin(), a_in.end()), b(b_in.begin(), b_in.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size(), m = b.size();
  double total = 0.0;
  if (n == m) {
    for (std::size_t i = 0; i < n; ++i) total += std::abs(a[i] - b[i]);
    return total / static_cast<double>(n);
  }
  // Walk the merged breakpoints i/n and j/m of both step quantile functions.
  std::size_t i = 0, j = 0;
  double u = 0.0;
  while (i < n && j < m) {
    const double next_a = static_cast<double>(i + 1) / static_cast<double>(n);
    const double next_b = static_cast<double>(j + 1) / static_cast<double>(m);
    const double next = std::min(next_a, next_b);
    total += (next - u) * std::abs(a[i] - b[j]);
    u = next;
    // Compare via integer cross-multiplication to step both on ties.
    const std::size_t lhs = (i + 1) * m, rhs = (j + 1) * n;
    if (lhs <= rhs) ++i;
    if (rhs <= lhs) ++j;
  }
  return total;
}

std::vector<double> simulated_returns(const Series& s) {
  std::vector<double> r;
  r.reserve(s.size());
  if (s.dynamic == Dynamic::kMarkovSwitch) {
    for (std::size_t i = 1; i < s.size(); ++i) r.push_back(std::log(s.y[i] / s.y[i - 1]));
  } else {
    for (std::size_t i = 1; i < s.size(); ++i) r.push_back(s.y[i] - s.y[i - 1]);
  }
  return r;
}

double calibration_distance(Dynamic d, const simgen::DynamicConfigs& configs,
                            std::span<const double> target_returns, std::size_t n_draws,
                            std::uint64_t sim_seed) {
  if (n_draws == 0) throw ConfigError("calibrate: n_draws must be >= 1");
  double total = 0.0;
  for (std::size_t k = 0; k < n_draws; ++k) {
    const auto s = simgen::generate(d, configs, derive_seed(sim_seed, k));
    total += wasserstein_1d(simulated_returns(s), target_returns);
  }
  return total / static_cast<double>(n_draws);
}

namespace {

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

simgen::DynamicConfigs draw_candidate(Dynamic d, const simgen::DynamicConfigs& base, Rng& rng) {
  auto c = base;
  switch (d) {
    case Dynamic::kNoisyLine:
      c.noisy_line.gamma = log_uniform(rng, 1e-4, 5.0);
      c.noisy_line.sigma_max = log_uniform(rng, 1e-4, 2.0);
      break;
    case Dynamic::kPiecewiseOu: {
      const double a_lo = log_uniform(rng, 1e-3, 0.5);
      c.piecewise_ou.a = {a_lo, a_lo * 2.5};
      c.piecewise_ou.sigma = log_uniform(rng, 1e-4, 2.0);
      const double mu_hi = log_uniform(rng, 1e-3, 10.0);
      c.piecewise_ou.mu = {mu_hi / 5.0, mu_hi};
      break;
    }
    case Dynamic::kMarkovSwitch: {
      c.markov_switch.gamma = log_uniform(rng, 1e-5, 0.1);
      c.markov_switch.sigma = log_uniform(rng, 1e-4, 0.2);
      const double stay = uniform(rng, 0.8, 0.999);
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
          c.markov_switch.transition[i][j] = i == j ? stay : (1.0 - stay) / 2.0;
        }
      }
      break;
    }
  }
  return c;
}

}  // namespace

CalibrationResult calibrate(Dynamic dynamic, std::span<const double> target_returns,
                            const CalibrationSearch& search, const simgen::DynamicConfigs& base) {
  if (target_returns.size() < 100) throw InputError("calibrate: need >= 100 target returns");
  if (search.n_candidates == 0) throw ConfigError("calibrate: empty search space");
  if (search.n_draws == 0) throw ConfigError("calibrate: n_draws must be >= 1");

  std::vector<simgen::DynamicConfigs> candidates;
  for (std::size_t k = 0; k < search.n_candidates; ++k) {
    Rng rng = make_rng(derive_seed(search.seed, {0, k}));
    candidates.push_back(draw_candidate(dynamic, base, rng));
  }
  const std::uint64_t sim_seed = derive_seed(search.seed, 1);
  std::vector<double> dist(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t k) {
    dist[k] = calibration_distance(dynamic, candidates[k], target_returns, search.n_draws, sim_seed);
  });

  CalibrationResult r;
  std::size_t best = 0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (dist[k] < dist[best]) best = k;
    r.running_min.push_back(dist[best]);
  }
  r.configs = candidates[best];
  r.distance = dist[best];
  return r;
}

}  // namespace trendlab::evalkit
