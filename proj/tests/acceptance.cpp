// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Usage: acceptance <path-to-trendlab> [criterion...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "trendlab/classical.hpp"
#include "trendlab/evalkit.hpp"
#include "trendlab/mle.hpp"
#include "trendlab/models.hpp"
#include "trendlab/numeric.hpp"
#include "trendlab/rng.hpp"
#include "trendlab/simgen.hpp"
#include "trendlab/tensornet.hpp"

using namespace trendlab;
namespace fs = std::filesystem;

namespace {

std::string g_cli;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double sup_norm(const std::vector<double>& h) {
  double s = 0.0;
  for (double v : h) s = std::max(s, std::abs(v));
  return s;
}

// Exact OU discretization of dY = (mu - a Y) dt + dW.
std::vector<double> ou_path(Rng& rng, double mu, double a, double dt, std::size_t steps, double y0) {
  std::vector<double> y{y0};
  const double e = std::exp(-a * dt);
  const double sd = std::sqrt((1.0 - e * e) / (2.0 * a));
  for (std::size_t k = 0; k < steps; ++k) {
    y.push_back(y.back() * e + mu / a * (1.0 - e) + sd * standard_normal(rng));
  }
  return y;
}

Outcome nle_variance_law() {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = 100;
  const double mu = 0.3, sigma = 1.0;
  std::vector<double> t(n + 1);
  for (std::size_t i = 0; i <= n; ++i) t[i] = static_cast<double>(i);
  Rng rng = make_rng(101);
  std::vector<double> est;
  for (int r = 0; r < 10000; ++r) {
    std::vector<double> y(n + 1, 0.0);
    for (std::size_t i = 1; i <= n; ++i) y[i] = mu * t[i] + sigma * standard_normal(rng);
    est.push_back(mle::nle_slope(t, y).mu_hat);
  }
  const double nd = static_cast<double>(n);
  const double v = 6.0 * sigma * sigma / (nd * (nd + 1.0) * (2.0 * nd + 1.0));
  const double rel = std::abs(sample_var(est) - v) / v;
  const double bias = std::abs(mean(est) - mu) / std::sqrt(v / 10000.0);
  const double secs = elapsed(start);
  return {rel <= 0.05 && bias < 3.0 && secs < 10.0,
          fmt("var rel err %.4f (<=0.05), |bias|/SE %.2f (<3), %.1fs (<10s)", rel, bias, secs)};
}

Outcome ou_recovery() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng = make_rng(202);
  std::vector<double> mu_c, a_c;
  for (int r = 0; r < 1000; ++r) {
    const auto y = ou_path(rng, 1.0, 0.5, 0.1, 5000, 2.0);
    const auto e = mle::oue_estimate(y, 0.1);
    mu_c.push_back(e.mu_hat - e.bias_mu);
    a_c.push_back(*e.a_hat - e.bias_a);
  }
  const double dm = std::abs(mean(mu_c) - 1.0), da = std::abs(mean(a_c) - 0.5);
  const double secs = elapsed(start);
  return {dm <= 0.1 && da <= 0.1 && secs < 60.0,
          fmt("|mu-1| %.4f, |a-0.5| %.4f (<=0.1), %.1fs (<60s)", dm, da, secs)};
}

Outcome gradient_correctness() {
  double worst = 0.0;
  std::size_t coords = 0;
  Rng rng = make_rng(303);
  for (auto cell : {tensornet::Cell::kVanilla, tensornet::Cell::kGru, tensornet::Cell::kLstm}) {
    for (int k = 0; k < 20; ++k) {
      tensornet::RnnSpec spec;
      spec.cell = cell;
      spec.n_layers = static_cast<std::size_t>(uniform_int(rng, 1, 2));
      spec.hidden_dim = static_cast<std::size_t>(uniform_int(rng, 1, 5));
      spec.dropout = spec.n_layers > 1 && k % 2 == 0 ? 0.3 : 0.0;
      const auto steps = static_cast<std::size_t>(uniform_int(rng, 2, 8));
      const auto g = testsupport::gradient_check(spec, steps, derive_seed(303, {static_cast<std::uint64_t>(cell), static_cast<std::uint64_t>(k)}));
      worst = std::max(worst, g.max_rel_error);
      coords += g.n_coords;
    }
  }
  return {worst < 1e-4, fmt("max rel err %.2e (<1e-4) over %.0f coordinates", worst, static_cast<double>(coords))};
}

Outcome convex_dichotomy() {
  bool ok = true;
  std::string detail;
  Rng wrng = make_rng(404);
  for (int variant = 0; variant < 2; ++variant) {
    auto p = classical::ConvexNetParams::ema_bank(5);
    if (variant == 1) {
      for (auto& v : p.w_hh.values()) v = uniform(wrng, 0.0, 1.0);
      for (auto& v : p.w_ih) v = uniform(wrng, 0.2, 1.0);
      classical::project_stochastic(p);
    }
    p.validate();
    const double min_w = *std::min_element(p.w_ih.begin(), p.w_ih.end());

    // mu = 0: pure unit noise over 1e5 steps. The running sup norm is
    // autocorrelated, so the slope test uses every 200th step.
    Rng rng = make_rng(derive_seed(405, variant));
    std::vector<double> noise(100000);
    for (auto& v : noise) v = standard_normal(rng);
    const auto tr = classical::convex_forward(p, noise);
    double worst = 0.0;
    numeric::Matrix x(500, 2);
    std::vector<double> y;
    for (std::size_t i = 0; i < 500; ++i) {
      const std::size_t t = i * 200 + 199;
      x(i, 0) = 1.0;
      x(i, 1) = static_cast<double>(t) / 1e5;
      y.push_back(sup_norm(tr.states[t]));
    }
    for (const auto& h : tr.states) worst = std::max(worst, sup_norm(h));
    const auto fit = evalkit::ols_fit_design(x, y, {"intercept", "t"});
    const double p_slope = fit.coefficients[1].p_value;

    // mu = 1: trend input, slope of the sup norm over the second half.
    std::vector<double> ramp(100001);
    for (std::size_t t = 0; t < ramp.size(); ++t) ramp[t] = static_cast<double>(t);
    const auto up = classical::convex_forward(p, ramp);
    const double slope = (sup_norm(up.states[100000]) - sup_norm(up.states[50000])) / 50000.0;

    const bool v_ok = std::isfinite(worst) && p_slope > 0.01 && slope >= 0.8 * min_w;
    ok = ok && v_ok;
    detail += fmt("[w%.0f: max|h| %.3f, drift p %.3f (>0.01), ", variant, worst, p_slope) +
              fmt("slope %.4f (>=%.4f)] ", slope, 0.8 * min_w);
  }
  return {ok, detail};
}

Outcome baseline_ordering() {
  const auto start = std::chrono::steady_clock::now();
  auto tspec = simgen::DatasetSpec::training_defaults(Dynamic::kNoisyLine, 11);
  tspec.count = 200;
  const auto train = simgen::make_dataset(tspec);
  tensornet::TrainOptions o;
  o.epochs = 50;
  o.seed = 3;
  const auto res = tensornet::train(tensornet::RnnSpec::baseline(), train, o);
  if (res.failed) return {false, "training failed: " + res.failure_reason};
  const tensornet::RnnModel net{res.params, res.input_scale, {}};
  const auto val = simgen::make_dataset(simgen::DatasetSpec::validation_defaults(7));
  std::vector<evalkit::LossRow> rnn, ma;
  for (const auto& s : val.series) {
    const std::string g(to_string(s.dynamic));
    rnn.push_back({s.id, g, evalkit::series_loss(labels_of(net.predict(s)), s.labels)});
    ma.push_back({s.id, g, evalkit::series_loss(classical::ma_classify(classical::MaConfig{}, s.y), s.labels)});
  }
  const auto r = evalkit::summarize(rnn);
  const auto m = evalkit::summarize(ma);
  const double rnn_nl = r.find("noisy_line")->median, ma_nl = m.find("noisy_line")->median;
  const double secs = elapsed(start);
  return {rnn_nl <= 0.30 && ma_nl >= 0.40 && r.overall().median < m.overall().median && secs < 900.0,
          fmt("NL rnn %.3f (<=0.30), NL ma %.3f (>=0.40), all rnn %.3f vs ma %.3f", rnn_nl, ma_nl,
              r.overall().median, m.overall().median) +
              fmt(", %.0fs (<900s)", secs)};
}

Outcome dummy_floor() {
  const auto val = simgen::make_dataset(simgen::DatasetSpec::validation_defaults(7));
  const models::AnyModel dummy = models::builtin("dummy");
  std::vector<evalkit::LossRow> rows;
  for (std::size_t i = 0; i < val.series.size(); ++i) {
    const auto& s = val.series[i];
    rows.push_back({s.id, std::string(to_string(s.dynamic)),
                    evalkit::series_loss(models::predict(dummy, s, i), s.labels)});
  }
  const double all = evalkit::summarize(rows).overall().median;
  return {std::abs(all - 2.0 / 3.0) <= 0.02, fmt("overall median %.4f (2/3 +- 0.02)", all)};
}

Outcome hmm_checks() {
  Rng rng = make_rng(707);
  mle::HmmModel truth;
  truth.initial = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  truth.transition = {{0.95, 0.03, 0.02}, {0.02, 0.96, 0.02}, {0.02, 0.03, 0.95}};
  const double gamma = 0.1, sigma = 0.01;
  truth.means = {-gamma, 0.0, gamma};
  truth.vars = {sigma * sigma, sigma * sigma, sigma * sigma};
  auto sample = [&](std::size_t n, std::vector<std::size_t>* states) {
    std::vector<double> r;
    std::size_t s = static_cast<std::size_t>(uniform_int(rng, 0, 2));
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) {
        double u = uniform(rng, 0.0, 1.0);
        std::size_t k = 0;
        while (k < 2 && u >= truth.transition[s][k]) u -= truth.transition[s][k++];
        s = k;
      }
      if (states) states->push_back(s);
      r.push_back(truth.means[s] + sigma * standard_normal(rng));
    }
    return r;
  };

  // Monotone log-likelihood on every fit: synthetic data and each
  // training dynamic shifted to positive prices.
  int fits = 0;
  double worst_drop = 0.0;
  auto check = [&](const mle::HmmFitResult& f) {
    ++fits;
    for (std::size_t i = 1; i < f.log_likelihood.size(); ++i) {
      worst_drop = std::max(worst_drop, f.log_likelihood[i - 1] - f.log_likelihood[i]);
    }
  };
  for (std::uint64_t k = 0; k < 3; ++k) {
    mle::HmmFitOptions o;
    o.seed = k;
    check(mle::hmm_fit_sequences({sample(1500, nullptr), sample(700, nullptr)}, o));
  }
  for (auto d : kAllDynamics) {
    auto spec = simgen::DatasetSpec::training_defaults(d, 708);
    spec.count = 20;
    spec.configs.noisy_line.y0 = 100.0;
    mle::HmmFitOptions o;
    o.max_iters = 100;
    check(mle::hmm_fit(simgen::make_dataset(spec), o));
  }

  std::vector<std::size_t> states;
  const auto r = sample(5000, &states);
  Series s;
  s.y = {100.0};
  for (double x : r) s.y.push_back(s.y.back() * std::exp(x));
  s.t.resize(s.y.size());
  const auto labels = mle::hmm_classify(truth, s);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    hit += labels[i + 1].value() == static_cast<int>(states[i]) - 1;
  }
  const double acc = static_cast<double>(hit) / static_cast<double>(states.size());
  return {worst_drop <= 1e-9 && acc >= 0.95,
          fmt("%.0f fits, largest log-lik drop %.2e (<=1e-9), accuracy %.4f (>=0.95)", fits, worst_drop, acc)};
}

Outcome bootstrap_sanity() {
  Rng rng = make_rng(808);
  std::vector<double> a(80);
  for (auto& v : a) v = uniform(rng, 0.0, 1.0);
  const auto same = evalkit::bootstrap_median_diff(a, a, 0.99, 10000, 1);
  int covered = 0;
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> x(40), y(40);
    for (auto& v : x) v = standard_normal(rng);
    for (auto& v : y) v = standard_normal(rng);
    covered += evalkit::bootstrap_median_diff(x, y, 0.99, 10000, derive_seed(809, rep)).contains(0.0);
  }
  const double cov = covered / 500.0;
  return {same.contains(0.0) && cov >= 0.97,
          fmt("identical CI [%.4f, %.4f] contains 0, coverage %.3f (>=0.97)", same.ci_low, same.ci_high, cov)};
}

Outcome ols_checks() {
  Rng rng = make_rng(909);
  const std::vector<std::string> cells{"gru", "lstm", "vanilla"};
  const std::vector<std::string> dyn{"markov_switch", "mixed", "noisy_line", "piecewise_ou"};
  const std::vector<double> cell_b{0.0, -0.03, 0.12};
  const std::vector<double> dyn_b{0.0, 0.02, -0.05, 0.07};
  const double b0 = 0.35;
  evalkit::CategoricalFeature fc{"cell", {}}, fd{"dynamic", {}};
  std::vector<double> y, y_exact;
  for (int i = 0; i < 10000; ++i) {
    const auto c = static_cast<std::size_t>(uniform_int(rng, 0, 2));
    const auto d = static_cast<std::size_t>(uniform_int(rng, 0, 3));
    fc.values.push_back(cells[c]);
    fd.values.push_back(dyn[d]);
    y_exact.push_back(b0 + cell_b[c] + dyn_b[d]);
    y.push_back(y_exact.back() + 0.1 * standard_normal(rng));
  }
  const std::vector<double> planted{b0, cell_b[1], cell_b[2], dyn_b[1], dyn_b[2], dyn_b[3]};
  const auto fit = evalkit::ols_fit(y, {fc, fd});
  const auto exact = evalkit::ols_fit(y_exact, {fc, fd});
  double worst_z = 0.0, worst_exact = 0.0;
  for (std::size_t k = 0; k < planted.size(); ++k) {
    worst_z = std::max(worst_z, std::abs(fit.coefficients[k].coef - planted[k]) / fit.coefficients[k].std_err);
    worst_exact = std::max(worst_exact, std::abs(exact.coefficients[k].coef - planted[k]));
  }
  // Residual-design orthogonality, rebuilding the one-hot design.
  double worst_dot = 0.0;
  for (std::size_t col = 0; col < planted.size(); ++col) {
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      double x = 1.0;
      if (col == 1) x = fc.values[i] == "lstm";
      if (col == 2) x = fc.values[i] == "vanilla";
      if (col == 3) x = fd.values[i] == "mixed";
      if (col == 4) x = fd.values[i] == "noisy_line";
      if (col == 5) x = fd.values[i] == "piecewise_ou";
      dot += x * fit.residuals[i];
    }
    worst_dot = std::max(worst_dot, std::abs(dot));
  }
  return {worst_z < 3.0 && worst_exact <= 1e-10 && worst_dot <= 1e-8,
          fmt("max |err|/SE %.2f (<3), noiseless err %.1e (<=1e-10), max |X'e| %.1e (<=1e-8)", worst_z,
              worst_exact, worst_dot)};
}

Outcome ito_identities() {
  // Mean of -sum y dY - (T - Y_T^2 + Y_0^2)/2 on stationary OU paths at dt
  // and 2 dt (the coarse path subsamples the fine one).
  Rng rng = make_rng(1010);
  const double a = 0.5, T = 100.0, dt = 0.05;
  const auto n = static_cast<std::size_t>(T / dt);
  const int paths = 2000;
  auto gap = [](const std::vector<double>& y, double h) {
    const auto I = mle::path_integrals(y, h);
    return -I.int_ydy - 0.5 * (I.T - I.yT * I.yT + I.y0 * I.y0);
  };
  double fine = 0.0, coarse = 0.0;
  for (int r = 0; r < paths; ++r) {
    const auto y = ou_path(rng, 0.0, a, dt, n, std::sqrt(0.5 / a) * standard_normal(rng));
    std::vector<double> sub;
    for (std::size_t k = 0; k < y.size(); k += 2) sub.push_back(y[k]);
    fine += gap(y, dt) / paths;
    coarse += gap(sub, 2.0 * dt) / paths;
  }
  const double ratio = fine / coarse;

  // Gram matrix on random non-degenerate windows of every dynamic.
  std::size_t windows = 0, bad = 0;
  const auto cfg = simgen::DynamicConfigs::defaults_for(simgen::Role::kTrain);
  for (auto d : kAllDynamics) {
    for (std::uint64_t k = 0; k < 20; ++k) {
      const auto s = simgen::generate(d, cfg, derive_seed(1011, {static_cast<std::uint64_t>(d), k}));
      for (std::size_t end = 20; end < s.size(); end += 7) {
        std::span<const double> w(s.y.data() + end - 20, 20);
        const auto I = mle::path_integrals(w, 1.0);
        if (I.denominator() == 0.0) continue;
        ++windows;
        const double det = I.T * I.int_y2 - I.int_y * I.int_y;
        bad += !(det > 0.0 && I.T + I.int_y2 > 0.0);
      }
    }
  }
  return {ratio >= 0.4 && ratio <= 0.6 && bad == 0,
          fmt("gap ratio %.3f (0.5 +- 20%%), %.0f windows, %.0f not positive definite", ratio,
              static_cast<double>(windows), static_cast<double>(bad))};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  if (g_cli.empty()) return {false, "no CLI path given"};
  const fs::path root = fs::temp_directory_path() / "trendlab_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> commands{
      "gen --role train --count 12 --seed 4 --out train.jsonl",
      "gen --role validation --count 6 --seed 5 --out val.jsonl",
      "gen --role validation --count 3 --seed 5 --csv-dir csv --out small.jsonl",
      "train --data train.jsonl --cell gru --layers 1 --hidden 6 --dropout 0 --epochs 3 --seed 2 --out gru.json",
      "train --data train.jsonl --cell lstm --layers 2 --hidden 4 --epochs 3 --seed 2 --out lstm.json",
      "gen --role train --dynamic markov_switch --count 5 --seed 8 --out ms.jsonl",
      "train --data ms.jsonl --kind hmm --seed 2 --out hmm.json",
      "train --sweep '{\"seed\":1,\"count\":6,\"epochs\":2,\"grid\":{\"dynamic\":[\"noisy_line\"],"
      "\"cell\":[\"vanilla\"],\"hidden_dim\":[3]}}' --out-dir sweep",
      "train --data train.jsonl --kind convex --epochs 2 --seed 2 --out convex.json",
      "eval --data val.jsonl --model gru=gru.json --model lstm=lstm.json --model convex.json --estimator ma "
      "--estimator dummy --seed 3 --out-prefix ev",
      "compare --losses ev_losses.csv --resamples 500 --seed 1 --out-prefix cmp",
      "report --losses ev_losses.csv --out-prefix rep",
      "plot-state --model convex.json --length 120 --seed 1 --out state.svg",
      "plot-state --model gru.json --length 120 --seed 1 --out gru_state.svg",
      "calibrate --csv prices.csv --candidates 8 --draws 2 --seed 1 --out calib.json",
      "gen --role train --count 4 --seed 6 --dynamics calib.json --out calibrated.jsonl",
  };
  std::vector<fs::path> dirs{root / "a", root / "b"};
  for (const auto& d : dirs) {
    fs::create_directories(d);
    std::ofstream prices(d / "prices.csv");
    prices << "day,price\n";
    double px = 100.0;
    Rng prng = make_rng(1111);
    for (int i = 0; i < 300; ++i) {
      prices << i << ',' << px << '\n';
      px *= std::exp(0.01 * standard_normal(prng));
    }
    prices.close();
    for (const auto& c : commands) {
      const std::string cmd = "cd '" + d.string() + "' && '" + g_cli + "' " + c + " >/dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + c};
    }
  }
  std::set<std::string> names;
  auto files_under = [](const fs::path& d) {
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(d)) {
      if (e.is_regular_file()) out.insert(fs::relative(e.path(), d).string());
    }
    return out;
  };
  names = files_under(dirs[0]);
  std::size_t compared = 0;
  for (const auto& n : names) {
    if (!fs::exists(dirs[1] / n)) return {false, "missing in rerun: " + n};
    if (slurp(dirs[0] / n) != slurp(dirs[1] / n)) return {false, "bytes differ: " + n};
    ++compared;
  }
  const std::size_t other = files_under(dirs[1]).size() - names.size();
  fs::remove_all(root);
  return {compared >= 20 && other == 0,
          fmt("%.0f files byte-identical across reruns", static_cast<double>(compared))};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_cli = fs::absolute(argv[1]).string();
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"NLE variance law", nle_variance_law},
      {"OU estimator recovery", ou_recovery},
      {"gradient correctness", gradient_correctness},
      {"convex net bounded/divergent dichotomy", convex_dichotomy},
      {"baseline ordering at desk scale", baseline_ordering},
      {"dummy floor", dummy_floor},
      {"HMM monotone EM and decoding accuracy", hmm_checks},
      {"bootstrap sanity", bootstrap_sanity},
      {"OLS recovery and orthogonality", ols_checks},
      {"Ito gap and Gram positivity", ito_identities},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s [%2d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
