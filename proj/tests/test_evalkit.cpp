#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"
#include "trendlab/evalkit.hpp"
#include "trendlab/tensornet.hpp"

using namespace trendlab;
using namespace trendlab::evalkit;
using testsupport::for_all;
using testsupport::Gen;

namespace {

// W1 as the integral of |F_a - F_b| over the merged support.
double w1_by_cdf(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> pts(a);
  pts.insert(pts.end(), b.begin(), b.end());
  std::sort(pts.begin(), pts.end());
  auto cdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::upper_bound(s.begin(), s.end(), x) - s.begin()) /
           static_cast<double>(s.size());
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    total += std::abs(cdf(a, pts[i]) - cdf(b, pts[i])) * (pts[i + 1] - pts[i]);
  }
  return total;
}

}  // namespace

TEST(SeriesLoss, Examples) {
  const LabelSeq a{TrendLabel::kUp, TrendLabel::kFlat, TrendLabel::kDown};
  const LabelSeq b{TrendLabel::kDown, TrendLabel::kUp, TrendLabel::kFlat};
  EXPECT_EQ(series_loss(a, a), 0.0);
  EXPECT_EQ(series_loss(a, b), 1.0);
  EXPECT_THROW(series_loss(a, LabelSeq(2)), InputError);
  EXPECT_THROW(series_loss(LabelSeq{}, LabelSeq{}), InputError);
}

TEST(SeriesLoss, UniformPredictorExpectation) {
  Gen g(1);
  double total = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const auto truth = g.labels(50);
    total += series_loss(g.labels(50), truth);
  }
  EXPECT_NEAR(total / 10000.0, 2.0 / 3.0, 0.01);
}

TEST(SeriesLoss, MetricLikeProperties) {
  for_all(200, 2, [](Gen& g) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 40));
    const auto a = g.labels(n);
    const auto b = g.labels(n);
    const double l = series_loss(a, b);
    EXPECT_EQ(l, series_loss(b, a));
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
    EXPECT_EQ(l == 0.0, a == b);
  });
}

TEST(Summary, InterpolatedQuantiles) {
  const auto g = summarize_sample("x", {0.4, 0.1, 0.3, 0.2});
  EXPECT_DOUBLE_EQ(g.median, 0.25);
  EXPECT_DOUBLE_EQ(g.q1, 0.175);
  EXPECT_DOUBLE_EQ(g.q3, 0.325);
  EXPECT_DOUBLE_EQ(g.iqr, 0.15);
  const auto one = summarize_sample("y", {0.7});
  EXPECT_EQ(one.median, 0.7);
  EXPECT_EQ(one.q1, 0.7);
  EXPECT_EQ(one.q3, 0.7);
  EXPECT_EQ(one.iqr, 0.0);
  EXPECT_THROW(summarize_sample("z", {}), InputError);
}

TEST(Summary, GroupsInFirstSeenOrderThenAll) {
  const auto r = summarize({{"a", "ou", 0.2}, {"b", "nl", 0.4}, {"c", "ou", 0.6}, {"d", "nl", 0.0}});
  ASSERT_EQ(r.groups.size(), 3u);
  EXPECT_EQ(r.groups[0].group, "ou");
  EXPECT_EQ(r.groups[1].group, "nl");
  EXPECT_EQ(r.overall().group, "all");
  EXPECT_DOUBLE_EQ(r.find("ou")->median, 0.4);
  EXPECT_DOUBLE_EQ(r.find("nl")->median, 0.2);
  EXPECT_DOUBLE_EQ(r.overall().median, 0.3);
  EXPECT_EQ(r.overall().count, 4u);
  EXPECT_EQ(r.find("ms"), nullptr);
  const nlohmann::json j = r;
  EXPECT_TRUE(j.contains("groups"));
}

TEST(Summary, QuartileOrdering) {
  for_all(100, 3, [](Gen& g) {
    const auto v = g.reals(static_cast<std::size_t>(g.integer(1, 50)), 0.0, 1.0);
    const auto s = summarize_sample("g", v);
    EXPECT_LE(s.q1, s.median);
    EXPECT_LE(s.median, s.q3);
    EXPECT_DOUBLE_EQ(s.iqr, s.q3 - s.q1);
  });
}

TEST(Bootstrap, IdenticalSamplesContainZero) {
  Gen g(4);
  const auto a = g.reals(60, 0.0, 1.0);
  const auto r = bootstrap_median_diff(a, a, 0.99, 10000, 5);
  EXPECT_EQ(r.point_diff, 0.0);
  EXPECT_TRUE(r.contains(0.0));
  EXPECT_LE(r.ci_low, r.ci_high);
  EXPECT_EQ(r.n_resamples, 10000u);
}

TEST(Bootstrap, ShiftIsRecovered) {
  Gen g(5);
  const auto a = g.normals(200, 0.01);
  auto b = a;
  for (auto& v : b) v += 1.0;
  const auto r = bootstrap_median_diff(a, b, 0.99, 5000, 6);
  EXPECT_NEAR(r.point_diff, -1.0, 1e-12);
  EXPECT_NEAR(r.ci_low, -1.0, 0.01);
  EXPECT_NEAR(r.ci_high, -1.0, 0.01);
  EXPECT_FALSE(r.contains(0.0));
}

TEST(Bootstrap, DeterministicAndMirroredUnderSwap) {
  for_all(20, 6, [](Gen& g) {
    const auto a = g.normals(static_cast<std::size_t>(g.integer(1, 40)));
    const auto b = g.normals(static_cast<std::size_t>(g.integer(1, 40)));
    const auto seed = static_cast<std::uint64_t>(g.integer(0, 1 << 20));
    const auto r1 = bootstrap_median_diff(a, b, 0.95, 500, seed);
    const auto r2 = bootstrap_median_diff(a, b, 0.95, 500, seed);
    EXPECT_EQ(r1.ci_low, r2.ci_low);
    EXPECT_EQ(r1.ci_high, r2.ci_high);
    const auto s = bootstrap_median_diff(b, a, 0.95, 500, seed);
    EXPECT_DOUBLE_EQ(s.point_diff, -r1.point_diff);
    EXPECT_LE(s.ci_low, s.ci_high);
    // Swapping the samples mirrors the interval up to resampling noise.
    const double width = r1.ci_high - r1.ci_low;
    EXPECT_NEAR(s.ci_low, -r1.ci_high, 0.5 * width + 1e-12);
    EXPECT_NEAR(s.ci_high, -r1.ci_low, 0.5 * width + 1e-12);
  });
}

TEST(Bootstrap, CoverageOnSameDistribution) {
  Gen g(7);
  int covered = 0;
  for (int rep = 0; rep < 500; ++rep) {
    const auto a = g.normals(40);
    const auto b = g.normals(40);
    covered += bootstrap_median_diff(a, b, 0.99, 2000, derive_seed(8, rep)).contains(0.0);
  }
  EXPECT_GE(covered, 485);
}

TEST(Bootstrap, StratifiedMatchesPooledOnOneStratum) {
  Gen g(9);
  const auto a = g.normals(30);
  const auto b = g.normals(25);
  const auto p = bootstrap_median_diff(a, b, 0.9, 300, 1);
  const auto s = bootstrap_median_diff_stratified({a}, {b}, 0.9, 300, 1);
  EXPECT_DOUBLE_EQ(p.point_diff, s.point_diff);
  EXPECT_TRUE(s.ci_low <= s.ci_high);
}

TEST(Ols, NoiselessBinaryFeatureIsExact) {
  std::vector<double> y;
  CategoricalFeature x{"x", {}};
  for (int i = 0; i < 20; ++i) {
    const bool on = i % 3 == 0;
    x.values.push_back(on ? "b" : "a");
    y.push_back(on ? 5.0 : 2.0);
  }
  const auto fit = ols_fit(y, {x});
  ASSERT_EQ(fit.coefficients.size(), 2u);
  EXPECT_EQ(fit.coefficients[0].name, "intercept");
  EXPECT_EQ(fit.coefficients[1].name, "x[b]");
  EXPECT_NEAR(fit.coefficients[0].coef, 2.0, 1e-10);
  EXPECT_NEAR(fit.coefficients[1].coef, 3.0, 1e-10);
}

TEST(Ols, PlantedCoefficientsWithinThreeStdErrors) {
  Gen g(10);
  const std::vector<std::string> cells{"gru", "lstm", "vanilla"};
  const std::vector<std::string> opts{"adam", "rmsprop"};
  // Baselines gru and adam are dropped.
  const double b0 = 0.3, b_lstm = -0.02, b_van = 0.15, b_rms = 0.04;
  std::vector<double> y;
  CategoricalFeature cell{"cell", {}};
  CategoricalFeature opt{"optimizer", {}};
  for (int i = 0; i < 10000; ++i) {
    const auto c = static_cast<std::size_t>(g.integer(0, 2));
    const auto o = static_cast<std::size_t>(g.integer(0, 1));
    cell.values.push_back(cells[c]);
    opt.values.push_back(opts[o]);
    y.push_back(b0 + (c == 1 ? b_lstm : 0.0) + (c == 2 ? b_van : 0.0) + (o == 1 ? b_rms : 0.0) +
                g.normal(0.1));
  }
  const auto fit = ols_fit(y, {cell, opt});
  const std::vector<std::pair<std::string, double>> planted{
      {"intercept", b0}, {"cell[lstm]", b_lstm}, {"cell[vanilla]", b_van}, {"optimizer[rmsprop]", b_rms}};
  ASSERT_EQ(fit.coefficients.size(), planted.size());
  for (std::size_t k = 0; k < planted.size(); ++k) {
    const auto& c = fit.coefficients[k];
    EXPECT_EQ(c.name, planted[k].first);
    EXPECT_LT(std::abs(c.coef - planted[k].second), 3.0 * c.std_err) << c.name;
    EXPECT_NEAR(c.t, c.coef / c.std_err, 1e-9 * std::abs(c.t));
    EXPECT_NEAR(c.p_value, std::erfc(std::abs(c.t) / std::sqrt(2.0)), 1e-12);
    EXPECT_LT(c.ci_low, c.coef);
    EXPECT_GT(c.ci_high, c.coef);
  }
  EXPECT_EQ(fit.n_rows, 10000u);
  EXPECT_EQ(fit.dof, 10000u - 4u);
}

TEST(Ols, ResidualsOrthogonalToDesign) {
  for_all(20, 11, [](Gen& g) {
    const std::size_t n = static_cast<std::size_t>(g.integer(8, 200));
    const std::size_t p = static_cast<std::size_t>(g.integer(1, 5));
    numeric::Matrix x(n, p);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < p; ++j) names.push_back("c" + std::to_string(j));
    for (auto& v : x.values()) v = g.normal();
    const auto y = g.normals(n);
    const auto fit = ols_fit_design(x, y, names);
    for (std::size_t j = 0; j < p; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += x(i, j) * fit.residuals[i];
      EXPECT_NEAR(dot, 0.0, 1e-8);
    }
  });
}

TEST(Ols, RankDeficiencyNamesColumns) {
  CategoricalFeature a{"a", {"x", "y", "x", "y", "x", "y"}};
  CategoricalFeature b{"b", {"p", "q", "p", "q", "p", "q"}};
  const std::vector<double> y{1, 2, 3, 4, 5, 6};
  try {
    ols_fit(y, {a, b});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("a[y]"), std::string::npos) << what;
    EXPECT_NE(what.find("b[q]"), std::string::npos) << what;
  }
}

TEST(Pooling, ExamplesAndSimplex) {
  const ProbSeq one{ProbTriple{{0.2, 0.3, 0.5}}};
  const ProbSeq two{ProbTriple{{0.4, 0.3, 0.3}}};
  const auto same = pool_probabilities({one});
  EXPECT_EQ(same[0].p, one[0].p);
  const auto pooled = pool_probabilities({one, two});
  EXPECT_NEAR(pooled[0].p[0], 0.3, 1e-15);
  EXPECT_NEAR(pooled[0].p[1], 0.3, 1e-15);
  EXPECT_NEAR(pooled[0].p[2], 0.4, 1e-15);
  EXPECT_THROW(pool_probabilities({one, ProbSeq(2)}), InputError);
  EXPECT_THROW(pool_probabilities({}), InputError);

  for_all(50, 12, [](Gen& g) {
    const std::size_t k = static_cast<std::size_t>(g.integer(1, 6));
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 30));
    std::vector<ProbSeq> members(k, ProbSeq(n));
    for (auto& m : members)
      for (auto& t : m) {
        const auto r = g.reals(3, 0.0, 1.0);
        const double s = r[0] + r[1] + r[2];
        t.p = {r[0] / s, r[1] / s, r[2] / s};
      }
    for (const auto& t : pool_probabilities(members)) EXPECT_NEAR(t.sum(), 1.0, 1e-9);
  });
}

TEST(Pooling, PooledNetsNoWorseThanWorstMember) {
  auto spec = simgen::DatasetSpec::training_defaults(std::nullopt, 40);
  spec.count = 30;
  const auto train = simgen::make_dataset(spec);
  auto vspec = simgen::DatasetSpec::validation_defaults(41);
  vspec.count = 10;
  const auto val = simgen::make_dataset(vspec);

  tensornet::RnnSpec net = tensornet::RnnSpec::baseline();
  net.hidden_dim = 8;
  std::vector<tensornet::RnnModel> models;
  for (std::uint64_t s = 0; s < 5; ++s) {
    tensornet::TrainOptions o;
    o.epochs = 4;
    o.seed = s;
    const auto r = tensornet::train(net, train, o);
    ASSERT_FALSE(r.failed) << r.failure_reason;
    models.push_back({r.params, r.input_scale, {}});
  }
  std::vector<std::vector<double>> member_losses(models.size());
  std::vector<double> pooled_losses;
  for (const auto& s : val.series) {
    std::vector<ProbSeq> outs;
    for (std::size_t m = 0; m < models.size(); ++m) {
      outs.push_back(models[m].predict(s));
      member_losses[m].push_back(series_loss(labels_of(outs.back()), s.labels));
    }
    pooled_losses.push_back(series_loss(labels_of(pool_probabilities(outs)), s.labels));
  }
  double worst = 0.0;
  for (auto& l : member_losses) worst = std::max(worst, numeric::median(l));
  EXPECT_LE(numeric::median(pooled_losses), worst);
}

TEST(Wasserstein, Examples) {
  const std::vector<double> a{0.3, -1.0, 2.0};
  EXPECT_EQ(wasserstein_1d(a, a), 0.0);
  EXPECT_EQ(wasserstein_1d(std::vector<double>{0.0}, std::vector<double>{1.0}), 1.0);
  EXPECT_THROW(wasserstein_1d(a, std::vector<double>{}), InputError);
  Gen g(13);
  auto x = g.normals(10000);
  auto y = g.normals(10000);
  for (auto& v : y) v += 1.0;
  EXPECT_NEAR(wasserstein_1d(x, y), 1.0, 0.05);
}

TEST(Wasserstein, MatchesCdfIntegralAndIsAMetric) {
  for_all(100, 14, [](Gen& g) {
    const auto a = g.normals(static_cast<std::size_t>(g.integer(1, 30)));
    const auto b = g.normals(static_cast<std::size_t>(g.integer(1, 30)), 2.0);
    const auto c = g.reals(static_cast<std::size_t>(g.integer(1, 30)), -1.0, 3.0);
    const double ab = wasserstein_1d(a, b);
    EXPECT_NEAR(ab, w1_by_cdf(a, b), 1e-9);
    EXPECT_NEAR(ab, wasserstein_1d(b, a), 1e-12);
    EXPECT_LE(ab, wasserstein_1d(a, c) + wasserstein_1d(c, b) + 1e-9);
  });
}

TEST(Calibration, SingleCandidateAndRunningMinimum) {
  const auto target = simulated_returns(
      simgen::generate(Dynamic::kNoisyLine, simgen::DynamicConfigs::defaults_for(simgen::Role::kTrain), 3));
  ASSERT_GE(target.size(), 100u);
  const auto one = calibrate(Dynamic::kNoisyLine, target, {4, 1, 9});
  ASSERT_EQ(one.running_min.size(), 1u);
  EXPECT_DOUBLE_EQ(one.distance, calibration_distance(Dynamic::kNoisyLine, one.configs, target, 4,
                                                      derive_seed(9, 1)));
  const auto many = calibrate(Dynamic::kNoisyLine, target, {4, 20, 9});
  EXPECT_EQ(many.running_min.front(), one.distance);
  for (std::size_t k = 1; k < many.running_min.size(); ++k) {
    EXPECT_LE(many.running_min[k], many.running_min[k - 1]);
  }
  EXPECT_GE(many.distance, 0.0);
  EXPECT_EQ(many.distance, many.running_min.back());
  EXPECT_THROW(calibrate(Dynamic::kNoisyLine, target, {4, 0, 9}), ConfigError);
  EXPECT_THROW(calibrate(Dynamic::kNoisyLine, std::span(target).first(99), {4, 1, 9}), InputError);
}

TEST(Calibration, SelfCalibrationReachesNoiseFloor) {
  // Target drawn from a known noisy-line config inside the search space.
  auto truth = simgen::DynamicConfigs::defaults_for(simgen::Role::kTrain);
  truth.noisy_line.gamma = 0.8;
  truth.noisy_line.sigma_max = 0.05;
  truth.noisy_line.segment_len = {300, 400};
  std::vector<double> target;
  for (std::uint64_t k = 0; k < 4; ++k) {
    const auto r = simulated_returns(simgen::generate(Dynamic::kNoisyLine, truth, derive_seed(100, k)));
    target.insert(target.end(), r.begin(), r.end());
  }
  const CalibrationSearch search{8, 200, 21};
  const auto res = calibrate(Dynamic::kNoisyLine, target, search, truth);
  const double floor =
      calibration_distance(Dynamic::kNoisyLine, truth, target, search.n_draws, derive_seed(21, 1));
  EXPECT_LE(res.distance, 1.5 * floor);
}
