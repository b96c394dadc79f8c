#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "support.hpp"
#include "trendlab/classical.hpp"
#include "trendlab/evalkit.hpp"

using namespace trendlab;
using namespace trendlab::classical;
using testsupport::for_all;
using testsupport::Gen;

namespace {

// Closed form of e_t = mu e_{t-1} + (1-mu) t started at e_{-1} = 0:
// e_t = t - mu/(1-mu) (1 - mu^t).
double ema_of_ramp(double mu, double t) { return t - mu / (1.0 - mu) * (1.0 - std::pow(mu, t)); }

ConvexNetParams random_stochastic(Gen& g, std::size_t m) {
  ConvexNetParams p = ConvexNetParams::ema_bank(m);
  for (auto& v : p.w_hh.values()) v = g.real(0.0, 1.0);
  for (auto& v : p.w_ih) v = g.real(0.2, 1.0);
  project_stochastic(p);
  for (auto& v : p.w_out.values()) v = g.normal();
  return p;
}

Eigen::MatrixXd to_eigen(const numeric::Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

double sup_norm(const std::vector<double>& h) {
  double s = 0.0;
  for (double v : h) s = std::max(s, std::abs(v));
  return s;
}

}  // namespace

TEST(MovingAverage, ConstantSeriesIsFlat) {
  const std::vector<double> x(200, 3.7);
  for (auto l : ma_classify(MaConfig{}, x)) EXPECT_EQ(l, TrendLabel::kFlat);
}

TEST(MovingAverage, RampCrossingMatchesClosedForm) {
  const MaConfig cfg{0.95, 0.48, 0.1};
  for (double scale : {1.0, 0.01, 0.006}) {
    std::vector<double> x(400);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = scale * static_cast<double>(t);
    long crossing = -1;
    for (std::size_t t = 0; t < x.size() && crossing < 0; ++t) {
      const double gap = scale * (ema_of_ramp(cfg.mu_fast, t) - ema_of_ramp(cfg.mu_slow, t));
      if (gap > cfg.epsilon) crossing = static_cast<long>(t);
    }
    ASSERT_GE(crossing, 0) << scale;
    const auto labels = ma_classify(cfg, x);
    for (std::size_t t = 0; t < x.size(); ++t) {
      EXPECT_EQ(labels[t], static_cast<long>(t) >= crossing ? TrendLabel::kUp : TrendLabel::kFlat)
          << "scale " << scale << " t " << t;
    }
  }
  // Frozen from the closed form above.
  std::vector<double> x(100);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = 0.01 * static_cast<double>(t);
  const auto labels = ma_classify(cfg, x);
  EXPECT_EQ(labels[16], TrendLabel::kFlat);
  EXPECT_EQ(labels[17], TrendLabel::kUp);
}

TEST(MovingAverage, SignFlipNegatesAndShiftIsInvariant) {
  for_all(50, 11, [](Gen& g) {
    const MaConfig cfg{g.real(0.6, 0.99), g.real(0.05, 0.55), g.real(0.0, 0.3)};
    auto s = g.walk(static_cast<std::size_t>(g.integer(2, 300)), g.real(0.01, 1.0));
    const auto base = ma_classify(cfg, s.y);
    auto flipped = s.y;
    for (auto& v : flipped) v = -v;
    const auto neg = ma_classify(cfg, flipped);
    auto shifted = s.y;
    const double c = g.integer(-100, 100);
    for (auto& v : shifted) v += c;
    const auto sh = ma_classify(cfg, shifted);
    for (std::size_t t = 0; t < base.size(); ++t) {
      EXPECT_EQ(neg[t], base[t].negated());
      EXPECT_EQ(sh[t], base[t]);
    }
  });
}

TEST(MovingAverage, InvalidConfigRejected) {
  EXPECT_THROW((MaConfig{0.4, 0.5, 0.1}.validate()), ConfigError);
  EXPECT_THROW((MaConfig{0.9, 0.5, -0.1}.validate()), ConfigError);
  EXPECT_THROW((MaConfig{1.0, 0.5, 0.1}.validate()), ConfigError);
  EXPECT_THROW(ma_classify(MaConfig{}, std::vector<double>{}), InputError);
}

TEST(MovingAverage, GridSearchReturnsBestCandidate) {
  auto spec = simgen::DatasetSpec::training_defaults(Dynamic::kNoisyLine, 3);
  spec.count = 8;
  const auto ds = simgen::make_dataset(spec);
  MaGrid grid{{0.3, 0.7, 0.95}, {0.0, 0.05}};
  const auto res = ma_grid_search(ds, grid);
  EXPECT_LT(res.best.mu_fast, res.best.mu_slow);
  double best = 1.0;
  for (double s : grid.mu_values)
    for (double f : grid.mu_values)
      for (double e : grid.eps_values) {
        if (!(f < s)) continue;
        std::vector<double> losses;
        for (const auto& x : ds.series)
          losses.push_back(evalkit::series_loss(ma_classify({s, f, e}, x.y), x.labels));
        best = std::min(best, numeric::median(losses));
      }
  EXPECT_DOUBLE_EQ(res.median_loss, best);
}

TEST(ConvexNet, DimensionOneIsSingleEma) {
  for (double alpha : {0.1, 0.5, 0.93}) {
    ConvexNetParams p = ConvexNetParams::ema_bank(1);
    p.w_hh(0, 0) = alpha;
    p.w_ih[0] = 1.0 - alpha;
    Gen g(7);
    const auto y = g.normals(300);
    const auto traj = convex_forward(p, y);
    double ema = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      ema = alpha * ema + (1.0 - alpha) * y[t];
      EXPECT_DOUBLE_EQ(traj.states[t][0], ema);
    }
  }
}

TEST(ConvexNet, ConstantInputReachesLinearFixedPoint) {
  for_all(10, 21, [](Gen& g) {
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 6));
    const auto p = random_stochastic(g, m);
    const double c = g.real(-5.0, 5.0);
    const auto traj = convex_forward(p, std::vector<double>(10000, c));
    Eigen::VectorXd w(m);
    for (std::size_t i = 0; i < m; ++i) w(i) = p.w_ih[i];
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m) - to_eigen(p.w_hh);
    const Eigen::VectorXd fixed = c * a.partialPivLu().solve(w);
    for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(traj.states.back()[i], fixed(i), 1e-8);
  });
}

TEST(ConvexNet, TrendingInputDiverges) {
  const auto p = ConvexNetParams::ema_bank(5);
  std::vector<double> y(10001);
  for (std::size_t t = 0; t < y.size(); ++t) y[t] = static_cast<double>(t);
  const auto traj = convex_forward(p, y);
  EXPECT_GT(sup_norm(traj.states.back()), 1e3);
  for (double v : traj.states.back()) EXPECT_GT(v, 1e3);

  // Long-run slope of the sup norm tracks mu and respects mu * min(w_ih).
  for (double mu : {0.5, -2.0}) {
    std::vector<double> z(20001);
    for (std::size_t t = 0; t < z.size(); ++t) z[t] = mu * static_cast<double>(t);
    const auto tr = convex_forward(p, z);
    const double slope = (sup_norm(tr.states[20000]) - sup_norm(tr.states[10000])) / 10000.0;
    const double min_w = *std::min_element(p.w_ih.begin(), p.w_ih.end());
    EXPECT_GE(slope, std::abs(mu) * min_w);
    EXPECT_NEAR(slope, std::abs(mu), 0.2 * std::abs(mu));
  }
}

TEST(ConvexNet, PureNoiseStaysBounded) {
  const auto p = ConvexNetParams::ema_bank(5);
  const std::size_t m = p.dim();
  // Stationary covariance: S = W S W' + w w', iterated to convergence.
  const Eigen::MatrixXd w = to_eigen(p.w_hh);
  Eigen::VectorXd b(m);
  for (std::size_t i = 0; i < m; ++i) b(i) = p.w_ih[i];
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < 2000; ++k) cov = w * cov * w.transpose() + b * b.transpose();
  const double sd = std::sqrt(cov.diagonal().maxCoeff());

  Gen g(99);
  const auto y = g.normals(100000);
  const auto traj = convex_forward(p, y);
  double worst = 0.0;
  double first_half = 0.0;
  double second_half = 0.0;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const double n = sup_norm(traj.states[t]);
    worst = std::max(worst, n);
    (t < 50000 ? first_half : second_half) += n / 50000.0;
  }
  EXPECT_LT(worst, 10.0 * sd);
  EXPECT_NEAR(first_half, second_half, 0.05 * first_half);
}

TEST(ConvexNet, ProjectionExamples) {
  std::vector<double> a{2, 1, 1};
  project_row(a);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.25);
  EXPECT_DOUBLE_EQ(a[2], 0.25);
  std::vector<double> b{-1, 1, 1};
  project_row(b);
  EXPECT_DOUBLE_EQ(b[0], 0.0);
  EXPECT_DOUBLE_EQ(b[1], 0.5);
  EXPECT_DOUBLE_EQ(b[2], 0.5);
  std::vector<double> c{-1, 0, -3, 0};
  project_row(c);
  for (double v : c) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(ConvexNet, ProjectionGivesStochasticRows) {
  for_all(100, 31, [](Gen& g) {
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 8));
    ConvexNetParams p = ConvexNetParams::ema_bank(m);
    for (auto& v : p.w_hh.values()) v = g.normal(2.0);
    for (auto& v : p.w_ih) v = g.normal(2.0);
    project_stochastic(p);
    for (std::size_t i = 0; i < m; ++i) {
      double s = p.w_ih[i];
      EXPECT_GE(p.w_ih[i], kMinInputWeight);
      for (std::size_t j = 0; j < m; ++j) {
        EXPECT_GE(p.w_hh(i, j), 0.0);
        s += p.w_hh(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  });
}

TEST(ConvexNet, SpectralRadiusMatchesEigenvalues) {
  for_all(30, 41, [](Gen& g) {
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 7));
    numeric::Matrix w(m, m);
    for (auto& v : w.values()) v = g.real(0.01, 1.0);
    const Eigen::EigenSolver<Eigen::MatrixXd> es(to_eigen(w));
    const double expected = es.eigenvalues().cwiseAbs().maxCoeff();
    EXPECT_NEAR(spectral_radius(w), expected, 1e-6 * expected);
  });
}

TEST(ConvexNet, ValidateRejectsBrokenRows) {
  auto p = ConvexNetParams::ema_bank(3);
  EXPECT_NO_THROW(p.validate());
  p.w_ih[1] += 0.01;
  EXPECT_THROW(p.validate(), ParamError);
  p = ConvexNetParams::ema_bank(3);
  p.w_hh(0, 0) += 0.1;
  p.w_ih[0] -= 0.1 + p.w_ih[0] + 0.05;
  EXPECT_THROW(p.validate(), ParamError);
}

TEST(ConvexNet, TrainingKeepsStochasticInvariant) {
  auto spec = simgen::DatasetSpec::training_defaults(std::nullopt, 5);
  spec.count = 12;
  const auto ds = simgen::make_dataset(spec);
  ConvexTrainOptions opts;
  opts.epochs = 3;
  opts.seed = 8;
  const auto res = convex_train(ds, opts);
  ASSERT_FALSE(res.failed) << res.failure_reason;
  EXPECT_EQ(res.epoch_loss.size(), 3u);
  EXPECT_NO_THROW(res.params.validate());
  const auto again = convex_train(ds, opts);
  EXPECT_EQ(again.params.w_out.values(), res.params.w_out.values());
  EXPECT_EQ(again.params.w_hh.values(), res.params.w_hh.values());
}

TEST(ConvexNet, JsonRoundTrip) {
  Gen g(3);
  const auto p = random_stochastic(g, 4);
  const auto back = convex_from_json(nlohmann::json::parse(convex_to_json(p).dump()));
  EXPECT_EQ(back.w_hh.values(), p.w_hh.values());
  EXPECT_EQ(back.w_ih, p.w_ih);
  EXPECT_EQ(back.w_out.values(), p.w_out.values());
  EXPECT_EQ(back.b_out, p.b_out);
  auto bad = convex_to_json(p);
  bad["format_version"] = 99;
  EXPECT_THROW(convex_from_json(bad), FormatError);

  const MaConfig ma{0.9, 0.2, 0.05};
  const auto mb = ma_from_json(nlohmann::json::parse(ma_to_json(ma).dump()));
  EXPECT_EQ(mb.mu_slow, ma.mu_slow);
  EXPECT_EQ(mb.mu_fast, ma.mu_fast);
  EXPECT_EQ(mb.epsilon, ma.epsilon);
}

TEST(Dummy, LossIsTwoThirdsOnValidation) {
  const auto ds = simgen::make_dataset(simgen::DatasetSpec::validation_defaults(17));
  ASSERT_EQ(ds.series.size(), 300u);
  double total = 0.0;
  for (std::size_t k = 0; k < ds.series.size(); ++k) {
    const auto& s = ds.series[k];
    total += evalkit::series_loss(dummy_classify(s.size(), derive_seed(5, k)), s.labels);
  }
  EXPECT_NEAR(total / 300.0, 2.0 / 3.0, 0.02);
}

TEST(Dummy, SeededAndSelfConsistent) {
  const auto a = dummy_classify(500, 4);
  EXPECT_EQ(a, dummy_classify(500, 4));
  EXPECT_NE(a, dummy_classify(500, 5));
  EXPECT_EQ(evalkit::series_loss(a, a), 0.0);
  std::array<int, 3> counts{};
  for (auto l : a) ++counts[l.index()];
  for (int c : counts) EXPECT_GT(c, 120);
}
