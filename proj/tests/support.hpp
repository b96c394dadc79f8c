#pragma once

// Hand-rolled generators for property tests: every case gets its own
// seeded stream so a failure names a reproducible case index.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "trendlab/rng.hpp"
#include "trendlab/types.hpp"

namespace testsupport {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(trendlab::make_rng(seed)) {}

  double real(double lo, double hi) { return trendlab::uniform(rng_, lo, hi); }
  long integer(long lo, long hi) { return trendlab::uniform_int(rng_, lo, hi); }
  double normal(double sd = 1.0) { return sd * trendlab::standard_normal(rng_); }
  bool coin() { return integer(0, 1) == 1; }

  std::vector<double> reals(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }
  std::vector<double> normals(std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = normal(sd);
    return v;
  }
  trendlab::LabelSeq labels(std::size_t n) {
    trendlab::LabelSeq v(n);
    for (auto& l : v) l = trendlab::TrendLabel::from_int(static_cast<int>(integer(-1, 1)));
    return v;
  }
  /// Random walk with unit time step; positive when `positive` is set.
  trendlab::Series walk(std::size_t n, double sd, bool positive = false) {
    trendlab::Series s;
    s.id = "gen";
    double y = positive ? 0.0 : normal();
    for (std::size_t i = 0; i < n; ++i) {
      s.t.push_back(static_cast<double>(i));
      s.y.push_back(positive ? std::exp(y) : y);
      s.labels.push_back(trendlab::TrendLabel::from_int(static_cast<int>(integer(-1, 1))));
      y += normal(sd);
    }
    return s;
  }
  trendlab::Rng& rng() { return rng_; }

 private:
  trendlab::Rng rng_;
};

/// Runs `body(gen)` for `cases` independent seeded generators.
template <typename F>
void for_all(int cases, std::uint64_t seed, F&& body) {
  for (int i = 0; i < cases; ++i) {
    SCOPED_TRACE("property case " + std::to_string(i));
    Gen g(trendlab::derive_seed(seed, static_cast<std::uint64_t>(i)));
    body(g);
    if (::testing::Test::HasFatalFailure()) return;
  }
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline std::string temp_path(const std::string& name) {
  return ::testing::TempDir() + "trendlab_" + name;
}

}  // namespace testsupport
