#pragma once

// Labelled trending series under three dynamics: piecewise noisy line,
// piecewise Ornstein-Uhlenbeck and a three-state Markov switch on
// log-returns. Generators are pure functions of (config, seed).

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendlab/types.hpp"

namespace trendlab::simgen {

struct IntRange {
  long min = 1;
  long max = 1;
};

struct RealRange {
  double min = 0.0;
  double max = 0.0;
};

struct NoisyLineConfig {
  double gamma = 1.4;        // max slope
  int n_slopes = 4;          // slope grid is {k * gamma / n_slopes : |k| <= n_slopes}
  double sigma_max = 0.07;   // per-segment noise drawn in (0, sigma_max]
  IntRange n_segments{1, 10};
  IntRange segment_len{50, 100};
  double y0 = 0.0;
  double dt = 1.0;  // time step; slopes are per unit time

  void validate() const;
};

struct OuConfig {
  RealRange a{0.02, 0.05};
  double sigma = 0.1;
  RealRange mu{0.2, 1.0};
  IntRange n_segments{2, 6};
  IntRange segment_len{40, 400};
  double dt = 1.0;
  double y0 = 10.0;
  double rho = 0.02;  // flat-label tolerance on |Y_inf / anchor - 1|

  void validate() const;
};

struct MarkovSwitchConfig {
  // Rows and columns ordered (down, flat, up).
  std::array<std::array<double, 3>, 3> transition{{{0.98, 0.01, 0.01},
                                                   {0.01, 0.98, 0.01},
                                                   {0.01, 0.01, 0.98}}};
  double gamma = 0.005;
  double sigma = 0.01;
  std::array<double, 3> initial_dist{1.0 / 3, 1.0 / 3, 1.0 / 3};
  IntRange length{500, 1000};

  void validate() const;
};

void to_json(nlohmann::json& j, const IntRange& r);
void from_json(const nlohmann::json& j, IntRange& r);
void to_json(nlohmann::json& j, const RealRange& r);
void from_json(const nlohmann::json& j, RealRange& r);
void to_json(nlohmann::json& j, const NoisyLineConfig& c);
void from_json(const nlohmann::json& j, NoisyLineConfig& c);
void to_json(nlohmann::json& j, const OuConfig& c);
void from_json(const nlohmann::json& j, OuConfig& c);
void to_json(nlohmann::json& j, const MarkovSwitchConfig& c);
void from_json(const nlohmann::json& j, MarkovSwitchConfig& c);

// Explicit segment plans, used by the generators after sampling and
// directly by callers that need controlled paths.
struct LineSegment {
  double slope = 0.0;
  double sigma = 0.0;
  long length = 1;
};

struct OuSegment {
  double a = 1.0;
  double mu = 0.0;
  long length = 1;
  double y_inf() const { return mu / a; }
};

/// Noisy line from an explicit plan. The first point sits at y0 (plus the
/// first segment's noise); segment i then covers `length` further points
/// anchored at the noiseless end value of the previous segment. Points
/// are dt apart in time.
Series simulate_noisy_line(const std::vector<LineSegment>& plan, double y0,
                           std::uint64_t seed, double dt = 1.0);

/// Piecewise OU path by exact discretization. Labels compare each
/// segment's attractor with the noiseless anchor at the segment start.
Series simulate_piecewise_ou(const std::vector<OuSegment>& plan, double sigma,
                             double dt, double y0, double rho,
                             std::uint64_t seed);

TrendLabel ou_segment_label(double y_inf, double anchor, double rho);

Series generate_noisy_line(const NoisyLineConfig& cfg, std::uint64_t seed);
Series generate_piecewise_ou(const OuConfig& cfg, std::uint64_t seed);
Series generate_markov_switch(const MarkovSwitchConfig& cfg, std::uint64_t seed);

enum class Role { kTrain, kTest, kValidation };
std::string_view to_string(Role r);
Role parse_role(std::string_view s);

struct DynamicConfigs {
  NoisyLineConfig noisy_line;
  OuConfig piecewise_ou;
  MarkovSwitchConfig markov_switch;

  /// Role-specific defaults: training sets use the per-dynamic length
  /// ranges of the reference protocol, validation series have 500-1000
  /// points.
  static DynamicConfigs defaults_for(Role role);
  /// Multiplies every noise parameter by `scale`.
  void scale_noise(double scale);
};

void to_json(nlohmann::json& j, const DynamicConfigs& c);
/// Fields absent from `j` keep the values already in `c`.
void merge_from_json(const nlohmann::json& j, DynamicConfigs& c);

struct DatasetSpec {
  Role role = Role::kTrain;
  /// Empty means the mixed dynamic (round-robin over the three).
  std::optional<Dynamic> dynamic;
  /// Training/test: total count. Validation: count per dynamic.
  long count = 1000;
  DynamicConfigs configs = DynamicConfigs::defaults_for(Role::kTrain);
  std::uint64_t seed = 0;

  static DatasetSpec validation_defaults(std::uint64_t seed);
  static DatasetSpec training_defaults(std::optional<Dynamic> dynamic,
                                       std::uint64_t seed);
};

struct Dataset {
  Role role = Role::kTrain;
  std::vector<Series> series;
  std::map<Dynamic, long> composition() const;
};

Series generate(Dynamic d, const DynamicConfigs& configs, std::uint64_t seed);

/// Rebuilds a series from its stored gen_params and seed.
Series regenerate(const Series& s);

Dataset make_dataset(const DatasetSpec& spec);

// Serialization: one JSON record per line, header-free.
void write_jsonl(const Dataset& ds, std::ostream& out);
Dataset read_jsonl(std::istream& in);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// CSV with columns t,y,label.
void write_series_csv(const Series& s, std::ostream& out);

}  // namespace trendlab::simgen
