#include "trendlab/simgen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "trendlab/parallel.hpp"
#include "trendlab/rng.hpp"

namespace trendlab::simgen {

using nlohmann::json;

namespace {

void check_range(const IntRange& r, long floor, const char* what) {
  if (r.min < floor || r.max < r.min) {
    throw ConfigError(std::string("invalid range for ") + what);
  }
}

void check_range(const RealRange& r, const char* what) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.max < r.min) {
    throw ConfigError(std::string("invalid range for ") + what);
  }
}

long draw(Rng& rng, const IntRange& r) { return uniform_int(rng, r.min, r.max); }
double draw(Rng& rng, const RealRange& r) { return uniform(rng, r.min, r.max); }

// Noise stream of a series is decoupled from its parameter stream so that
// a stored plan plus the series seed reproduces the path.
std::uint64_t noise_seed(std::uint64_t seed) { return derive_seed(seed, 1); }
std::uint64_t plan_seed(std::uint64_t seed) { return derive_seed(seed, 0); }

}  // namespace

void NoisyLineConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("noisy_line: gamma must be > 0");
  if (n_slopes < 1) throw ConfigError("noisy_line: n_slopes must be >= 1");
  if (!(sigma_max > 0.0) || !std::isfinite(sigma_max)) {
    throw ConfigError("noisy_line: sigma_max must be > 0");
  }
  check_range(n_segments, 1, "noisy_line.n_segments");
  check_range(segment_len, 1, "noisy_line.segment_len");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("noisy_line: dt must be > 0");
}

void OuConfig::validate() const {
  check_range(a, "piecewise_ou.a");
  if (!(a.min > 0.0)) throw ConfigError("piecewise_ou: mean-reversion speed a must be > 0");
  check_range(mu, "piecewise_ou.mu");
  if (mu.min < 0.0) throw ConfigError("piecewise_ou: mu must be >= 0");
  if (!(sigma >= 0.0)) throw ConfigError("piecewise_ou: sigma must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("piecewise_ou: dt must be > 0");
  if (!(rho >= 0.0)) throw ConfigError("piecewise_ou: rho must be >= 0");
  if (y0 == 0.0) throw ConfigError("piecewise_ou: y0 must be non-zero");
  check_range(n_segments, 1, "piecewise_ou.n_segments");
  check_range(segment_len, 1, "piecewise_ou.segment_len");
}

void MarkovSwitchConfig::validate() const {
  for (const auto& row : transition) {
    double s = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ConfigError("markov_switch: negative transition probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-12) {
      throw ConfigError("markov_switch: transition rows must sum to 1");
    }
  }
  double s = 0.0;
  for (double p : initial_dist) {
    if (!(p >= 0.0)) throw ConfigError("markov_switch: negative initial probability");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-12) throw ConfigError("markov_switch: initial_dist must sum to 1");
  if (!(gamma >= 0.0)) throw ConfigError("markov_switch: gamma must be >= 0");
  if (!(sigma >= 0.0)) throw ConfigError("markov_switch: sigma must be >= 0");
  check_range(length, 2, "markov_switch.length");
}

void to_json(json& j, const IntRange& r) { j = json::array({r.min, r.max}); }
void from_json(const json& j, IntRange& r) {
  r.min = j.at(0).get<long>();
  r.max = j.at(1).get<long>();
}
void to_json(json& j, const RealRange& r) { j = json::array({r.min, r.max}); }
void from_json(const json& j, RealRange& r) {
  r.min = j.at(0).get<double>();
  r.max = j.at(1).get<double>();
}

void to_json(json& j, const NoisyLineConfig& c) {
  j = json{{"gamma", c.gamma},           {"n_slopes", c.n_slopes},
           {"sigma_max", c.sigma_max},   {"n_segments_range", c.n_segments},
           {"segment_len_range", c.segment_len}, {"y0", c.y0}, {"dt", c.dt}};
}
void from_json(const json& j, NoisyLineConfig& c) {
  c.gamma = j.value("gamma", c.gamma);
  c.n_slopes = j.value("n_slopes", c.n_slopes);
  c.sigma_max = j.value("sigma_max", c.sigma_max);
  if (j.contains("n_segments_range")) c.n_segments = j["n_segments_range"].get<IntRange>();
  if (j.contains("segment_len_range")) c.segment_len = j["segment_len_range"].get<IntRange>();
  c.y0 = j.value("y0", c.y0);
  c.dt = j.value("dt", c.dt);
}

void to_json(json& j, const OuConfig& c) {
  j = json{{"a_range", c.a},
           {"sigma", c.sigma},
           {"mu_range", c.mu},
           {"n_segments_range", c.n_segments},
           {"segment_len_range", c.segment_len},
           {"dt", c.dt},
           {"y0", c.y0},
           {"rho", c.rho}};
}
void from_json(const json& j, OuConfig& c) {
  if (j.contains("a_range")) c.a = j["a_range"].get<RealRange>();
  c.sigma = j.value("sigma", c.sigma);
  if (j.contains("mu_range")) c.mu = j["mu_range"].get<RealRange>();
  if (j.contains("n_segments_range")) c.n_segments = j["n_segments_range"].get<IntRange>();
  if (j.contains("segment_len_range")) c.segment_len = j["segment_len_range"].get<IntRange>();
  c.dt = j.value("dt", c.dt);
  c.y0 = j.value("y0", c.y0);
  c.rho = j.value("rho", c.rho);
}

void to_json(json& j, const MarkovSwitchConfig& c) {
  j = json{{"transition", c.transition},
           {"gamma", c.gamma},
           {"sigma", c.sigma},
           {"initial_dist", c.initial_dist},
           {"length_range", c.length}};
}
void from_json(const json& j, MarkovSwitchConfig& c) {
  if (j.contains("transition")) {
    c.transition = j["transition"].get<std::array<std::array<double, 3>, 3>>();
  }
  c.gamma = j.value("gamma", c.gamma);
  c.sigma = j.value("sigma", c.sigma);
  if (j.contains("initial_dist")) c.initial_dist = j["initial_dist"].get<std::array<double, 3>>();
  if (j.contains("length_range")) c.length = j["length_range"].get<IntRange>();
}

Series simulate_noisy_line(const std::vector<LineSegment>& plan, double y0,
                           std::uint64_t seed, double dt) {
  if (plan.empty()) throw ConfigError("noisy_line: empty segment plan");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("noisy_line: dt must be > 0");
  long total = 1;
  for (const auto& seg : plan) {
    if (seg.length < 1) throw ConfigError("noisy_line: segment length must be >= 1");
    if (!(seg.sigma >= 0.0)) throw ConfigError("noisy_line: sigma must be >= 0");
    total += seg.length;
  }
  Rng rng = make_rng(noise_seed(seed));
  Series s;
  s.dynamic = Dynamic::kNoisyLine;
  s.seed = seed;
  s.t.reserve(total);
  s.y.reserve(total);
  s.labels.reserve(total);

  s.t.push_back(0.0);
  s.y.push_back(y0 + plan.front().sigma * standard_normal(rng));
  s.labels.push_back(TrendLabel::sign_of(plan.front().slope));

  double anchor = y0;
  long pos = 0;
  json segs = json::array();
  for (const auto& seg : plan) {
    const auto label = TrendLabel::sign_of(seg.slope);
    for (long j = 1; j <= seg.length; ++j) {
      s.t.push_back(static_cast<double>(pos + j) * dt);
      s.y.push_back(anchor + seg.slope * static_cast<double>(j) * dt +
                    seg.sigma * standard_normal(rng));
      s.labels.push_back(label);
    }
    anchor += seg.slope * static_cast<double>(seg.length) * dt;
    pos += seg.length;
    segs.push_back(json{{"slope", seg.slope}, {"sigma", seg.sigma}, {"length", seg.length}});
  }
  s.gen_params = json{{"y0", y0}, {"dt", dt}, {"segments", segs}};
  return s;
}

TrendLabel ou_segment_label(double y_inf, double anchor, double rho) {
  if (anchor == 0.0) {
    throw DegenerateError("piecewise_ou: anchor value is zero, trend label undefined");
  }
  // |Y_inf / anchor - 1| <= rho, written so the direction stays the drift
  // direction when the anchor is negative.
  const double gap = y_inf - anchor;
  if (std::abs(gap) <= rho * std::abs(anchor)) return TrendLabel::kFlat;
  return gap > 0.0 ? TrendLabel::kUp : TrendLabel::kDown;
}

Series simulate_piecewise_ou(const std::vector<OuSegment>& plan, double sigma,
                             double dt, double y0, double rho,
                             std::uint64_t seed) {
  if (plan.empty()) throw ConfigError("piecewise_ou: empty segment plan");
  if (!(dt > 0.0)) throw ConfigError("piecewise_ou: dt must be > 0");
  long total = 1;
  for (const auto& seg : plan) {
    if (!(seg.a > 0.0)) throw ConfigError("piecewise_ou: mean-reversion speed a must be > 0");
    if (seg.length < 1) throw ConfigError("piecewise_ou: segment length must be >= 1");
    total += seg.length;
  }
  Rng rng = make_rng(noise_seed(seed));
  Series s;
  s.dynamic = Dynamic::kPiecewiseOu;
  s.seed = seed;
  s.t.reserve(total);
  s.y.reserve(total);
  s.labels.reserve(total);

  double noiseless = y0;
  double y = y0;
  s.t.push_back(0.0);
  s.y.push_back(y);
  s.labels.push_back(ou_segment_label(plan.front().y_inf(), noiseless, rho));

  long pos = 0;
  json segs = json::array();
  for (const auto& seg : plan) {
    const double y_inf = seg.y_inf();
    const auto label = ou_segment_label(y_inf, noiseless, rho);
    const double decay = std::exp(-seg.a * dt);
    const double step_sd = sigma * std::sqrt((1.0 - decay * decay) / (2.0 * seg.a));
    for (long j = 1; j <= seg.length; ++j) {
      noiseless = noiseless * decay + y_inf * (1.0 - decay);
      y = y * decay + y_inf * (1.0 - decay) + step_sd * standard_normal(rng);
      s.t.push_back(static_cast<double>(pos + j) * dt);
      s.y.push_back(y);
      s.labels.push_back(label);
    }
    pos += seg.length;
    segs.push_back(json{{"a", seg.a}, {"mu", seg.mu}, {"length", seg.length}});
  }
  s.gen_params =
      json{{"y0", y0}, {"sigma", sigma}, {"dt", dt}, {"rho", rho}, {"segments", segs}};
  return s;
}

Series generate_noisy_line(const NoisyLineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(plan_seed(seed));
  const long n_seg = draw(rng, cfg.n_segments);
  std::vector<LineSegment> plan;
  plan.reserve(n_seg);
  for (long i = 0; i < n_seg; ++i) {
    const long k = uniform_int(rng, -cfg.n_slopes, cfg.n_slopes);
    LineSegment seg;
    seg.slope = cfg.gamma * static_cast<double>(k) / cfg.n_slopes;
    // (0, sigma_max]: strictly positive noise on every segment.
    seg.sigma = cfg.sigma_max * (1.0 - uniform(rng, 0.0, 1.0));
    seg.length = draw(rng, cfg.segment_len);
    plan.push_back(seg);
  }
  return simulate_noisy_line(plan, cfg.y0, seed, cfg.dt);
}

Series generate_piecewise_ou(const OuConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(plan_seed(seed));
  const long n_seg = draw(rng, cfg.n_segments);
  std::vector<OuSegment> plan;
  plan.reserve(n_seg);
  for (long i = 0; i < n_seg; ++i) {
    OuSegment seg;
    seg.a = draw(rng, cfg.a);
    seg.mu = draw(rng, cfg.mu);
    seg.length = draw(rng, cfg.segment_len);
    plan.push_back(seg);
  }
  return simulate_piecewise_ou(plan, cfg.sigma, cfg.dt, cfg.y0, cfg.rho, seed);
}

namespace {

std::size_t draw_state(Rng& rng, const std::array<double, 3>& probs) {
  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  // Rounding slack: fall back to the last state with positive mass.
  for (std::size_t k = 3; k-- > 0;) {
    if (probs[k] > 0.0) return k;
  }
  return 2;
}

}  // namespace

Series generate_markov_switch(const MarkovSwitchConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng plan_rng = make_rng(plan_seed(seed));
  const long length = draw(plan_rng, cfg.length);
  Rng rng = make_rng(noise_seed(seed));

  Series s;
  s.dynamic = Dynamic::kMarkovSwitch;
  s.seed = seed;
  s.t.reserve(length);
  s.y.reserve(length);
  s.labels.reserve(length);

  std::size_t state = draw_state(rng, cfg.initial_dist);
  double log_y = 0.0;
  s.t.push_back(0.0);
  s.y.push_back(1.0);
  s.labels.push_back(TrendLabel::from_index(state));
  for (long t = 1; t < length; ++t) {
    state = draw_state(rng, cfg.transition[state]);
    const int l = static_cast<int>(state) - 1;
    log_y += cfg.gamma * l + cfg.sigma * standard_normal(rng);
    s.t.push_back(static_cast<double>(t));
    s.y.push_back(std::exp(log_y));
    s.labels.push_back(TrendLabel::from_index(state));
  }
  MarkovSwitchConfig used = cfg;
  used.length = {length, length};
  s.gen_params = json(used);
  return s;
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::kTrain:
      return "train";
    case Role::kTest:
      return "test";
    case Role::kValidation:
      return "validation";
  }
  return "unknown";
}

Role parse_role(std::string_view s) {
  if (s == "train") return Role::kTrain;
  if (s == "test") return Role::kTest;
  if (s == "validation") return Role::kValidation;
  throw ConfigError("unknown dataset role: " + std::string(s));
}

DynamicConfigs DynamicConfigs::defaults_for(Role role) {
  DynamicConfigs c;
  // Fine noisy-line grid: with the default slope and noise caps a unit step
  // makes every segment trivially separable.
  c.noisy_line.dt = 0.006;
  if (role == Role::kValidation) {
    c.noisy_line.n_segments = {6, 10};
    c.noisy_line.segment_len = {84, 100};
    c.piecewise_ou.n_segments = {3, 4};
    c.piecewise_ou.segment_len = {167, 250};
    c.markov_switch.length = {500, 1000};
  } else {
    // Per-dynamic length ranges of the reference training protocol:
    // noisy line 50-1000, OU 80-2400, Markov switch 500-1000.
    c.noisy_line.n_segments = {1, 10};
    c.noisy_line.segment_len = {50, 100};
    c.piecewise_ou.n_segments = {1, 6};
    c.piecewise_ou.segment_len = {80, 400};
    c.markov_switch.length = {500, 1000};
  }
  return c;
}

void DynamicConfigs::scale_noise(double scale) {
  if (!(scale > 0.0)) throw ConfigError("noise scale must be > 0");
  noisy_line.sigma_max *= scale;
  piecewise_ou.sigma *= scale;
  markov_switch.sigma *= scale;
}

void to_json(json& j, const DynamicConfigs& c) {
  j = json{{"noisy_line", c.noisy_line},
           {"piecewise_ou", c.piecewise_ou},
           {"markov_switch", c.markov_switch}};
}

void merge_from_json(const json& j, DynamicConfigs& c) {
  if (!j.is_object()) throw ConfigError("dynamic config document must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "noisy_line") {
      from_json(value, c.noisy_line);
    } else if (key == "piecewise_ou") {
      from_json(value, c.piecewise_ou);
    } else if (key == "markov_switch") {
      from_json(value, c.markov_switch);
    }
  }
  c.noisy_line.validate();
  c.piecewise_ou.validate();
  c.markov_switch.validate();
}

DatasetSpec DatasetSpec::validation_defaults(std::uint64_t seed) {
  DatasetSpec s;
  s.role = Role::kValidation;
  s.dynamic.reset();
  s.count = 100;
  s.configs = DynamicConfigs::defaults_for(Role::kValidation);
  s.seed = seed;
  return s;
}

DatasetSpec DatasetSpec::training_defaults(std::optional<Dynamic> dynamic,
                                           std::uint64_t seed) {
  DatasetSpec s;
  s.role = Role::kTrain;
  s.dynamic = dynamic;
  s.count = 1000;
  s.configs = DynamicConfigs::defaults_for(Role::kTrain);
  s.seed = seed;
  return s;
}

std::map<Dynamic, long> Dataset::composition() const {
  std::map<Dynamic, long> out;
  for (auto d : kAllDynamics) out[d] = 0;
  for (const auto& s : series) ++out[s.dynamic];
  return out;
}

Series generate(Dynamic d, const DynamicConfigs& configs, std::uint64_t seed) {
  switch (d) {
    case Dynamic::kNoisyLine:
      return generate_noisy_line(configs.noisy_line, seed);
    case Dynamic::kPiecewiseOu:
      return generate_piecewise_ou(configs.piecewise_ou, seed);
    case Dynamic::kMarkovSwitch:
      return generate_markov_switch(configs.markov_switch, seed);
  }
  throw ConfigError("unknown dynamic");
}

Series regenerate(const Series& s) {
  const json& g = s.gen_params;
  Series out;
  switch (s.dynamic) {
    case Dynamic::kNoisyLine: {
      std::vector<LineSegment> plan;
      for (const auto& seg : g.at("segments")) {
        plan.push_back({seg.at("slope").get<double>(), seg.at("sigma").get<double>(),
                        seg.at("length").get<long>()});
      }
      out = simulate_noisy_line(plan, g.at("y0").get<double>(), s.seed, g.value("dt", 1.0));
      break;
    }
    case Dynamic::kPiecewiseOu: {
      std::vector<OuSegment> plan;
      for (const auto& seg : g.at("segments")) {
        plan.push_back({seg.at("a").get<double>(), seg.at("mu").get<double>(),
                        seg.at("length").get<long>()});
      }
      out = simulate_piecewise_ou(plan, g.at("sigma").get<double>(), g.at("dt").get<double>(),
                                  g.at("y0").get<double>(), g.at("rho").get<double>(), s.seed);
      break;
    }
    case Dynamic::kMarkovSwitch:
      out = generate_markov_switch(g.get<MarkovSwitchConfig>(), s.seed);
      break;
  }
  out.id = s.id;
  return out;
}

Dataset make_dataset(const DatasetSpec& spec) {
  if (spec.count < 1) throw ConfigError("dataset count must be >= 1");
  std::vector<Dynamic> plan;
  if (spec.role == Role::kValidation && !spec.dynamic) {
    for (auto d : kAllDynamics) plan.insert(plan.end(), spec.count, d);
  } else if (spec.dynamic) {
    plan.assign(spec.count, *spec.dynamic);
  } else {
    for (long i = 0; i < spec.count; ++i) plan.push_back(kAllDynamics[i % 3]);
  }

  Dataset ds;
  ds.role = spec.role;
  ds.series.resize(plan.size());
  const auto role_name = std::string(to_string(spec.role));
  parallel_for(plan.size(), [&](std::size_t i) {
    Series s = generate(plan[i], spec.configs, derive_seed(spec.seed, i));
    char id[32];
    std::snprintf(id, sizeof id, "%05zu", i);
    s.id = role_name + "-" + id;
    ds.series[i] = std::move(s);
  });
  return ds;
}

void write_jsonl(const Dataset& ds, std::ostream& out) {
  for (const auto& s : ds.series) {
    json j = s;
    j["role"] = std::string(to_string(ds.role));
    out << j.dump() << '\n';
  }
}

Dataset read_jsonl(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool role_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      ds.series.push_back(j.get<Series>());
    } catch (const json::exception& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!role_seen && j.contains("role")) {
      ds.role = parse_role(j["role"].get<std::string>());
      role_seen = true;
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  write_jsonl(ds, out);
  if (!out) throw InputError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset: " + path);
  return read_jsonl(in);
}

void write_series_csv(const Series& s, std::ostream& out) {
  out << "t,y,label\n";
  std::ostringstream line;
  line << std::setprecision(17);
  for (std::size_t i = 0; i < s.size(); ++i) {
    line.str("");
    line << s.t[i] << ',' << s.y[i] << ',' << s.labels[i].value() << '\n';
    out << line.str();
  }
}

}  // namespace trendlab::simgen
