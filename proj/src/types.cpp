#include "trendlab/types.hpp"

#include <cmath>

namespace trendlab {

TrendLabel argmax_label(const std::array<double, 3>& scores) {
  // Flat first, then down, then up: a class only wins by strict excess.
  std::size_t best = 1;
  for (std::size_t k : {std::size_t{0}, std::size_t{2}}) {
    if (scores[k] > scores[best]) best = k;
  }
  return TrendLabel::from_index(best);
}

TrendLabel ProbTriple::argmax() const { return argmax_label(p); }

LabelSeq labels_of(const ProbSeq& probs) {
  LabelSeq out;
  out.reserve(probs.size());
  for (const auto& p : probs) out.push_back(p.argmax());
  return out;
}

std::string_view to_string(Dynamic d) {
  switch (d) {
    case Dynamic::kNoisyLine:
      return "noisy_line";
    case Dynamic::kPiecewiseOu:
      return "piecewise_ou";
    case Dynamic::kMarkovSwitch:
      return "markov_switch";
  }
  return "unknown";
}

Dynamic parse_dynamic(std::string_view s) {
  if (s == "noisy_line" || s == "nl") return Dynamic::kNoisyLine;
  if (s == "piecewise_ou" || s == "ou") return Dynamic::kPiecewiseOu;
  if (s == "markov_switch" || s == "ms") return Dynamic::kMarkovSwitch;
  throw ConfigError("unknown dynamic tag: " + std::string(s));
}

void Series::validate() const {
  if (y.size() < 2) throw InputError("series '" + id + "' has fewer than 2 points");
  if (t.size() != y.size() || labels.size() != y.size()) {
    throw InputError("series '" + id + "' has mismatched t/y/labels lengths");
  }
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) {
      throw InputError("series '" + id + "' times not strictly increasing at index " +
                       std::to_string(i));
    }
  }
}

void to_json(nlohmann::json& j, const Series& s) {
  std::vector<int> labels;
  labels.reserve(s.labels.size());
  for (auto l : s.labels) labels.push_back(l.value());
  j = nlohmann::json{{"id", s.id},
                     {"seed", s.seed},
                     {"dynamic", std::string(to_string(s.dynamic))},
                     {"t", s.t},
                     {"y", s.y},
                     {"labels", labels},
                     {"gen_params", s.gen_params}};
}

void from_json(const nlohmann::json& j, Series& s) {
  s.id = j.value("id", std::string{});
  s.seed = j.value("seed", std::uint64_t{0});
  s.dynamic = parse_dynamic(j.at("dynamic").get<std::string>());
  s.t = j.at("t").get<std::vector<double>>();
  s.y = j.at("y").get<std::vector<double>>();
  s.labels.clear();
  for (int v : j.at("labels").get<std::vector<int>>()) {
    s.labels.push_back(TrendLabel::from_int(v));
  }
  s.gen_params = j.value("gen_params", nlohmann::json::object());
  s.validate();
}

}  // namespace trendlab
