#include "trendlab/models.hpp"

#include <fstream>
#include <sstream>

#include "trendlab/rng.hpp"

namespace trendlab::models {

using nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr int kFormatVersion = 1;

}  // namespace

std::string kind_of(const AnyModel& m) {
  return std::visit(Overloaded{
                        [](const tensornet::RnnModel&) { return std::string("rnn"); },
                        [](const classical::MaConfig&) { return std::string("ma"); },
                        [](const classical::ConvexNetParams&) { return std::string("convex"); },
                        [](const mle::HmmModel&) { return std::string("hmm"); },
                        [](const MleModel& x) { return std::string(mle::to_string(x.estimator)); },
                        [](const DummyModel&) { return std::string("dummy"); },
                    },
                    m);
}

AnyModel builtin(const std::string& name) {
  if (name == "ma") return classical::MaConfig{};
  if (name == "dummy") return DummyModel{};
  if (name == "nle") return MleModel{mle::Estimator::kNle, {}};
  if (name == "oue") return MleModel{mle::Estimator::kOue, {}};
  throw ConfigError("unknown built-in estimator '" + name + "' (ma, dummy, nle, oue)");
}

LabelSeq predict(const AnyModel& m, const Series& s, std::uint64_t series_index) {
  return std::visit(
      Overloaded{
          [&](const tensornet::RnnModel& x) { return labels_of(x.predict(s)); },
          [&](const classical::MaConfig& x) { return classical::ma_classify(x, s.y); },
          [&](const classical::ConvexNetParams& x) { return classical::convex_forward(x, s.y).labels; },
          [&](const mle::HmmModel& x) { return mle::hmm_classify(x, s); },
          [&](const MleModel& x) { return mle::mle_classify(s, x.estimator, x.window).labels; },
          [&](const DummyModel& x) {
            return classical::dummy_classify(s.size(), derive_seed(x.seed, series_index));
          },
      },
      m);
}

std::size_t hidden_dim(const AnyModel& m) {
  if (const auto* r = std::get_if<tensornet::RnnModel>(&m)) return r->params.spec().hidden_dim;
  if (const auto* c = std::get_if<classical::ConvexNetParams>(&m)) return c->dim();
  throw ShapeError("model kind '" + kind_of(m) + "' has no hidden state");
}

std::vector<std::vector<double>> hidden_states(const AnyModel& m, const Series& s) {
  if (const auto* r = std::get_if<tensornet::RnnModel>(&m)) return r->states(s);
  if (const auto* c = std::get_if<classical::ConvexNetParams>(&m)) {
    return classical::convex_forward(*c, s.y).states;
  }
  throw ShapeError("model kind '" + kind_of(m) + "' has no hidden state");
}

json to_json(const AnyModel& m) {
  return std::visit(
      Overloaded{
          [](const tensornet::RnnModel& x) { return tensornet::model_to_json(x); },
          [](const classical::MaConfig& x) { return classical::ma_to_json(x); },
          [](const classical::ConvexNetParams& x) { return classical::convex_to_json(x); },
          [](const mle::HmmModel& x) { return mle::hmm_to_json(x); },
          [](const MleModel& x) {
            return json{{"format_version", kFormatVersion},
                        {"kind", mle::to_string(x.estimator)},
                        {"window", x.window}};
          },
          [](const DummyModel& x) {
            return json{{"format_version", kFormatVersion}, {"kind", "dummy"}, {"seed", x.seed}};
          },
      },
      m);
}

AnyModel from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw FormatError("model: missing 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "rnn") return tensornet::model_from_json(j);
  if (kind == "ma") return classical::ma_from_json(j);
  if (kind == "convex") return classical::convex_from_json(j);
  if (kind == "hmm") return mle::hmm_from_json(j);
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw FormatError("model: unsupported format_version");
    }
    if (kind == "nle" || kind == "oue") {
      MleModel m{mle::parse_estimator(kind), j.at("window").get<mle::SlidingWindowConfig>()};
      m.window.validate(m.estimator);
      return m;
    }
    if (kind == "dummy") return DummyModel{j.at("seed").get<std::uint64_t>()};
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: corrupt file: ") + e.what());
  }
  throw FormatError("model: unknown kind '" + kind + "'");
}

void save(const AnyModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << to_json(m).dump(1) << '\n';
  if (!out) throw InputError("write failed: " + path);
}

AnyModel load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("model: corrupt file " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace trendlab::models
