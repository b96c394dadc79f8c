#pragma once

// One container for every trend classifier so the command layer can load,
// save and run them uniformly. The JSON "kind" field selects the variant.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendlab/classical.hpp"
#include "trendlab/mle.hpp"
#include "trendlab/tensornet.hpp"
#include "trendlab/types.hpp"

namespace trendlab::models {

struct MleModel {
  mle::Estimator estimator = mle::Estimator::kNle;
  mle::SlidingWindowConfig window;
};

struct DummyModel {
  std::uint64_t seed = 0;
};

using AnyModel = std::variant<tensornet::RnnModel, classical::MaConfig,
                              classical::ConvexNetParams, mle::HmmModel, MleModel, DummyModel>;

/// "rnn", "ma", "convex", "hmm", "nle", "oue" or "dummy".
std::string kind_of(const AnyModel& m);

/// Built-in estimators usable without a model file: ma, dummy, nle, oue.
AnyModel builtin(const std::string& name);

/// Labels for one series. Throws InputError when the model cannot handle
/// the series (e.g. HMM on a non-positive path).
LabelSeq predict(const AnyModel& m, const Series& s, std::uint64_t series_index = 0);

/// Per-step hidden states for the recurrent models; ShapeError otherwise.
std::vector<std::vector<double>> hidden_states(const AnyModel& m, const Series& s);
std::size_t hidden_dim(const AnyModel& m);

nlohmann::json to_json(const AnyModel& m);
AnyModel from_json(const nlohmann::json& j);
void save(const AnyModel& m, const std::string& path);
AnyModel load(const std::string& path);

}  // namespace trendlab::models
