#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace trendlab {

// Error hierarchy shared by all modules.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct DegenerateError : Error {
  using Error::Error;
};
struct ParamError : Error {
  using Error::Error;
};

/// Three-class trend label: down, flat or up. Only -1, 0 and +1 are
/// representable.
class TrendLabel {
 public:
  static const TrendLabel kDown;
  static const TrendLabel kFlat;
  static const TrendLabel kUp;

  constexpr TrendLabel() = default;

  static TrendLabel from_int(int v) {
    if (v < -1 || v > 1) {
      throw InputError("trend label out of range: " + std::to_string(v));
    }
    return TrendLabel(static_cast<std::int8_t>(v));
  }
  template <typename T>
  static constexpr TrendLabel sign_of(T x) {
    return TrendLabel(static_cast<std::int8_t>((x > T(0)) - (x < T(0))));
  }
  /// Class index in probability vectors: 0 = down, 1 = flat, 2 = up.
  static TrendLabel from_index(std::size_t k) {
    if (k > 2) throw InputError("class index out of range");
    return TrendLabel(static_cast<std::int8_t>(static_cast<int>(k) - 1));
  }

  constexpr int value() const { return v_; }
  constexpr std::size_t index() const { return static_cast<std::size_t>(v_ + 1); }
  constexpr TrendLabel negated() const { return TrendLabel(static_cast<std::int8_t>(-v_)); }

  friend constexpr bool operator==(TrendLabel a, TrendLabel b) = default;

 private:
  constexpr explicit TrendLabel(std::int8_t v) : v_(v) {}
  std::int8_t v_ = 0;
};

inline constexpr TrendLabel TrendLabel::kDown = TrendLabel(-1);
inline constexpr TrendLabel TrendLabel::kFlat = TrendLabel(0);
inline constexpr TrendLabel TrendLabel::kUp = TrendLabel(1);

using LabelSeq = std::vector<TrendLabel>;

/// Probability distribution over (down, flat, up).
struct ProbTriple {
  std::array<double, 3> p{1.0 / 3, 1.0 / 3, 1.0 / 3};

  double down() const { return p[0]; }
  double flat() const { return p[1]; }
  double up() const { return p[2]; }

  static ProbTriple one_hot(TrendLabel l) {
    ProbTriple t{{0.0, 0.0, 0.0}};
    t.p[l.index()] = 1.0;
    return t;
  }
  /// Most probable class; ties prefer flat, then the lower class.
  TrendLabel argmax() const;
  double sum() const { return p[0] + p[1] + p[2]; }
};

using ProbSeq = std::vector<ProbTriple>;

/// Argmax over three scores with the flat-first, then-lower tie rule.
TrendLabel argmax_label(const std::array<double, 3>& scores);

LabelSeq labels_of(const ProbSeq& probs);

enum class Dynamic { kNoisyLine, kPiecewiseOu, kMarkovSwitch };

inline constexpr std::array<Dynamic, 3> kAllDynamics = {
    Dynamic::kNoisyLine, Dynamic::kPiecewiseOu, Dynamic::kMarkovSwitch};

std::string_view to_string(Dynamic d);
Dynamic parse_dynamic(std::string_view s);

/// A generated (or ingested) labelled series.
struct Series {
  std::string id;
  std::vector<double> t;
  std::vector<double> y;
  LabelSeq labels;
  Dynamic dynamic = Dynamic::kNoisyLine;
  nlohmann::json gen_params = nlohmann::json::object();
  std::uint64_t seed = 0;

  std::size_t size() const { return y.size(); }
  /// Throws InputError when the structural invariants do not hold.
  void validate() const;
};

void to_json(nlohmann::json& j, const Series& s);
void from_json(const nlohmann::json& j, Series& s);

}  // namespace trendlab
