#pragma once

// Command implementations behind the trendlab executable. Each takes a
// resolved option struct, writes its files and returns what it produced;
// argument parsing lives in tools/.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trendlab/evalkit.hpp"
#include "trendlab/models.hpp"
#include "trendlab/report.hpp"
#include "trendlab/simgen.hpp"
#include "trendlab/tensornet.hpp"

namespace trendlab::app {

/// Accepts either a bare dynamic-config document or a calibration output
/// (whose "configs" member is used).
void apply_config_doc(const nlohmann::json& doc, simgen::DynamicConfigs& c);

struct GenOptions {
  simgen::Role role = simgen::Role::kTrain;
  std::optional<Dynamic> dynamic;  // empty: mixed (train/test) or all three (validation)
  long count = 0;                  // 0 keeps the role default
  std::uint64_t seed = 0;
  nlohmann::json configs = nlohmann::json::object();
  double noise_scale = 1.0;
  std::string out;
  std::string csv_dir;  // optional per-series CSV export
};

simgen::DatasetSpec gen_spec(const GenOptions& o);
simgen::Dataset cmd_gen(const GenOptions& o, std::ostream& log);

struct TrainCmdOptions {
  std::string kind = "rnn";  // rnn, convex, ma, hmm, nle, oue
  tensornet::RnnSpec spec = tensornet::RnnSpec::baseline();
  tensornet::TrainOptions train;
  std::size_t convex_dim = 5;
  int eta = 20;
  std::size_t hmm_states = 3;
};

struct TrainOutcome {
  models::AnyModel model;
  bool failed = false;
  std::string failure_reason;
  report::Table log;  // step,metric,value
  nlohmann::json metadata;
};

/// Fits one estimator on `data`. Training failure is reported, not thrown.
TrainOutcome train_model(const TrainCmdOptions& o, const simgen::Dataset& data,
                         const std::string& train_dynamic);

/// Writes the model (with metadata) to `model_path` and the log CSV.
TrainOutcome cmd_train(const TrainCmdOptions& o, const simgen::Dataset& data,
                       const std::string& train_dynamic, const std::string& model_path,
                       const std::string& log_path, std::ostream& log);

/// A sweep manifest: explicit "triplets" and/or a "grid" whose keys
/// (cell, optimizer, dynamic, n_layers, hidden_dim, dropout,
/// learning_rate) are crossed. Training data per dynamic is generated from
/// "count", "configs" and "seed".
struct SweepManifest {
  std::uint64_t seed = 0;
  long count = 200;
  int epochs = 50;
  nlohmann::json configs = nlohmann::json::object();
  std::vector<nlohmann::json> triplets;

  static SweepManifest from_json(const nlohmann::json& j);
};

/// Trains every triplet, writing <dir>/<id>.json and <id>.log.csv for the
/// converged ones and <dir>/sweep.csv with one status row per triplet.
report::Table cmd_sweep(const SweepManifest& m, const std::string& out_dir, std::ostream& log);

struct NamedModel {
  std::string name;
  models::AnyModel model;
  nlohmann::json metadata = nlohmann::json::object();
};

NamedModel load_named(const std::string& spec);  // "name=path", "path" or a built-in name
/// Converged models listed in a sweep directory's sweep.csv.
std::vector<NamedModel> load_sweep(const std::string& dir);

struct EvalOutput {
  report::Table losses;   // estimator,kind,cell,optimizer,train_dynamic,id,dynamic,loss,status
  report::Table medians;  // dynamic,<estimator>...
  nlohmann::json summary;
  std::size_t soft_failures = 0;
};

EvalOutput evaluate(const std::vector<NamedModel>& est, const simgen::Dataset& val,
                    std::uint64_t seed);
EvalOutput cmd_eval(const std::vector<NamedModel>& est, const simgen::Dataset& val,
                    std::uint64_t seed, const std::string& out_prefix, std::ostream& log);

struct CompareOptions {
  std::vector<std::string> loss_files;
  std::vector<std::string> group_by;      // default: source (several files) or estimator
  std::vector<std::string> ols_features;  // default: the grouping columns
  double level = 0.99;
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
  std::string out_prefix;
};

nlohmann::json cmd_compare(const CompareOptions& o, std::ostream& log);

struct CalibrateOptions {
  std::string csv;
  Dynamic dynamic = Dynamic::kMarkovSwitch;
  std::string returns = "log";  // log or diff
  evalkit::CalibrationSearch search;
  std::string out;
};

nlohmann::json cmd_calibrate(const CalibrateOptions& o, std::ostream& log);

struct PlotStateOptions {
  std::string model;
  std::string data;  // optional JSON-lines file; default three generated noisy lines
  long length = 300;
  std::uint64_t seed = 0;
  std::string out;  // SVG path; coordinates go next to it as CSV
};

/// Up, flat and down noisy lines of the given length.
std::vector<Series> trend_triplet(long length, std::uint64_t seed);
report::Projection cmd_plot_state(const PlotStateOptions& o, std::ostream& log);

struct ReportOptions {
  std::vector<std::string> loss_files;
  std::string out_prefix;
};

/// Median (IQR) per estimator and dynamic as CSV, Markdown and box plot.
report::Table cmd_report(const ReportOptions& o, std::ostream& log);

}  // namespace trendlab::app
