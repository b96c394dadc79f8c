// trendlab command-line front end. Options may also come from a JSON file
// (--config); explicit flags win over file values.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trendlab/app.hpp"

using nlohmann::json;
using namespace trendlab;
namespace fs = std::filesystem;

namespace {

json json_arg(const std::string& s) {
  if (s.empty()) return json::object();
  if (s.front() == '{') return json::parse(s);
  std::ifstream in(s, std::ios::binary);
  if (!in) throw InputError("cannot read " + s);
  return json::parse(in);
}

std::string scalar_token(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

// Turns the --config document of the chosen subcommand into extra argv
// tokens for every option not given explicitly.
std::vector<std::string> expand_config(CLI::App& app, const std::vector<std::string>& args) {
  if (args.size() < 2) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[1]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::string cfg_path;
  std::set<std::string> given;
  for (std::size_t i = 2; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    const std::string name = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    given.insert(name);
    if (name == "config") cfg_path = eq != std::string::npos ? a.substr(eq + 1) : (i + 1 < args.size() ? args[i + 1] : "");
  }
  if (cfg_path.empty()) return args;
  const json doc = json_arg(cfg_path);
  if (!doc.is_object()) throw ConfigError("--config must hold a JSON object");
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  for (const auto& [key, value] : doc.items()) {
    if (given.count(key) || key == "config") continue;
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw ConfigError("--config: unknown option '" + key + "' for " + args[1]);
    if (opt->get_type_size() == 0) {
      if (value.is_boolean() ? value.get<bool>() : scalar_token(value) == "true") out.push_back("--" + key);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        out.push_back("--" + key);
        out.push_back(scalar_token(v));
      }
    } else {
      out.push_back("--" + key);
      out.push_back(value.is_object() ? value.dump() : scalar_token(value));
    }
  }
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

// Every option of the subcommand with its effective value.
json resolved_options(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto r = opt->results();
      if (opt->get_type_size() == 0) {
        j[name] = true;
      } else if (opt->get_expected_max() > 1) {
        j[name] = r;
      } else {
        j[name] = r.back();
      }
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void write_run_log(const CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  const json j{{"command", sub.get_name()}, {"options", resolved_options(sub)}};
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << j.dump(1) << '\n';
}

std::string dataset_dynamic(const simgen::Dataset& ds) {
  std::string name;
  for (const auto& [d, n] : ds.composition()) {
    if (n == 0) continue;
    if (!name.empty()) return "mixed";
    name = std::string(to_string(d));
  }
  return name.empty() ? "mixed" : name;
}

const std::vector<std::string> kDynamics = {"noisy_line", "piecewise_ou", "markov_switch"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trendlab: synthetic trend datasets, trend classifiers and their evaluation"};
  app.require_subcommand(1);
  int status = 0;
  std::string run_log;

  // gen
  auto* gen = app.add_subcommand("gen", "generate a labelled dataset (JSON lines)");
  std::string gen_role = "train", gen_dynamic, gen_dynamics, gen_out, gen_csv;
  long gen_count = 0;
  std::uint64_t gen_seed = 0;
  double gen_noise = 1.0;
  gen->add_option("--config", "JSON file with option values");
  gen->add_option("--role", gen_role, "train, test or validation")->check(CLI::IsMember({"train", "test", "validation"}))->capture_default_str();
  gen->add_option("--dynamic", gen_dynamic, "single dynamic (default: mixed / all three)")->check(CLI::IsMember(kDynamics));
  gen->add_option("--count", gen_count, "series count (per dynamic for validation); 0 = role default")->capture_default_str();
  gen->add_option("--seed", gen_seed, "root seed")->capture_default_str();
  gen->add_option("--dynamics", gen_dynamics, "dynamic-config overrides: JSON file or inline object");
  gen->add_option("--noise-scale", gen_noise, "multiply every noise parameter")->capture_default_str();
  gen->add_option("--out", gen_out, "output .jsonl")->required();
  gen->add_option("--csv-dir", gen_csv, "also write one t,y,label CSV per series here");
  gen->callback([&] {
    app::GenOptions o;
    o.role = simgen::parse_role(gen_role);
    if (!gen_dynamic.empty()) o.dynamic = parse_dynamic(gen_dynamic);
    o.count = gen_count;
    o.seed = gen_seed;
    o.configs = json_arg(gen_dynamics);
    o.noise_scale = gen_noise;
    o.out = gen_out;
    o.csv_dir = gen_csv;
    app::cmd_gen(o, std::cout);
    run_log = gen_out + ".run.json";
  });

  // train
  auto* train = app.add_subcommand("train", "train one estimator or a sweep of RNN triplets");
  std::string tr_data, tr_dynamic = "noisy_line", tr_dynamics, tr_kind = "rnn", tr_cell = "gru",
              tr_opt = "adam", tr_out, tr_log, tr_sweep, tr_out_dir;
  long tr_count = 200;
  std::uint64_t tr_data_seed = 0, tr_seed = 0;
  std::size_t tr_layers = 2, tr_hidden = 20, tr_convex_dim = 5, tr_hmm_states = 3;
  double tr_dropout = 0.2, tr_lr = 0.005, tr_clip = 0.0;
  int tr_epochs = 200, tr_eta = 20;
  train->add_option("--config", "JSON file with option values");
  train->add_option("--data", tr_data, "training dataset (.jsonl); default: generate one");
  train->add_option("--dynamic", tr_dynamic, "dynamic of the generated training set")->check(CLI::IsMember({"noisy_line", "piecewise_ou", "markov_switch", "mixed"}))->capture_default_str();
  train->add_option("--count", tr_count, "size of the generated training set")->capture_default_str();
  train->add_option("--data-seed", tr_data_seed, "seed of the generated training set")->capture_default_str();
  train->add_option("--dynamics", tr_dynamics, "dynamic-config overrides for generated data");
  train->add_option("--kind", tr_kind, "estimator kind")->check(CLI::IsMember({"rnn", "convex", "ma", "hmm", "nle", "oue"}))->capture_default_str();
  train->add_option("--cell", tr_cell, "recurrent cell")->check(CLI::IsMember({"vanilla", "gru", "lstm"}))->capture_default_str();
  train->add_option("--layers", tr_layers, "stacked layers")->capture_default_str();
  train->add_option("--hidden", tr_hidden, "hidden units per layer")->capture_default_str();
  train->add_option("--dropout", tr_dropout, "dropout between layers")->capture_default_str();
  train->add_option("--optimizer", tr_opt, "adam or rmsprop")->check(CLI::IsMember({"adam", "rmsprop"}))->capture_default_str();
  train->add_option("--lr", tr_lr, "learning rate")->capture_default_str();
  train->add_option("--epochs", tr_epochs, "training epochs")->capture_default_str();
  train->add_option("--seed", tr_seed, "training seed")->capture_default_str();
  train->add_option("--clip", tr_clip, "gradient-norm clip (0 = off)")->capture_default_str();
  train->add_option("--convex-dim", tr_convex_dim, "convex net state size")->capture_default_str();
  train->add_option("--eta", tr_eta, "MLE window length")->capture_default_str();
  train->add_option("--hmm-states", tr_hmm_states, "HMM state count")->capture_default_str();
  train->add_option("--out", tr_out, "model file (.json)");
  train->add_option("--log", tr_log, "training log CSV (default: <out>.log.csv)");
  train->add_option("--sweep", tr_sweep, "sweep manifest (JSON file or inline object)");
  train->add_option("--out-dir", tr_out_dir, "sweep output directory");
  train->callback([&] {
    if (!tr_sweep.empty()) {
      if (tr_out_dir.empty()) throw ConfigError("train --sweep needs --out-dir");
      app::cmd_sweep(app::SweepManifest::from_json(json_arg(tr_sweep)), tr_out_dir, std::cout);
      run_log = (fs::path(tr_out_dir) / "run.json").string();
      return;
    }
    if (tr_out.empty()) throw ConfigError("train needs --out (or --sweep with --out-dir)");
    simgen::Dataset data;
    std::string dyn = tr_dynamic;
    if (!tr_data.empty()) {
      data = simgen::load_dataset(tr_data);
      dyn = dataset_dynamic(data);
    } else {
      std::optional<Dynamic> d;
      if (tr_dynamic != "mixed") d = parse_dynamic(tr_dynamic);
      auto spec = simgen::DatasetSpec::training_defaults(d, tr_data_seed);
      spec.count = tr_count;
      app::apply_config_doc(json_arg(tr_dynamics), spec.configs);
      data = simgen::make_dataset(spec);
    }
    app::TrainCmdOptions o;
    o.kind = tr_kind;
    o.spec.cell = tensornet::parse_cell(tr_cell);
    o.spec.n_layers = tr_layers;
    o.spec.hidden_dim = tr_hidden;
    o.spec.dropout = tr_dropout;
    o.train.optimizer = tensornet::parse_optimizer(tr_opt);
    o.train.learning_rate = tr_lr;
    o.train.epochs = tr_epochs;
    o.train.seed = tr_seed;
    o.train.clip_norm = tr_clip;
    o.convex_dim = tr_convex_dim;
    o.eta = tr_eta;
    o.hmm_states = tr_hmm_states;
    const std::string log_path = tr_log.empty() ? fs::path(tr_out).replace_extension(".log.csv").string() : tr_log;
    const auto res = app::cmd_train(o, data, dyn, tr_out, log_path, std::cout);
    run_log = tr_out + ".run.json";
    if (res.failed) status = 2;
  });

  // eval
  auto* eval = app.add_subcommand("eval", "score estimators on a labelled dataset");
  std::string ev_data, ev_sweep, ev_prefix;
  std::vector<std::string> ev_models, ev_builtins;
  std::uint64_t ev_seed = 0;
  eval->add_option("--config", "JSON file with option values");
  eval->add_option("--data", ev_data, "validation dataset (.jsonl)")->required();
  eval->add_option("--model", ev_models, "model file, optionally name=path (repeatable)");
  eval->add_option("--estimator", ev_builtins, "built-in estimator: ma, dummy, nle, oue (repeatable)");
  eval->add_option("--sweep-dir", ev_sweep, "evaluate every converged model of a sweep");
  eval->add_option("--seed", ev_seed, "seed for randomized estimators")->capture_default_str();
  eval->add_option("--out-prefix", ev_prefix, "output prefix")->required();
  eval->callback([&] {
    std::vector<app::NamedModel> est;
    if (!ev_sweep.empty()) est = app::load_sweep(ev_sweep);
    for (const auto& m : ev_models) est.push_back(app::load_named(m));
    for (const auto& b : ev_builtins) est.push_back({b, models::builtin(b), json{{"builtin", true}}});
    app::cmd_eval(est, simgen::load_dataset(ev_data), ev_seed, ev_prefix, std::cout);
    run_log = ev_prefix + "_run.json";
  });

  // compare
  auto* compare = app.add_subcommand("compare", "bootstrap median differences and OLS on loss rows");
  app::CompareOptions co;
  compare->add_option("--config", "JSON file with option values");
  compare->add_option("--losses", co.loss_files, "per-series loss CSV from eval (repeatable)")->required();
  compare->add_option("--group-by", co.group_by, "column to group on (repeatable)");
  compare->add_option("--ols", co.ols_features, "categorical OLS feature column (repeatable)");
  compare->add_option("--level", co.level, "confidence level")->capture_default_str();
  compare->add_option("--resamples", co.resamples, "bootstrap resamples")->capture_default_str();
  compare->add_option("--seed", co.seed, "bootstrap seed")->capture_default_str();
  compare->add_option("--out-prefix", co.out_prefix, "output prefix")->required();
  compare->callback([&] {
    app::cmd_compare(co, std::cout);
    run_log = co.out_prefix + "_run.json";
  });

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "fit a dynamic's config to a price history");
  app::CalibrateOptions ca;
  std::string ca_dynamic = "markov_switch";
  calibrate->add_option("--config", "JSON file with option values");
  calibrate->add_option("--csv", ca.csv, "two-column price CSV (date or index, price)")->required();
  calibrate->add_option("--dynamic", ca_dynamic, "dynamic to calibrate")->check(CLI::IsMember(kDynamics))->capture_default_str();
  calibrate->add_option("--returns", ca.returns, "log or diff")->check(CLI::IsMember({"log", "diff"}))->capture_default_str();
  calibrate->add_option("--candidates", ca.search.n_candidates, "random-search candidates")->capture_default_str();
  calibrate->add_option("--draws", ca.search.n_draws, "simulated paths per candidate")->capture_default_str();
  calibrate->add_option("--seed", ca.search.seed, "search seed")->capture_default_str();
  calibrate->add_option("--out", ca.out, "output JSON (usable as gen --dynamics)")->required();
  calibrate->callback([&] {
    ca.dynamic = parse_dynamic(ca_dynamic);
    app::cmd_calibrate(ca, std::cout);
    run_log = ca.out + ".run.json";
  });

  // plot-state
  auto* plot = app.add_subcommand("plot-state", "project hidden states on two principal components");
  app::PlotStateOptions po;
  plot->add_option("--config", "JSON file with option values");
  plot->add_option("--model", po.model, "rnn or convex model file")->required();
  plot->add_option("--data", po.data, "series to run (.jsonl); default up/flat/down noisy lines");
  plot->add_option("--length", po.length, "length of the generated series")->capture_default_str();
  plot->add_option("--seed", po.seed, "seed of the generated series")->capture_default_str();
  plot->add_option("--out", po.out, "output SVG")->required();
  plot->callback([&] {
    app::cmd_plot_state(po, std::cout);
    run_log = po.out + ".run.json";
  });

  // report
  auto* rep = app.add_subcommand("report", "median (IQR) table and box plot from eval losses");
  app::ReportOptions ro;
  rep->add_option("--config", "JSON file with option values");
  rep->add_option("--losses", ro.loss_files, "per-series loss CSV from eval (repeatable)")->required();
  rep->add_option("--out-prefix", ro.out_prefix, "output prefix")->required();
  rep->callback([&] {
    app::cmd_report(ro, std::cout);
    run_log = ro.out_prefix + "_run.json";
  });

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(app, args);
    std::vector<char*> cargs;
    for (auto& a : args) cargs.push_back(a.data());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
    for (CLI::App* sub : app.get_subcommands()) write_run_log(*sub, run_log);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return status;
}
