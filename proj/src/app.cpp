#include "trendlab/app.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "trendlab/classical.hpp"
#include "trendlab/mle.hpp"
#include "trendlab/numeric.hpp"
#include "trendlab/parallel.hpp"
#include "trendlab/rng.hpp"

namespace trendlab::app {

using nlohmann::json;
using report::fmt_num;
using report::Table;
namespace fs = std::filesystem;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::string& path) {
  report::save_text(j.dump(1) + "\n", path);
}

void ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<std::string> first_seen(const Table& t, std::size_t col) {
  std::vector<std::string> out;
  for (const auto& r : t.rows) {
    if (std::find(out.begin(), out.end(), r[col]) == out.end()) out.push_back(r[col]);
  }
  return out;
}

double parse_num(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError(where + ": not a number: '" + s + "'");
  return v;
}

/// Loss rows with status ok (when a status column exists).
Table usable_rows(const Table& t) {
  Table out;
  out.header = t.header;
  const bool has_status = t.has_column("status");
  const std::size_t sc = has_status ? t.column("status") : 0;
  for (const auto& r : t.rows) {
    if (!has_status || r[sc] == "ok") out.rows.push_back(r);
  }
  return out;
}

Table merged_losses(const std::vector<std::string>& files) {
  if (files.empty()) throw InputError("no loss files given");
  Table all;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < files.size(); ++k) {
    std::string name = fs::path(files[k]).stem().string();
    if (std::find(names.begin(), names.end(), name) != names.end()) name += "#" + std::to_string(k);
    names.push_back(name);
  }
  for (std::size_t k = 0; k < files.size(); ++k) {
    Table t = report::load_csv(files[k]);
    if (k == 0) {
      all.header = t.header;
      if (files.size() > 1) all.header.push_back("source");
    } else if (t.header.size() + (files.size() > 1 ? 1 : 0) != all.header.size() ||
               !std::equal(t.header.begin(), t.header.end(), all.header.begin())) {
      throw FormatError(files[k] + ": header differs from " + files[0]);
    }
    for (auto& r : t.rows) {
      if (files.size() > 1) r.push_back(names[k]);
      all.rows.push_back(std::move(r));
    }
  }
  return usable_rows(all);
}

std::string percent(double share) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * share);
  return buf;
}

}  // namespace

void apply_config_doc(const json& doc, simgen::DynamicConfigs& c) {
  if (doc.is_object() && doc.contains("configs")) {
    simgen::merge_from_json(doc.at("configs"), c);
  } else {
    simgen::merge_from_json(doc, c);
  }
}

simgen::DatasetSpec gen_spec(const GenOptions& o) {
  simgen::DatasetSpec spec = o.role == simgen::Role::kValidation
                                 ? simgen::DatasetSpec::validation_defaults(o.seed)
                                 : simgen::DatasetSpec::training_defaults(o.dynamic, o.seed);
  spec.role = o.role;
  spec.dynamic = o.dynamic;
  if (o.count < 0) throw ConfigError("gen: count must be >= 0");
  if (o.count > 0) spec.count = o.count;
  apply_config_doc(o.configs, spec.configs);
  if (o.noise_scale != 1.0) spec.configs.scale_noise(o.noise_scale);
  return spec;
}

simgen::Dataset cmd_gen(const GenOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ConfigError("gen: output path required");
  const auto ds = simgen::make_dataset(gen_spec(o));
  ensure_parent(o.out);
  simgen::save_dataset(ds, o.out);
  if (!o.csv_dir.empty()) {
    fs::create_directories(o.csv_dir);
    for (const auto& s : ds.series) {
      std::ofstream out(fs::path(o.csv_dir) / (s.id + ".csv"), std::ios::binary);
      if (!out) throw InputError("cannot write into " + o.csv_dir);
      simgen::write_series_csv(s, out);
    }
  }
  log << "wrote " << ds.series.size() << " series (" << simgen::to_string(ds.role) << ") to "
      << o.out << ':';
  for (const auto& [d, n] : ds.composition()) log << ' ' << to_string(d) << '=' << n;
  log << '\n';
  return ds;
}

TrainOutcome train_model(const TrainCmdOptions& o, const simgen::Dataset& data,
                         const std::string& train_dynamic) {
  TrainOutcome out;
  out.log.header = {"step", "metric", "value"};
  out.metadata = json{{"kind", o.kind}, {"train_dynamic", train_dynamic},
                      {"n_train_series", data.series.size()}};
  if (data.series.empty()) throw InputError("train: empty dataset");

  if (o.kind == "rnn") {
    auto res = tensornet::train(o.spec, data, o.train);
    out.log.add_row({"0", "loss", fmt_num(res.initial_loss)});
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
      out.log.add_row({std::to_string(e + 1), "loss", fmt_num(res.epoch_loss[e])});
    }
    out.failed = res.failed;
    out.failure_reason = res.failure_reason;
    out.metadata["cell"] = std::string(tensornet::to_string(o.spec.cell));
    out.metadata["optimizer"] = std::string(tensornet::to_string(o.train.optimizer));
    out.metadata["train_options"] = o.train;
    tensornet::RnnModel m{std::move(res.params), res.input_scale, out.metadata};
    out.model = std::move(m);
  } else if (o.kind == "convex") {
    classical::ConvexTrainOptions co{o.convex_dim, o.train.learning_rate, o.train.epochs, o.train.seed};
    auto res = classical::convex_train(data, co);
    out.log.add_row({"0", "loss", fmt_num(res.initial_loss)});
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
      out.log.add_row({std::to_string(e + 1), "loss", fmt_num(res.epoch_loss[e])});
    }
    out.failed = res.failed;
    out.failure_reason = res.failure_reason;
    out.metadata["train_options"] = json{{"dim", co.dim}, {"learning_rate", co.learning_rate},
                                         {"epochs", co.epochs}, {"seed", co.seed}};
    out.model = std::move(res.params);
  } else if (o.kind == "ma") {
    auto res = classical::ma_grid_search(data, classical::MaGrid::defaults());
    out.log.add_row({"1", "median_loss", fmt_num(res.median_loss)});
    out.model = res.best;
  } else if (o.kind == "hmm") {
    mle::HmmFitOptions ho;
    ho.n_states = o.hmm_states;
    ho.seed = o.train.seed;
    auto res = mle::hmm_fit(data, ho);
    for (std::size_t i = 0; i < res.log_likelihood.size(); ++i) {
      out.log.add_row({std::to_string(i + 1), "log_likelihood", fmt_num(res.log_likelihood[i])});
    }
    out.metadata["restarts"] = res.restarts;
    out.metadata["converged"] = res.converged;
    out.model = std::move(res.model);
  } else if (o.kind == "nle" || o.kind == "oue") {
    const auto est = mle::parse_estimator(o.kind);
    std::vector<double> grid;
    // Thresholds on a log scale; the OUE statistic is volatility-normalized.
    for (int k = 0; k <= 40; ++k) grid.push_back(k == 0 ? 0.0 : std::pow(10.0, -4.0 + 0.1 * k));
    models::MleModel m{est, {o.eta, 0.0, 1}};
    m.window.epsilon = mle::tune_epsilon(data, est, o.eta, grid);
    out.log.add_row({"1", "epsilon", fmt_num(m.window.epsilon)});
    out.model = m;
  } else {
    throw ConfigError("train: unknown kind '" + o.kind + "'");
  }
  return out;
}

TrainOutcome cmd_train(const TrainCmdOptions& o, const simgen::Dataset& data,
                       const std::string& train_dynamic, const std::string& model_path,
                       const std::string& log_path, std::ostream& log) {
  auto out = train_model(o, data, train_dynamic);
  if (!log_path.empty()) {
    ensure_parent(log_path);
    report::save_csv(out.log, log_path);
  }
  if (out.failed) {
    log << "training failed: " << out.failure_reason << '\n';
    return out;
  }
  json j = models::to_json(out.model);
  j["metadata"] = out.metadata;
  ensure_parent(model_path);
  write_json_file(j, model_path);
  log << "wrote " << o.kind << " model to " << model_path << '\n';
  return out;
}

SweepManifest SweepManifest::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("sweep manifest must be a JSON object");
  SweepManifest m;
  m.seed = j.value("seed", m.seed);
  m.count = j.value("count", m.count);
  m.epochs = j.value("epochs", m.epochs);
  if (j.contains("configs")) m.configs = j.at("configs");
  if (j.contains("triplets")) {
    for (const auto& t : j.at("triplets")) m.triplets.push_back(t);
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    const auto base = tensornet::RnnSpec::baseline();
    auto axis = [&](const char* key, json dflt) {
      return g.contains(key) ? g.at(key) : json::array({std::move(dflt)});
    };
    const json keys[] = {"dynamic", "cell", "optimizer", "n_layers", "hidden_dim", "dropout", "learning_rate"};
    const json axes[] = {axis("dynamic", "noisy_line"),
                         axis("cell", std::string(tensornet::to_string(base.cell))),
                         axis("optimizer", "adam"),
                         axis("n_layers", base.n_layers),
                         axis("hidden_dim", base.hidden_dim),
                         axis("dropout", base.dropout),
                         axis("learning_rate", tensornet::TrainOptions{}.learning_rate)};
    std::vector<json> acc{json::object()};
    for (std::size_t k = 0; k < std::size(axes); ++k) {
      if (!axes[k].is_array() || axes[k].empty()) throw ConfigError("sweep grid axes must be non-empty arrays");
      std::vector<json> next;
      for (const auto& partial : acc) {
        for (const auto& v : axes[k]) {
          json t = partial;
          t[keys[k].get<std::string>()] = v;
          next.push_back(std::move(t));
        }
      }
      acc = std::move(next);
    }
    for (auto& t : acc) m.triplets.push_back(std::move(t));
  }
  if (m.triplets.empty()) throw ConfigError("sweep manifest has no triplets");
  if (m.count <= 0) throw ConfigError("sweep count must be > 0");
  return m;
}

Table cmd_sweep(const SweepManifest& m, const std::string& out_dir, std::ostream& log) {
  fs::create_directories(out_dir);
  const std::vector<std::string> dyn_names = {"noisy_line", "piecewise_ou", "markov_switch", "mixed"};
  std::map<std::string, simgen::Dataset> data;
  struct Job {
    std::string id, dynamic;
    TrainCmdOptions opts;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < m.triplets.size(); ++i) {
    const auto& t = m.triplets[i];
    Job job;
    char id[16];
    std::snprintf(id, sizeof id, "t%03zu", i);
    job.id = id;
    job.dynamic = t.value("dynamic", std::string("noisy_line"));
    const auto it = std::find(dyn_names.begin(), dyn_names.end(), job.dynamic);
    if (it == dyn_names.end()) throw ConfigError("sweep: unknown dynamic '" + job.dynamic + "'");
    job.opts.kind = "rnn";
    job.opts.spec.cell = tensornet::parse_cell(t.value("cell", std::string("gru")));
    job.opts.spec.n_layers = t.value("n_layers", job.opts.spec.n_layers);
    job.opts.spec.hidden_dim = t.value("hidden_dim", job.opts.spec.hidden_dim);
    job.opts.spec.dropout = t.value("dropout", job.opts.spec.dropout);
    job.opts.spec.validate();
    job.opts.train.optimizer = tensornet::parse_optimizer(t.value("optimizer", std::string("adam")));
    job.opts.train.learning_rate = t.value("learning_rate", job.opts.train.learning_rate);
    job.opts.train.epochs = t.value("epochs", m.epochs);
    job.opts.train.seed = derive_seed(m.seed, {3, static_cast<std::uint64_t>(i)});
    if (!data.count(job.dynamic)) {
      const auto code = static_cast<std::uint64_t>(it - dyn_names.begin());
      std::optional<Dynamic> d;
      if (job.dynamic != "mixed") d = parse_dynamic(job.dynamic);
      auto spec = simgen::DatasetSpec::training_defaults(d, derive_seed(m.seed, {4, code}));
      spec.count = m.count;
      apply_config_doc(m.configs, spec.configs);
      data.emplace(job.dynamic, simgen::make_dataset(spec));
    }
    jobs.push_back(std::move(job));
  }

  std::vector<TrainOutcome> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    try {
      results[i] = train_model(jobs[i].opts, data.at(jobs[i].dynamic), jobs[i].dynamic);
    } catch (const Error& e) {
      results[i].failed = true;
      results[i].failure_reason = e.what();
    }
  });

  Table sweep;
  sweep.header = {"id", "dynamic", "cell", "optimizer", "n_layers", "hidden_dim", "dropout",
                  "learning_rate", "epochs", "status", "final_loss", "reason", "model"};
  std::size_t failed = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& j = jobs[i];
    auto& r = results[i];
    std::string model_file;
    std::string final_loss;
    if (!r.log.rows.empty()) final_loss = r.log.rows.back()[2];
    if (!r.log.header.empty()) report::save_csv(r.log, (fs::path(out_dir) / (j.id + ".log.csv")).string());
    if (!r.failed) {
      model_file = j.id + ".json";
      json mj = models::to_json(r.model);
      mj["metadata"] = r.metadata;
      write_json_file(mj, (fs::path(out_dir) / model_file).string());
    } else {
      ++failed;
    }
    sweep.add_row({j.id, j.dynamic, std::string(tensornet::to_string(j.opts.spec.cell)),
                   std::string(tensornet::to_string(j.opts.train.optimizer)),
                   std::to_string(j.opts.spec.n_layers), std::to_string(j.opts.spec.hidden_dim),
                   fmt_num(j.opts.spec.dropout), fmt_num(j.opts.train.learning_rate),
                   std::to_string(j.opts.train.epochs), r.failed ? "failed" : "converged",
                   final_loss, r.failure_reason, model_file});
  }
  report::save_csv(sweep, (fs::path(out_dir) / "sweep.csv").string());
  log << "sweep: " << jobs.size() << " triplets, " << failed << " failed; log in "
      << (fs::path(out_dir) / "sweep.csv").string() << '\n';
  return sweep;
}

NamedModel load_named(const std::string& spec) {
  std::string name, path = spec;
  if (const auto eq = spec.find('='); eq != std::string::npos) {
    name = spec.substr(0, eq);
    path = spec.substr(eq + 1);
  }
  if (!fs::exists(path)) {
    NamedModel nm{name.empty() ? path : name, models::builtin(path), json{{"builtin", true}}};
    return nm;
  }
  const json j = read_json_file(path);
  NamedModel nm{name.empty() ? fs::path(path).stem().string() : name, models::from_json(j),
                j.value("metadata", json::object())};
  return nm;
}

std::vector<NamedModel> load_sweep(const std::string& dir) {
  const Table t = report::load_csv((fs::path(dir) / "sweep.csv").string());
  const auto sc = t.column("status"), mc = t.column("model"), ic = t.column("id");
  std::vector<NamedModel> out;
  for (const auto& r : t.rows) {
    if (r[sc] != "converged") continue;
    auto nm = load_named(r[ic] + "=" + (fs::path(dir) / r[mc]).string());
    out.push_back(std::move(nm));
  }
  return out;
}

EvalOutput evaluate(const std::vector<NamedModel>& est, const simgen::Dataset& val,
                    std::uint64_t seed) {
  if (val.series.empty()) throw InputError("eval: empty dataset");
  if (est.empty()) throw ConfigError("eval: no estimators given");
  for (std::size_t a = 0; a < est.size(); ++a) {
    for (std::size_t b = a + 1; b < est.size(); ++b) {
      if (est[a].name == est[b].name) throw ConfigError("eval: duplicate estimator name '" + est[a].name + "'");
    }
  }
  std::vector<models::AnyModel> runnable;
  for (std::size_t k = 0; k < est.size(); ++k) {
    runnable.push_back(est[k].model);
    if (auto* d = std::get_if<models::DummyModel>(&runnable.back());
        d && est[k].metadata.value("builtin", false)) {
      d->seed = derive_seed(seed, k);
    }
  }
  const std::size_t n = val.series.size();
  std::vector<double> loss(est.size() * n, 0.0);
  std::vector<std::string> status(est.size() * n, "ok");
  parallel_for(est.size() * n, [&](std::size_t idx) {
    const std::size_t k = idx / n, i = idx % n;
    try {
      loss[idx] = evalkit::series_loss(models::predict(runnable[k], val.series[i], i), val.series[i].labels);
    } catch (const Error& e) {
      status[idx] = std::string("error: ") + e.what();
    }
  });

  EvalOutput out;
  out.losses.header = {"estimator", "kind", "cell", "optimizer", "train_dynamic", "id", "dynamic", "loss", "status"};
  out.summary = json{{"estimators", json::array()}};
  std::vector<evalkit::EvalReport> reports;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const auto& meta = est[k].metadata;
    const auto kind = models::kind_of(est[k].model);
    std::vector<evalkit::LossRow> rows;
    std::size_t fails = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = val.series[i];
      const std::size_t idx = k * n + i;
      const bool ok = status[idx] == "ok";
      out.losses.add_row({est[k].name, kind, meta.value("cell", std::string()),
                          meta.value("optimizer", std::string()), meta.value("train_dynamic", std::string()),
                          s.id, std::string(to_string(s.dynamic)), ok ? fmt_num(loss[idx]) : "", status[idx]});
      if (ok) {
        rows.push_back({s.id, std::string(to_string(s.dynamic)), loss[idx]});
      } else {
        ++fails;
      }
    }
    out.soft_failures += fails;
    json entry{{"name", est[k].name}, {"kind", kind}, {"soft_failures", fails}};
    if (!rows.empty()) {
      reports.push_back(evalkit::summarize(std::move(rows)));
      entry["report"] = reports.back();
    } else {
      reports.emplace_back();
      entry["report"] = nullptr;
    }
    out.summary["estimators"].push_back(std::move(entry));
  }

  std::vector<std::string> groups;
  for (const auto& s : val.series) {
    const std::string g(to_string(s.dynamic));
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  groups.push_back("all");
  out.medians.header = {"dynamic"};
  for (const auto& e : est) out.medians.header.push_back(e.name);
  for (const auto& g : groups) {
    std::vector<std::string> row{g};
    for (const auto& r : reports) {
      const auto* gs = r.groups.empty() ? nullptr : r.find(g);
      row.push_back(gs ? fmt_num(gs->median, 6) : "");
    }
    out.medians.add_row(std::move(row));
  }
  return out;
}

EvalOutput cmd_eval(const std::vector<NamedModel>& est, const simgen::Dataset& val,
                    std::uint64_t seed, const std::string& out_prefix, std::ostream& log) {
  auto out = evaluate(est, val, seed);
  ensure_parent(out_prefix + "_losses.csv");
  report::save_csv(out.losses, out_prefix + "_losses.csv");
  report::save_csv(out.medians, out_prefix + "_medians.csv");
  write_json_file(out.summary, out_prefix + "_report.json");
  report::write_csv(out.medians, log);
  if (out.soft_failures > 0) log << out.soft_failures << " series could not be evaluated (see status column)\n";
  return out;
}

json cmd_compare(const CompareOptions& o, std::ostream& log) {
  const Table t = merged_losses(o.loss_files);
  if (t.rows.empty()) throw InputError("compare: no usable loss rows");
  ensure_parent(o.out_prefix + "_compare.json");
  const std::size_t lc = t.column("loss");
  std::vector<std::string> group_by = o.group_by;
  if (group_by.empty()) group_by.push_back(o.loss_files.size() > 1 ? "source" : "estimator");

  json result{{"bootstrap", json::object()}};
  for (std::size_t gi = 0; gi < group_by.size(); ++gi) {
    const auto& col = group_by[gi];
    const std::size_t c = t.column(col);
    const auto mods = first_seen(t, c);
    std::vector<std::vector<double>> values(mods.size());
    for (const auto& r : t.rows) {
      const auto m = static_cast<std::size_t>(std::find(mods.begin(), mods.end(), r[c]) - mods.begin());
      values[m].push_back(parse_num(r[lc], "loss"));
    }
    for (std::size_t m = 0; m < mods.size(); ++m) {
      if (values[m].size() < 2) {
        throw InputError("compare: group '" + mods[m] + "' of '" + col + "' has fewer than 2 observations");
      }
    }
    Table bt;
    bt.header = {"group_a", "group_b", "median_diff", "ci_low", "ci_high", "level", "contains_zero"};
    std::uint64_t pair = 0;
    for (std::size_t a = 0; a < mods.size(); ++a) {
      for (std::size_t b = a + 1; b < mods.size(); ++b, ++pair) {
        const auto r = evalkit::bootstrap_median_diff(values[a], values[b], o.level, o.resamples,
                                                      derive_seed(o.seed, {gi, pair}));
        bt.add_row({mods[a], mods[b], fmt_num(r.point_diff, 6), fmt_num(r.ci_low, 6),
                    fmt_num(r.ci_high, 6), fmt_num(r.level), r.contains(0.0) ? "yes" : "no"});
      }
    }
    report::save_csv(bt, o.out_prefix + "_bootstrap_" + col + ".csv");
    std::vector<report::BoxGroup> boxes;
    for (std::size_t m = 0; m < mods.size(); ++m) boxes.push_back({mods[m], values[m]});
    report::save_text(report::svg_boxplot(boxes, "loss by " + col, "loss"),
                      o.out_prefix + "_box_" + col + ".svg");
    json rows = json::array();
    for (const auto& r : bt.rows) {
      rows.push_back(json{{"group_a", r[0]}, {"group_b", r[1]}, {"median_diff", r[2]},
                          {"ci_low", r[3]}, {"ci_high", r[4]}, {"contains_zero", r[6] == "yes"}});
    }
    result["bootstrap"][col] = rows;
    log << "bootstrap by " << col << ":\n";
    report::write_csv(bt, log);
  }

  std::vector<evalkit::CategoricalFeature> feats;
  for (const auto& name : o.ols_features.empty() ? group_by : o.ols_features) {
    const std::size_t c = t.column(name);
    if (first_seen(t, c).size() < 2) {
      log << "ols: skipping '" << name << "' (single modality)\n";
      continue;
    }
    evalkit::CategoricalFeature f{name, {}};
    for (const auto& r : t.rows) f.values.push_back(r[c]);
    feats.push_back(std::move(f));
  }
  if (!feats.empty()) {
    std::vector<double> y;
    for (const auto& r : t.rows) y.push_back(parse_num(r[lc], "loss"));
    const auto fit = evalkit::ols_fit(y, feats);
    Table ot;
    ot.header = {"term", "coefficient", "std_err", "t", "p_value", "ci_low", "ci_high"};
    for (const auto& c : fit.coefficients) {
      ot.add_row({c.name, fmt_num(c.coef, 6), fmt_num(c.std_err, 6), fmt_num(c.t, 6),
                  fmt_num(c.p_value, 6), fmt_num(c.ci_low, 6), fmt_num(c.ci_high, 6)});
    }
    report::save_csv(ot, o.out_prefix + "_ols.csv");
    result["ols"] = json{{"n_rows", fit.n_rows}, {"dof", fit.dof}, {"r_squared", fit.r_squared}};
    log << "ols (n=" << fit.n_rows << ", R2=" << fmt_num(fit.r_squared, 4) << "):\n";
    report::write_csv(ot, log);
  }
  write_json_file(result, o.out_prefix + "_compare.json");
  return result;
}

json cmd_calibrate(const CalibrateOptions& o, std::ostream& log) {
  std::ifstream in(o.csv, std::ios::binary);
  if (!in) throw InputError("cannot read " + o.csv);
  const auto prices = report::read_prices(in, o.csv);
  std::vector<double> r(prices.size() - 1);
  for (std::size_t i = 0; i + 1 < prices.size(); ++i) {
    if (o.returns == "log") {
      r[i] = std::log(prices[i + 1] / prices[i]);
    } else if (o.returns == "diff") {
      r[i] = prices[i + 1] - prices[i];
    } else {
      throw ConfigError("calibrate: returns must be 'log' or 'diff'");
    }
  }
  const auto res = evalkit::calibrate(o.dynamic, r, o.search);
  json out{{"dynamic", to_string(o.dynamic)},
           {"returns", o.returns},
           {"distance", res.distance},
           {"running_min", res.running_min},
           {"search", {{"n_draws", o.search.n_draws}, {"n_candidates", o.search.n_candidates}, {"seed", o.search.seed}}},
           {"configs", res.configs}};
  ensure_parent(o.out);
  write_json_file(out, o.out);
  log << "best " << to_string(o.dynamic) << " config: W1 distance " << fmt_num(res.distance, 6)
      << " over " << o.search.n_candidates << " candidates; wrote " << o.out << '\n';
  return out;
}

std::vector<Series> trend_triplet(long length, std::uint64_t seed) {
  if (length < 2) throw ConfigError("plot-state: length must be >= 2");
  const auto cfg = simgen::DynamicConfigs::defaults_for(simgen::Role::kValidation).noisy_line;
  std::vector<Series> out;
  const double slopes[] = {cfg.gamma, 0.0, -cfg.gamma};
  const char* names[] = {"up", "flat", "down"};
  for (int k = 0; k < 3; ++k) {
    std::vector<simgen::LineSegment> plan{{slopes[k], 0.5 * cfg.sigma_max, length}};
    auto s = simgen::simulate_noisy_line(plan, cfg.y0, derive_seed(seed, static_cast<std::uint64_t>(k)), cfg.dt);
    s.id = names[k];
    out.push_back(std::move(s));
  }
  return out;
}

report::Projection cmd_plot_state(const PlotStateOptions& o, std::ostream& log) {
  const auto m = load_named(o.model).model;
  const std::size_t dim = models::hidden_dim(m);
  if (dim < 2) throw ShapeError("plot-state: hidden dimension must be >= 2, got " + std::to_string(dim));
  std::vector<Series> series = o.data.empty() ? trend_triplet(o.length, o.seed)
                                              : simgen::load_dataset(o.data).series;
  if (series.empty()) throw InputError("plot-state: no series");
  std::vector<std::vector<double>> all;
  std::vector<std::size_t> sizes;
  for (const auto& s : series) {
    auto h = models::hidden_states(m, s);
    sizes.push_back(h.size());
    for (auto& row : h) all.push_back(std::move(row));
  }
  auto proj = report::pca2(all);
  std::vector<report::Trajectory> trajs;
  Table coords;
  coords.header = {"series", "step", "pc1", "pc2"};
  std::size_t pos = 0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    report::Trajectory t{series[k].id, {}};
    for (std::size_t i = 0; i < sizes[k]; ++i, ++pos) {
      t.points.push_back(proj.points[pos]);
      coords.add_row({series[k].id, std::to_string(i), fmt_num(proj.points[pos][0], 8),
                      fmt_num(proj.points[pos][1], 8)});
    }
    trajs.push_back(std::move(t));
  }
  ensure_parent(o.out);
  report::save_text(report::svg_trajectories(trajs, "hidden states (" + models::kind_of(m) + ")",
                                             "PC1 (" + percent(proj.explained[0]) + ")",
                                             "PC2 (" + percent(proj.explained[1]) + ")"),
                    o.out);
  const auto csv = fs::path(o.out).replace_extension(".csv").string();
  report::save_csv(coords, csv);
  log << "wrote " << o.out << " and " << csv << '\n';
  return proj;
}

Table cmd_report(const ReportOptions& o, std::ostream& log) {
  const Table t = merged_losses(o.loss_files);
  if (t.rows.empty()) throw InputError("report: no usable loss rows");
  const std::size_t ec = t.column("estimator"), dc = t.column("dynamic"), lc = t.column("loss");
  const auto ests = first_seen(t, ec);
  auto dyns = first_seen(t, dc);
  dyns.push_back("all");
  Table out;
  out.header = {"dynamic"};
  for (const auto& e : ests) out.header.push_back(e);
  std::vector<report::BoxGroup> boxes;
  for (const auto& e : ests) boxes.push_back({e, {}});
  for (const auto& d : dyns) {
    std::vector<std::string> row{d};
    for (std::size_t k = 0; k < ests.size(); ++k) {
      std::vector<double> v;
      for (const auto& r : t.rows) {
        if (r[ec] == ests[k] && (d == "all" || r[dc] == d)) v.push_back(parse_num(r[lc], "loss"));
      }
      if (d == "all") boxes[k].values = v;
      if (v.empty()) {
        row.push_back("");
        continue;
      }
      const auto g = evalkit::summarize_sample(d, v);
      row.push_back(fmt_num(g.median, 3) + " (" + fmt_num(g.iqr, 3) + ")");
    }
    out.add_row(std::move(row));
  }
  ensure_parent(o.out_prefix + "_table.csv");
  report::save_csv(out, o.out_prefix + "_table.csv");
  std::ostringstream md;
  md << "Median loss (IQR) per validation dynamic\n\n|";
  for (const auto& h : out.header) md << ' ' << h << " |";
  md << "\n|";
  for (std::size_t i = 0; i < out.header.size(); ++i) md << " --- |";
  md << '\n';
  for (const auto& r : out.rows) {
    md << '|';
    for (const auto& c : r) md << ' ' << c << " |";
    md << '\n';
  }
  report::save_text(md.str(), o.out_prefix + "_table.md");
  report::save_text(report::svg_boxplot(boxes, "loss by estimator", "loss"), o.out_prefix + "_box.svg");
  log << md.str();
  return out;
}

}  // namespace trendlab::app
