#pragma once

// The appfate command line: ingest, train, evaluate, grid, predict,
// importance, features, gen-data, serve.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage or data error. Data goes to
// stdout (or --out files), diagnostics to stderr. Arguments of the form
// @path are replaced by the whitespace-separated tokens of that file.

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "appfate/csv.hpp"
#include "appfate/ensemble.hpp"
#include "appfate/error.hpp"
#include "appfate/eval.hpp"
#include "appfate/ingest.hpp"
#include "appfate/pipeline.hpp"
#include "appfate/serve.hpp"
#include "appfate/synthetic.hpp"

namespace appfate::cli {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Tokens are separated by whitespace; double quotes group; lines whose first
// non-blank character is '#' are comments. Nested @files are expanded too.
inline std::vector<std::string> expand_argfiles(const std::vector<std::string>& args, int depth = 0) {
  if (depth > 8) throw UsageError("@file nesting too deep");
  std::vector<std::string> out;
  for (const auto& a : args) {
    if (a.size() < 2 || a.front() != '@') {
      out.push_back(a);
      continue;
    }
    std::ifstream in(a.substr(1));
    if (!in) throw UsageError("cannot read argument file " + a.substr(1));
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) {
      const auto body = appfate::detail::trim(line);
      if (body.empty() || body.front() == '#') continue;
      std::istringstream ls{std::string(body)};
      for (std::string t; ls >> std::quoted(t);) tokens.push_back(t);
    }
    for (auto& t : expand_argfiles(tokens, depth + 1)) out.push_back(std::move(t));
  }
  return out;
}

namespace detail {

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

// Writes to `path`, or to `fallback` when path is empty or "-".
template <typename Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  fn(out);
  if (!out) throw DataError("write failed: " + path);
}

inline PreparedData read_apps(const std::string& path, std::ostream& err) {
  auto in = open_in(path);
  auto parsed = parse_records(in);
  for (const auto& e : parsed.errors) err << path << ": row " << e.row << ": " << e.reason << '\n';
  auto data = prepare(std::move(parsed.records), std::filesystem::path(path).parent_path());
  err << path << ": " << data.records.size() << " complete rows, " << data.drops.size() << " dropped, "
      << parsed.errors.size() << " unparseable\n";
  for (const auto& [reason, n] : data.drop_counts) err << "  dropped " << reason << ": " << n << '\n';
  if (data.records.empty()) throw DataError(path + ": no usable rows");
  return data;
}

inline bool is_feature_matrix(const std::string& path) {
  auto in = open_in(path);
  csv::Reader reader(in);
  const auto header = reader.next();
  return header && !header->empty() && header->back() == "label";
}

struct LabeledMatrix {
  DenseMatrix x;
  std::vector<std::uint8_t> y;
  std::vector<std::size_t> rows;  // source rows
};

// Header: the model's feature names, then "label" (1 = Removed).
inline LabeledMatrix read_feature_matrix(const std::string& path, const FeatureSchema& schema) {
  auto in = open_in(path);
  csv::Reader reader(in);
  const auto header = reader.next();
  const auto names = schema.feature_names();
  if (!header || header->size() != names.size() + 1) {
    throw DataError(path + ": feature matrix has " + std::to_string(header ? header->size() - 1 : 0) +
                    " feature columns, model expects " + std::to_string(names.size()));
  }
  for (std::size_t c = 0; c < names.size(); ++c) {
    if ((*header)[c] != names[c]) {
      throw DataError(path + ": column " + std::to_string(c + 1) + " is " + (*header)[c] + ", model expects " +
                      names[c]);
    }
  }
  std::vector<std::vector<double>> rows;
  LabeledMatrix m;
  std::size_t line = 1;
  while (auto row = reader.next()) {
    ++line;
    if (row->size() != names.size() + 1) throw DataError(path + ": row " + std::to_string(line) + ": wrong width");
    std::vector<double> v(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
      const auto d = appfate::detail::parse_real((*row)[c]);
      if (!d) throw DataError(path + ": row " + std::to_string(line) + ": " + names[c] + " is not a number");
      v[c] = *d;
    }
    const auto& l = row->back();
    if (l != "0" && l != "1") throw DataError(path + ": row " + std::to_string(line) + ": label must be 0 or 1");
    m.y.push_back(l == "1");
    m.rows.push_back(line);
    rows.push_back(std::move(v));
  }
  m.x = DenseMatrix(rows.size(), names.size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), m.x.row(i).begin());
  return m;
}

inline LabeledMatrix labeled_matrix(const std::string& path, const BagModel& model, std::ostream& err) {
  if (is_feature_matrix(path)) return read_feature_matrix(path, model.schema());
  const auto data = read_apps(path, err);
  const auto all = eval::detail::iota(data.records.size());
  LabeledMatrix m{vectorize_rows(model.featurizer, data, all), data.label_bits(), {}};
  for (const auto& r : data.records) m.rows.push_back(r.source_row);
  return m;
}

inline std::map<std::size_t, double> read_truth(const std::string& path) {
  auto in = open_in(path);
  csv::Reader reader(in);
  const auto header = reader.next();
  if (!header || *header != csv::Row{"row", "probability"}) throw DataError(path + ": expected header row,probability");
  std::map<std::size_t, double> out;
  while (auto row = reader.next()) {
    const auto r = row->size() == 2 ? appfate::detail::parse_count((*row)[0]) : std::nullopt;
    const auto p = row->size() == 2 ? appfate::detail::parse_real((*row)[1]) : std::nullopt;
    if (!r || !p) throw DataError(path + ": malformed row");
    out[std::size_t(*r)] = *p;
  }
  return out;
}

inline double parse_threshold_policy(const std::string& s, bool& fixed) {
  if (s == "fscore") {
    fixed = false;
    return 0.0;
  }
  const auto t = appfate::detail::parse_real(s);
  if (!t || *t < 0.0 || *t > 1.0) throw UsageError("--threshold must be 'fscore' or a number in [0,1]");
  fixed = true;
  return *t;
}

inline std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

}  // namespace detail

struct Options {
  std::string in, out, model, model_out, roc_out, drops_out, truth, truth_out, listen = "127.0.0.1:8080";
  std::string variant = "developer", threshold = "fscore", signal = "strong";
  int classifiers = 0;  // 0: variant default
  std::size_t subset = 100'000;
  std::vector<int> depths{2, 3}, trees{256, 512}, counts{1, 3, 5, 7, 9, 11};
  std::vector<std::size_t> sizes{2'000, 10'000, 50'000, 100'000};
  std::uint64_t seed = 0;
  double test_fraction = 0.30;
  unsigned jobs = default_jobs();
  std::size_t n = 5'000, top = 20;
  bool json = false;
  bool validation_in_training = false;
};

inline BagConfig bag_config(const Options& o) {
  BagConfig c;
  c.variant = parse_variant(o.variant);
  c.n_classifiers = o.classifiers > 0 ? o.classifiers : (c.variant == Variant::User ? 11 : 1);
  c.subset_size = o.subset;
  c.depth_choices = o.depths;
  c.tree_count_choices = o.trees;
  c.master_seed = o.seed;
  c.validate();
  return c;
}

inline void cmd_ingest(const Options& o, std::ostream& out, std::ostream& err) {
  const auto data = detail::read_apps(o.in, err);
  if (!o.out.empty()) detail::with_output(o.out, out, [&](std::ostream& s) { write_records(s, data.records); });
  if (!o.drops_out.empty()) {
    detail::with_output(o.drops_out, out, [&](std::ostream& s) { write_drop_report(s, data.drops); });
  }
  const auto summary = summarize(data.records, data.labels);
  Json classes = Json::object();
  for (const auto& [label, count] : summary.class_counts) classes[std::string(to_string(label))] = count;
  Json j = {{"kept", data.records.size()},
            {"dropped", data.drops.size()},
            {"drop_counts", data.drop_counts},
            {"class_counts", classes},
            {"genres", summary.genre_histogram},
            {"lowest_android_versions", summary.lowest_version_histogram},
            {"unmatched_receiver_actions", data.unmatched_actions},
            {"unknown_android_versions", data.unknown_android_versions}};
  out << j.dump(2) << '\n';
}

inline void cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  TrainOptions opt;
  opt.bag = bag_config(o);
  opt.test_fraction = o.test_fraction;
  opt.jobs = o.jobs;
  opt.validation_in_training = o.validation_in_training;
  bool fixed = false;
  const double t = detail::parse_threshold_policy(o.threshold, fixed);
  if (fixed) opt.fixed_threshold = t;
  const auto data = detail::read_apps(o.in, err);
  err << "training " << opt.bag.n_classifiers << " " << to_string(opt.bag.variant) << " classifier(s), subset "
      << opt.bag.subset_size << '\n';
  auto result = train_pipeline(data, opt);
  result.model.created_at = utc_timestamp();
  save_file(result.model, o.model_out);
  out << "members " << result.model.members.size() << '\n'
      << "validation_auc " << detail::fixed4(result.validation_auc) << '\n'
      << "test_auc " << detail::fixed4(result.test_auc) << '\n'
      << "threshold " << detail::fixed4(result.model.operating_threshold()) << '\n'
      << "validation_f1 " << detail::fixed4(result.validation_f_score) << '\n'
      << "model_version " << model_version(result.model) << '\n';
}

inline void cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  const auto model = load_file(o.model);
  const auto m = detail::labeled_matrix(o.in, model, err);
  auto report = eval::evaluate(model, m.x, m.y, o.top);
  if (!o.truth.empty()) {
    const auto truth = detail::read_truth(o.truth);
    std::vector<double> p;
    for (auto r : m.rows) {
      const auto it = truth.find(r);
      if (it == truth.end()) throw DataError(o.truth + ": no probability for row " + std::to_string(r));
      p.push_back(it->second);
    }
    report.bayes_auc = eval::bayes_auc(p);
  }
  if (!o.roc_out.empty()) detail::with_output(o.roc_out, out, [&](std::ostream& s) { eval::write_roc_csv(s, report.roc); });
  if (o.json) {
    out << eval::to_json(report).dump(2) << '\n';
  } else {
    eval::write_text(out, report);
  }
}

inline void cmd_grid(const Options& o, std::ostream& out, std::ostream& err) {
  const auto base = bag_config(o);
  const auto data = detail::read_apps(o.in, err);
  const auto y = data.label_bits();
  const auto part = partition(y, o.test_fraction, o.seed);
  const auto train_records = select<RawAppRecord>(data.records, part.split.train);
  const auto featurizer = Featurizer::fit(train_records, base.variant);
  const auto pool = o.validation_in_training ? part.split.train : without(part.split.train, part.validation);
  const auto x_train = vectorize_rows(featurizer, data, pool);
  const auto x_valid = vectorize_rows(featurizer, data, part.validation);
  const auto y_train = select<std::uint8_t>(y, pool);
  const auto y_valid = select<std::uint8_t>(y, part.validation);
  const auto cells =
      eval::run_grid(x_train, y_train, x_valid, y_valid, o.counts, o.sizes, base, featurizer, o.jobs);
  if (o.json) {
    Json j = Json::array();
    for (const auto& c : cells) j.push_back({{"n_classifiers", c.n_classifiers}, {"subset_size", c.subset_size}, {"auc", c.auc}});
    out << j.dump(2) << '\n';
  } else {
    eval::write_grid_table(out, cells);
  }
}

inline void cmd_predict(const Options& o, std::ostream& out, std::ostream& err) {
  serve::Service service(o.model);
  service.reload();
  const auto text = appfate::detail::read_file(o.in);
  const auto body = appfate::detail::trim(text);
  if (!body.empty() && (body.front() == '{' || body.front() == '[')) {
    Json doc;
    try {
      doc = Json::parse(body);
    } catch (const Json::parse_error& e) {
      throw DataError(o.in + ": " + e.what());
    }
    auto one = [&](const Json& app) {
      const auto r = service.handle("POST", "/v1/predict", app.dump());
      if (r.status != 200) throw DataError(o.in + ": " + r.body.value("message", "request rejected"));
      return r.body;
    };
    Json result;
    if (doc.is_array()) {
      result = Json::array();
      for (const auto& app : doc) result.push_back(one(app));
    } else {
      result = one(doc);
    }
    out << result.dump(2) << '\n';
    return;
  }
  const auto data = detail::read_apps(o.in, err);
  const auto& model = service.model()->model;
  out << "row,score,label\n" << std::setprecision(17);
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const double s = predict_score(model, model.featurizer(data.records[i], data.groups[i]));
    out << data.records[i].source_row << ',' << s << ',' << to_string(classify(s, model.operating_threshold())) << '\n';
  }
}

inline void cmd_importance(const Options& o, std::ostream& out) {
  const auto model = load_file(o.model);
  auto ranked = aggregate_importance(model);
  if (ranked.size() > o.top) ranked.resize(o.top);
  if (o.json) {
    Json j = Json::array();
    for (const auto& s : ranked) j.push_back({{"feature", s.name}, {"score", s.score}});
    out << j.dump(2) << '\n';
    return;
  }
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    out << std::setw(4) << i + 1 << "  " << std::left << std::setw(40) << ranked[i].name << std::right
        << detail::fixed4(ranked[i].score) << '\n';
  }
}

inline void cmd_features(const Options& o, std::ostream& out, std::ostream& err) {
  const auto model = load_file(o.model);
  const auto data = detail::read_apps(o.in, err);
  const auto all = eval::detail::iota(data.records.size());
  const auto x = vectorize_rows(model.featurizer, data, all);
  detail::with_output(o.out, out, [&](std::ostream& s) {
    auto header = model.schema().feature_names();
    header.push_back("label");
    csv::write_row(s, header);
    s << std::setprecision(17);
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (double v : x.row(i)) s << v << ',';
      s << int(positive(data.labels[i])) << '\n';
    }
  });
}

inline void cmd_gen_data(const Options& o, std::ostream& out) {
  eval::SignalSpec spec;
  if (o.signal == "strong") {
    spec = eval::SignalSpec::strong();
  } else if (o.signal != "none") {
    throw UsageError("--signal must be strong or none");
  }
  const auto data = eval::gen_synthetic(o.n, o.seed, spec);
  detail::with_output(o.out, out, [&](std::ostream& s) { write_records(s, data.records); });
  if (!o.truth_out.empty()) {
    detail::with_output(o.truth_out, out, [&](std::ostream& s) {
      s << "row,probability\n" << std::setprecision(17);
      for (std::size_t i = 0; i < data.records.size(); ++i) s << data.records[i].source_row << ',' << data.probability[i] << '\n';
    });
  }
}

inline std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  const auto port = colon == std::string::npos ? std::nullopt : appfate::detail::parse_count(listen.substr(colon + 1));
  if (!port || *port > 65535) throw UsageError("--listen must be host:port");
  return {listen.substr(0, colon), int(*port)};
}

// Blocks until SIGINT or SIGTERM. SIGHUP re-reads the model file; a failed
// reload keeps the current model.
inline void cmd_serve(const Options& o, std::ostream& err) {
  const auto [host, port] = split_listen(o.listen);
  serve::Service service(o.model, o.top);
  if (!o.model.empty()) service.reload();

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGHUP);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  httplib::Server server;
  serve::bind(server, service);
  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot listen on " + o.listen);
  const auto loaded = service.model();
  err << "listening on " << host << ':' << bound << " model " << (loaded ? loaded->version : "none") << std::endl;
  std::thread worker([&] { server.listen_after_bind(); });

  for (;;) {
    int sig = 0;
    sigwait(&signals, &sig);
    if (sig != SIGHUP) break;
    try {
      service.reload();
      err << "reloaded model " << service.model()->version << std::endl;
    } catch (const std::exception& e) {
      err << "reload failed: " << e.what() << std::endl;
    }
  }
  server.stop();
  worker.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
}

inline int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"appfate: app-store removal prediction"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  auto add_in = [&](CLI::App* c, const std::string& what) { c->add_option("--in", o.in, what)->required(); };
  auto add_model = [&](CLI::App* c) { c->add_option("--model", o.model, "Model file")->required(); };
  auto add_bag = [&](CLI::App* c) {
    c->add_option("--variant", o.variant, "user or developer")->check(CLI::IsMember({"user", "developer"}));
    c->add_option("--seed", o.seed, "Master seed");
    c->add_option("--subset", o.subset, "Balanced training subset size per classifier");
    c->add_option("--depths", o.depths, "Candidate tree depths")->delimiter(',');
    c->add_option("--trees", o.trees, "Candidate tree counts")->delimiter(',');
    c->add_option("--test-fraction", o.test_fraction, "Held-out test fraction")->check(CLI::Range(0.01, 0.99));
    c->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    c->add_flag("--validation-in-training", o.validation_in_training,
                "Let the bags sample validation rows too (default: held out)");
  };

  auto* ingest = app.add_subcommand("ingest", "Parse, filter and summarize an app CSV");
  add_in(ingest, "App CSV");
  ingest->add_option("--out", o.out, "Write the complete rows as CSV");
  ingest->add_option("--drops", o.drops_out, "Write the drop report as CSV");

  auto* train = app.add_subcommand("train", "Fit a bagged ensemble and save it");
  add_in(train, "Labeled app CSV");
  train->add_option("--model-out", o.model_out, "Model file to write")->required();
  train->add_option("--classifiers", o.classifiers, "Ensemble size (default: user 11, developer 1)")
      ->check(CLI::PositiveNumber);
  train->add_option("--threshold", o.threshold, "fscore or a fixed value in [0,1]");
  add_bag(train);

  auto* evaluate = app.add_subcommand("evaluate", "Score a labeled CSV or feature matrix");
  add_model(evaluate);
  add_in(evaluate, "Labeled app CSV or feature matrix");
  evaluate->add_option("--roc-out", o.roc_out, "Write ROC points as threshold,fpr,tpr CSV");
  evaluate->add_option("--truth", o.truth, "row,probability CSV from gen-data; adds the Bayes AUC");
  evaluate->add_option("--top", o.top, "Importance entries to report");
  evaluate->add_flag("--json", o.json, "JSON report");

  auto* grid = app.add_subcommand("grid", "Validation AUC over classifier counts and subset sizes");
  add_in(grid, "Labeled app CSV");
  grid->add_option("--classifiers", o.counts, "Classifier counts")->delimiter(',');
  grid->add_option("--sizes", o.sizes, "Subset sizes")->delimiter(',');
  grid->add_flag("--json", o.json, "JSON output");
  add_bag(grid);

  auto* predict = app.add_subcommand("predict", "Score apps from a JSON request or a CSV");
  add_model(predict);
  add_in(predict, "JSON object/array of requests, or app CSV");

  auto* importance = app.add_subcommand("importance", "Averaged feature importance of a model");
  add_model(importance);
  importance->add_option("--top", o.top, "Entries to print");
  importance->add_flag("--json", o.json, "JSON output");

  auto* features = app.add_subcommand("features", "Write the feature matrix of an app CSV under a model's schema");
  add_model(features);
  add_in(features, "Labeled app CSV");
  features->add_option("--out", o.out, "Output CSV (default stdout)");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic app CSV with a planted removal signal");
  gen->add_option("--n", o.n, "Rows")->check(CLI::Range(10, 100'000'000));
  gen->add_option("--seed", o.seed, "Seed");
  gen->add_option("--out", o.out, "Output CSV (default stdout)");
  gen->add_option("--truth-out", o.truth_out, "Write row,probability CSV of true removal probabilities");
  gen->add_option("--signal", o.signal, "strong or none");

  auto* srv = app.add_subcommand("serve", "Serve the /v1 prediction API");
  srv->add_option("--model", o.model, "Model file")->envname("APPFATE_MODEL");
  srv->add_option("--listen", o.listen, "host:port (port 0 picks a free port)")->envname("APPFATE_LISTEN");
  srv->add_option("--top", o.top, "Importance entries in predict responses");

  try {
    auto args = expand_argfiles(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "appfate: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "appfate: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*ingest) cmd_ingest(o, out, err);
    if (*train) cmd_train(o, out, err);
    if (*evaluate) cmd_evaluate(o, out, err);
    if (*grid) cmd_grid(o, out, err);
    if (*predict) cmd_predict(o, out, err);
    if (*importance) cmd_importance(o, out);
    if (*features) cmd_features(o, out, err);
    if (*gen) cmd_gen_data(o, out);
    if (*srv) cmd_serve(o, err);
    out.flush();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "appfate: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "appfate: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainError& e) {
    err << "appfate: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "appfate: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace appfate::cli
