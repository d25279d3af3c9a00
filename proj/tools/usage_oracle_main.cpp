// usage-oracle: train, query, and evaluate a next-app predictor over JSONL
// usage logs, plus a seeded synthetic-log generator for experiments.
//
// Exit codes: 0 success, 2 bad input (files, flags, config), 3 broken
// internal invariant.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "usage_oracle/eval.hpp"
#include "usage_oracle/generator.hpp"
#include "usage_oracle/implicit.hpp"
#include "usage_oracle/ingest.hpp"
#include "usage_oracle/model.hpp"

namespace uo = usage_oracle;

namespace {

struct ConfigFlags {
  std::optional<int> top_k;
  std::optional<double> knn_fraction;
  std::optional<double> rho;
  std::optional<double> min_tp;
  std::optional<int> max_lookback;
  std::optional<int> refine_iters;
  std::optional<double> coverage_threshold;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--top-k", f.top_k, "prediction list length");
  cmd->add_option("--knn-fraction", f.knn_fraction,
                  "neighbors as a fraction of training size, (0,1]");
  cmd->add_option("--rho", f.rho, "training coverage where selection stops, (0,1]");
  cmd->add_option("--min-tp", f.min_tp,
                  "minimum accumulated transition probability, (0,1)");
  cmd->add_option("--max-lookback", f.max_lookback, "history window cap");
  cmd->add_option("--refine-iters", f.refine_iters,
                  "refinement iterations for test-time implicit features");
  cmd->add_option("--coverage-threshold", f.coverage_threshold,
                  "interval-histogram mass covered when fitting edges, (0,1]");
  cmd->add_option("--seed", f.seed, "rng seed");
}

uo::Config resolve_config(const std::string& config_path,
                          const std::optional<std::uint64_t>& global_seed,
                          const ConfigFlags& f) {
  uo::Config c;
  if (!config_path.empty()) c = uo::Config::from_file(config_path);
  if (global_seed) c.rng_seed = *global_seed;
  if (f.top_k) c.top_k = *f.top_k;
  if (f.knn_fraction) c.knn_fraction = *f.knn_fraction;
  if (f.rho) c.rho = *f.rho;
  if (f.min_tp) c.min_tp = *f.min_tp;
  if (f.max_lookback) c.max_lookback = *f.max_lookback;
  if (f.refine_iters) c.refine_iters = *f.refine_iters;
  if (f.coverage_threshold) c.coverage_threshold = *f.coverage_threshold;
  if (f.seed) c.rng_seed = *f.seed;
  c.validate();
  return c;
}

void report_implicit_diagnostic() {
  std::uint64_t n = uo::if_entries_above_one().load();
  if (n > 0)
    std::cerr << "note: " << n
              << " implicit feature entries exceeded 1 (multi-path sums)\n";
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void print_summary(const uo::EvalReport& report, int k) {
  for (const std::string& p : report.predictors) {
    const uo::MetricCell& cell = report.aggregate.at(p);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s: recall@%d %.4f ndcg %.4f (%lld cases)\n",
                  p.c_str(), k, cell.recall, cell.ndcg,
                  static_cast<long long>(cell.n_cases));
    std::cout << buf;
  }
}

// Events for prediction arrive with their own intern tables; remap them onto
// the bundle's. Apps the model never saw become id -1 (they cannot be
// predicted and drop out of graph walks); unseen symbols get fresh ids that
// simply never match a training value.
struct RemappedEvents {
  std::vector<std::pair<std::string, std::vector<uo::UsageEvent>>> users;
  uo::InternTable symbols;  // bundle symbols plus any new ones
};

RemappedEvents remap_onto_bundle(const uo::Dataset& ev, const uo::ModelBundle& b) {
  RemappedEvents out;
  out.symbols = b.symbols;
  for (const uo::UserTrace& t : ev.users) {
    std::vector<uo::UsageEvent> events;
    events.reserve(t.events.size());
    for (const uo::UsageEvent& e : t.events) {
      uo::UsageEvent m = e;
      auto app = b.apps.find(ev.apps.name(e.app));
      m.app = app ? *app : -1;
      for (uo::SensorValue& v : m.sensors)
        if (v.kind == uo::SensorValue::Kind::Categorical)
          v.sym = out.symbols.intern(ev.symbols.name(v.sym));
      events.push_back(std::move(m));
    }
    out.users.emplace_back(t.user, std::move(events));
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"next-app prediction over usage logs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string debug_dump;
  std::optional<std::uint64_t> global_seed;
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--seed", global_seed, "rng seed (overridden by subcommand --seed)");
  app.add_option("--debug-dump", debug_dump,
                 "path for per-query transition matrices (predict only)");

  // generate
  auto* gen = app.add_subcommand("generate", "emit a seeded synthetic usage log");
  std::string gen_spec_path, gen_out;
  ConfigFlags gen_flags;
  gen->add_option("--spec", gen_spec_path, "generator spec json")->required();
  gen->add_option("--out", gen_out, "output jsonl path")->required();
  add_config_flags(gen, gen_flags);

  // train
  auto* train = app.add_subcommand("train", "fit per-user models and save a bundle");
  std::string train_data, train_out, emit_selection, emit_graph;
  double train_fraction = 0.7;
  ConfigFlags train_flags;
  train->add_option("--data", train_data, "usage log jsonl")->required();
  train->add_option("--out", train_out, "output directory for model.json")->required();
  train->add_option("--train-fraction", train_fraction,
                    "leading fraction of each trace used for training");
  train->add_option("--emit-selection", emit_selection,
                    "write per-round selection CSV here");
  train->add_option("--emit-graph", emit_graph, "write per-user graph JSON here");
  add_config_flags(train, train_flags);

  // predict
  auto* predict = app.add_subcommand("predict", "rank next apps for each event");
  std::string predict_model, predict_events;
  std::optional<int> predict_k;
  ConfigFlags predict_flags;
  predict->add_option("--model", predict_model, "directory holding model.json")
      ->required();
  predict->add_option("--events", predict_events, "query events jsonl")->required();
  predict->add_option("--k", predict_k, "prediction list length (defaults to top_k)");
  add_config_flags(predict, predict_flags);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score predictors on the test split");
  std::string eval_data, eval_out;
  std::vector<std::string> eval_predictors = {"kap", "mfu", "mru"};
  double eval_fraction = 0.7;
  bool eval_gnuplot = false;
  ConfigFlags eval_flags;
  evaluate->add_option("--data", eval_data, "usage log jsonl")->required();
  evaluate->add_option("--train-fraction", eval_fraction,
                       "leading fraction of each trace used for training");
  evaluate->add_option("--predictors", eval_predictors, "subset of kap,mfu,mru")
      ->delimiter(',');
  evaluate->add_option("--out", eval_out,
                       "report CSV path (omitted: CSV on stdout)");
  evaluate->add_flag("--gnuplot", eval_gnuplot, "space-separated columns");
  add_config_flags(evaluate, eval_flags);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "re-evaluate along one parameter axis");
  std::string sweep_data, sweep_axis, sweep_out;
  std::vector<double> sweep_values;
  std::vector<std::string> sweep_predictors = {"kap"};
  double sweep_fraction = 0.7;
  bool sweep_gnuplot = false;
  ConfigFlags sweep_flags;
  sweep->add_option("--data", sweep_data, "usage log jsonl")->required();
  sweep->add_option("--axis", sweep_axis,
                    "one of k, rho, min_tp, refine_iters, knn_fraction")
      ->required();
  sweep->add_option("--values", sweep_values, "comma-separated axis values")
      ->delimiter(',')
      ->required();
  sweep->add_option("--predictors", sweep_predictors, "subset of kap,mfu,mru")
      ->delimiter(',');
  sweep->add_option("--out", sweep_out, "report CSV path (omitted: CSV on stdout)");
  sweep->add_flag("--gnuplot", sweep_gnuplot, "space-separated columns");
  add_config_flags(sweep, sweep_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    uo::Config cfg = resolve_config(config_path, global_seed, gen_flags);
    uo::GeneratorSpec spec = uo::GeneratorSpec::from_file(gen_spec_path);
    uo::GenerationResult result = uo::generate(spec, cfg.rng_seed);
    uo::write_log(result.dataset, gen_out);
    std::int64_t events = 0;
    for (const uo::UserTrace& t : result.dataset.users)
      events += static_cast<std::int64_t>(t.events.size());
    std::cout << "wrote " << gen_out << ": " << result.dataset.users.size()
              << " users, " << result.dataset.apps.size() << " apps, " << events
              << " events\n";
    for (std::size_t i = 0; i < result.chain_stats.size(); ++i)
      std::cout << "chain " << i << ": " << result.chain_stats[i].completions << "/"
                << result.chain_stats[i].attempts << " transitions fired\n";
    return 0;
  }

  if (train->parsed()) {
    uo::Config cfg = resolve_config(config_path, global_seed, train_flags);
    uo::Dataset ds = uo::load_log(train_data);
    uo::split_dataset(ds, train_fraction);
    for (const uo::UserTrace& t : ds.users)
      if (t.excluded)
        std::cerr << "note: skipping " << t.user
                  << ": not enough events on both sides of the split\n";
    uo::ModelBundle bundle = uo::train_all(ds, cfg);
    if (bundle.users.empty())
      throw std::runtime_error("train: no user has enough events to train on");
    std::filesystem::create_directories(train_out);
    std::string model_path = train_out + "/model.json";
    uo::save_bundle(bundle, model_path);
    for (const uo::UserModel& m : bundle.users) {
      std::cout << m.user << ": selected " << m.selected.size() << "/"
                << m.candidate_count << " features:";
      for (const std::string& id : m.selected) std::cout << " " << id;
      std::cout << "\n";
    }
    std::cout << "saved " << model_path << " (" << bundle.users.size()
              << " users)\n";
    if (!emit_selection.empty()) {
      std::ofstream out = open_out(emit_selection);
      uo::write_selection_csv(bundle, out);
    }
    if (!emit_graph.empty()) {
      std::ofstream out = open_out(emit_graph);
      uo::write_graph_dump(bundle, out);
    }
    report_implicit_diagnostic();
    return 0;
  }

  if (predict->parsed()) {
    uo::ModelBundle bundle = uo::load_bundle(predict_model + "/model.json");
    // The bundle's config snapshot rules unless a file or flag replaces it.
    uo::Config cfg = bundle.config;
    if (!config_path.empty()) cfg = uo::Config::from_file(config_path);
    if (global_seed) cfg.rng_seed = *global_seed;
    {
      const ConfigFlags& f = predict_flags;
      if (f.top_k) cfg.top_k = *f.top_k;
      if (f.knn_fraction) cfg.knn_fraction = *f.knn_fraction;
      if (f.rho) cfg.rho = *f.rho;
      if (f.min_tp) cfg.min_tp = *f.min_tp;
      if (f.max_lookback) cfg.max_lookback = *f.max_lookback;
      if (f.refine_iters) cfg.refine_iters = *f.refine_iters;
      if (f.coverage_threshold) cfg.coverage_threshold = *f.coverage_threshold;
      if (f.seed) cfg.rng_seed = *f.seed;
      cfg.validate();
    }
    int k = predict_k.value_or(cfg.top_k);
    if (k < 1) throw std::runtime_error("predict: k must be >= 1");

    uo::Dataset ev = uo::load_log(predict_events, bundle.schema);
    RemappedEvents remapped = remap_onto_bundle(ev, bundle);
    std::map<std::string, std::size_t> model_index;
    for (std::size_t i = 0; i < bundle.users.size(); ++i)
      model_index[bundle.users[i].user] = i;

    std::ofstream dump;
    if (!debug_dump.empty()) dump = open_out(debug_dump);

    for (std::size_t u = 0; u < remapped.users.size(); ++u) {
      const auto& [user, events] = remapped.users[u];
      auto it = model_index.find(user);
      if (it == model_index.end()) {
        std::cerr << "note: no model for " << user << ", skipping\n";
        continue;
      }
      const uo::UserModel& m = bundle.users[it->second];
      for (std::size_t i = 0; i < events.size(); ++i) {
        std::span<const uo::UsageEvent> history(events.data(), i);
        const uo::UsageEvent& query = events[i];
        uo::PredictionList list =
            uo::kap_predict(m, bundle.schema, bundle.apps, cfg, history, query, k);
        nlohmann::json ranked = nlohmann::json::array();
        for (const uo::PredictionEntry& e : list)
          ranked.push_back({{"app", bundle.apps.name(e.app)}, {"score", e.score}});
        std::string truth = ev.apps.name(ev.users[u].events[i].app);
        nlohmann::json line = {
            {"ts", query.ts_min}, {"truth", truth}, {"ranked", std::move(ranked)}};
        std::cout << line.dump() << "\n";
        if (dump.is_open()) {
          std::vector<uo::UsageEvent> filtered =
              uo::filter_to_apps(history, m.app_kept);
          uo::TransitionMatrix tm = uo::build_transition_matrix(
              filtered, query.ts_min, m.graph, cfg.min_tp, cfg.max_lookback);
          nlohmann::json rows = nlohmann::json::array();
          for (uo::AppId r = 0; r < tm.n; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (uo::AppId c = 0; c < tm.n; ++c) row.push_back(tm.at(r, c));
            rows.push_back(std::move(row));
          }
          dump << nlohmann::json({{"user", user},
                                  {"ts", query.ts_min},
                                  {"matrix", std::move(rows)}})
                      .dump()
               << "\n";
        }
      }
    }
    report_implicit_diagnostic();
    return 0;
  }

  if (evaluate->parsed()) {
    uo::Config cfg = resolve_config(config_path, global_seed, eval_flags);
    uo::Dataset ds = uo::load_log(eval_data);
    uo::split_dataset(ds, eval_fraction);
    uo::EvalOptions opts;
    opts.predictors = eval_predictors;
    uo::EvalReport report = uo::run_evaluation(ds, cfg, opts);
    for (const std::string& note : report.notes) std::cerr << "note: " << note << "\n";
    if (eval_out.empty()) {
      uo::write_report_csv(report, std::cout, eval_gnuplot);
    } else {
      std::ofstream out = open_out(eval_out);
      uo::write_report_csv(report, out, eval_gnuplot);
      print_summary(report, cfg.top_k);
      std::cout << "wrote " << eval_out << "\n";
    }
    report_implicit_diagnostic();
    return 0;
  }

  if (sweep->parsed()) {
    uo::Config cfg = resolve_config(config_path, global_seed, sweep_flags);
    uo::Dataset ds = uo::load_log(sweep_data);
    uo::split_dataset(ds, sweep_fraction);
    uo::EvalOptions opts;
    opts.predictors = sweep_predictors;
    uo::EvalReport report = uo::run_sweep(ds, cfg, sweep_axis, sweep_values, opts);
    for (const std::string& note : report.notes) std::cerr << "note: " << note << "\n";
    if (sweep_out.empty()) {
      uo::write_report_csv(report, std::cout, sweep_gnuplot);
    } else {
      std::ofstream out = open_out(sweep_out);
      uo::write_report_csv(report, out, sweep_gnuplot);
      std::cout << "wrote " << sweep_out << "\n";
    }
    report_implicit_diagnostic();
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed json: " << e.what() << "\n";
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
