#pragma once
// Per-user training pipeline and model persistence. Training builds the full
// usage graph, scores sensor and implicit candidate columns with the
// description-length selector, restricts the graph to the selected apps,
// recomputes implicit features against the restricted graph, and freezes
// normalized kNN instances. Bundles round-trip through versioned JSON.

#include <cstddef>
#include <cstdio>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "usage_oracle/aug.hpp"
#include "usage_oracle/core.hpp"
#include "usage_oracle/implicit.hpp"
#include "usage_oracle/ingest.hpp"
#include "usage_oracle/knn.hpp"
#include "usage_oracle/mdl_select.hpp"

namespace usage_oracle {

struct TrainOptions {
  bool select = true;  // false keeps every candidate column, for comparison runs
};

struct UserModel {
  std::string user;
  std::vector<std::string> selected;    // feature ids in pick order
  std::vector<SelectionRound> rounds;   // empty when selection was bypassed
  std::size_t candidate_count = 0;      // pool size selection chose from
  std::vector<char> app_kept;           // apps whose implicit dimension survived
  Aug graph;                            // rebuilt over kept apps only
  Normalizer normalizer;
  std::vector<Instance> instances;      // normalized training instances
  std::vector<AppId> train_labels;
};

struct ModelBundle {
  int schema_version = 1;
  Config config;
  FeatureSchema schema;
  InternTable apps;
  InternTable symbols;
  std::vector<UserModel> users;
};

namespace detail {

inline std::string implicit_feature_id(const std::string& app_name) {
  return "IF[" + app_name + "]";
}

struct FeatureRef {
  bool implicit = false;
  std::size_t sensor = 0;  // schema index when explicit
  AppId app = -1;          // app id when implicit
};

inline FeatureRef resolve_feature(const std::string& id, const FeatureSchema& schema,
                                  const InternTable& apps) {
  if (id.size() > 4 && id.rfind("IF[", 0) == 0 && id.back() == ']') {
    std::string app_name = id.substr(3, id.size() - 4);
    if (auto app = apps.find(app_name)) return {true, 0, *app};
    throw std::logic_error("model: implicit feature names unknown app: " + id);
  }
  int idx = schema.index_of(id);
  if (idx >= 0) return {false, static_cast<std::size_t>(idx), -1};
  throw std::logic_error("model: feature id matches no sensor or app: " + id);
}

inline std::vector<FeatureRef> resolve_features(const std::vector<std::string>& ids,
                                                const FeatureSchema& schema,
                                                const InternTable& apps) {
  std::vector<FeatureRef> refs;
  refs.reserve(ids.size());
  for (const std::string& id : ids) refs.push_back(resolve_feature(id, schema, apps));
  return refs;
}

inline std::vector<FeatureKind> feature_kinds(const std::vector<FeatureRef>& refs,
                                              const FeatureSchema& schema) {
  std::vector<FeatureKind> kinds;
  kinds.reserve(refs.size());
  for (const FeatureRef& r : refs)
    kinds.push_back(r.implicit ? FeatureKind::Numeric : schema.kinds[r.sensor]);
  return kinds;
}

// One implicit-feature vector per training event, each computed against the
// history strictly before that event, restricted to the kept apps.
inline std::vector<ImplicitFeature> training_implicit_vectors(
    std::span<const UsageEvent> train, const std::vector<char>& kept, const Aug& aug,
    const Config& config) {
  std::vector<ImplicitFeature> out;
  out.reserve(train.size());
  std::vector<UsageEvent> filtered;
  filtered.reserve(train.size());
  for (const UsageEvent& e : train) {
    out.push_back(implicit_for_training(filtered, e.app, e.ts_min, aug,
                                        config.min_tp, config.max_lookback));
    if (e.app >= 0 && static_cast<std::size_t>(e.app) < kept.size() &&
        kept[static_cast<std::size_t>(e.app)])
      filtered.push_back(e);
  }
  return out;
}

}  // namespace detail

inline UserModel train_user(const Dataset& ds, const UserTrace& trace,
                            const Config& config, const TrainOptions& opts = {}) {
  if (trace.excluded)
    throw std::invalid_argument("train_user: trace excluded by the split");
  std::span<const UsageEvent> train(trace.events.data(), trace.split_index);
  AppId n_apps = ds.apps.size();

  UserModel m;
  m.user = trace.user;

  // Candidate pool: every sensor column plus one implicit dimension per app
  // seen in this user's training split, both scored over the full graph.
  Aug full_graph = build_aug(train, n_apps, config.coverage_threshold);
  std::vector<char> present(static_cast<std::size_t>(n_apps), 0);
  for (const UsageEvent& e : train) present[static_cast<std::size_t>(e.app)] = 1;
  std::vector<ImplicitFeature> if_full =
      detail::training_implicit_vectors(train, present, full_graph, config);

  std::vector<FeatureColumn> candidates;
  for (std::size_t s = 0; s < ds.schema.size(); ++s) {
    FeatureColumn col;
    col.id = ds.schema.names[s];
    col.kind = ds.schema.kinds[s];
    col.values.reserve(train.size());
    for (const UsageEvent& e : train) col.values.push_back(e.sensors[s]);
    candidates.push_back(std::move(col));
  }
  for (AppId a = 0; a < n_apps; ++a) {
    if (!present[static_cast<std::size_t>(a)]) continue;
    FeatureColumn col;
    col.id = detail::implicit_feature_id(ds.apps.name(a));
    col.kind = FeatureKind::Numeric;
    col.values.reserve(train.size());
    for (const ImplicitFeature& f : if_full)
      col.values.push_back(SensorValue::numeric(f[static_cast<std::size_t>(a)]));
    candidates.push_back(std::move(col));
  }
  m.candidate_count = candidates.size();

  std::vector<AppId> labels;
  labels.reserve(train.size());
  for (const UsageEvent& e : train) labels.push_back(e.app);

  if (opts.select) {
    SelectionResult sel = select_features(candidates, labels, config.rho);
    m.selected = std::move(sel.picked);
    m.rounds = std::move(sel.rounds);
  } else {
    for (const FeatureColumn& c : candidates) m.selected.push_back(c.id);
  }

  std::vector<detail::FeatureRef> refs =
      detail::resolve_features(m.selected, ds.schema, ds.apps);
  m.app_kept.assign(static_cast<std::size_t>(n_apps), 0);
  for (const detail::FeatureRef& r : refs)
    if (r.implicit) m.app_kept[static_cast<std::size_t>(r.app)] = 1;

  // Only the selected apps build the graph the model carries; implicit values
  // are recomputed against it so training and prediction see the same world.
  m.graph = build_aug(filter_to_apps(train, m.app_kept), n_apps,
                      config.coverage_threshold);
  std::vector<ImplicitFeature> if_kept =
      detail::training_implicit_vectors(train, m.app_kept, m.graph, config);

  std::vector<Instance> raw;
  raw.reserve(train.size());
  for (std::size_t e = 0; e < train.size(); ++e) {
    Instance inst;
    inst.label = train[e].app;
    inst.values.reserve(refs.size());
    for (const detail::FeatureRef& r : refs)
      inst.values.push_back(r.implicit
                                ? SensorValue::numeric(
                                      if_kept[e][static_cast<std::size_t>(r.app)])
                                : train[e].sensors[r.sensor]);
    raw.push_back(std::move(inst));
  }

  auto [nz, scaled] = normalize(raw, detail::feature_kinds(refs, ds.schema));
  m.normalizer = std::move(nz);
  m.instances = std::move(scaled);
  m.train_labels = std::move(labels);
  return m;
}

inline ModelBundle train_all(const Dataset& ds, const Config& config,
                             const TrainOptions& opts = {}) {
  config.validate();
  ModelBundle b;
  b.config = config;
  b.schema = ds.schema;
  b.apps = ds.apps;
  b.symbols = ds.symbols;
  for (const UserTrace& t : ds.users)
    if (!t.excluded) b.users.push_back(train_user(ds, t, config, opts));
  return b;
}

// Ranked prediction for one query event given everything launched before it.
// The history is filtered to the model's kept apps, the refined implicit
// feature fills the implicit dimensions, and sensors come from the query.
inline PredictionList kap_predict(const UserModel& m, const FeatureSchema& schema,
                                  const InternTable& apps, const Config& config,
                                  std::span<const UsageEvent> history,
                                  const UsageEvent& query, int top_k) {
  std::vector<UsageEvent> filtered = filter_to_apps(history, m.app_kept);
  RefinementResult refined =
      implicit_for_testing(filtered, query.ts_min, m.graph, config.min_tp,
                           config.max_lookback, config.refine_iters);
  std::vector<detail::FeatureRef> refs =
      detail::resolve_features(m.selected, schema, apps);
  Instance q;
  q.values.reserve(refs.size());
  for (const detail::FeatureRef& r : refs)
    q.values.push_back(
        r.implicit
            ? SensorValue::numeric(refined.if_t[static_cast<std::size_t>(r.app)])
            : query.sensors[r.sensor]);
  return predict_knn(m.instances, m.normalizer.apply(q), config.knn_fraction, top_k);
}

// ---- bundle serialization ----

namespace detail {

inline nlohmann::json config_to_json(const Config& c) {
  return {{"top_k", c.top_k},
          {"knn_fraction", c.knn_fraction},
          {"rho", c.rho},
          {"min_tp", c.min_tp},
          {"max_lookback", c.max_lookback},
          {"refine_iters", c.refine_iters},
          {"coverage_threshold", c.coverage_threshold},
          {"rng_seed", c.rng_seed}};
}

inline Config config_from_json(const nlohmann::json& j) {
  Config c;
  c.top_k = j.at("top_k").get<int>();
  c.knn_fraction = j.at("knn_fraction").get<double>();
  c.rho = j.at("rho").get<double>();
  c.min_tp = j.at("min_tp").get<double>();
  c.max_lookback = j.at("max_lookback").get<int>();
  c.refine_iters = j.at("refine_iters").get<int>();
  c.coverage_threshold = j.at("coverage_threshold").get<double>();
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  c.validate();
  return c;
}

inline nlohmann::json graph_to_json(const Aug& g) {
  nlohmann::json edges = nlohmann::json::object();
  for (AppId src = 0; src < g.n_apps; ++src) {
    const auto& out = g.edges[static_cast<std::size_t>(src)];
    if (out.empty()) continue;
    nlohmann::json row = nlohmann::json::object();
    for (const auto& [dst, e] : out) {
      nlohmann::json hist = nlohmann::json::object();
      for (const auto& [bucket, count] : e.histogram)
        hist[std::to_string(bucket)] = count;
      row[std::to_string(dst)] = {{"weight", e.weight},
                                  {"alpha", e.alpha},
                                  {"beta", e.beta},
                                  {"total", e.total},
                                  {"histogram", std::move(hist)}};
    }
    edges[std::to_string(src)] = std::move(row);
  }
  return {{"n_apps", g.n_apps}, {"edges", std::move(edges)}};
}

inline Aug graph_from_json(const nlohmann::json& j) {
  Aug g;
  g.n_apps = j.at("n_apps").get<AppId>();
  if (g.n_apps < 0) throw std::runtime_error("bundle: negative app count");
  g.edges.resize(static_cast<std::size_t>(g.n_apps));
  for (const auto& [src_key, row] : j.at("edges").items()) {
    AppId src = static_cast<AppId>(parse_int(src_key, "bundle edge source"));
    if (src < 0 || src >= g.n_apps)
      throw std::runtime_error("bundle: edge source out of range");
    for (const auto& [dst_key, e] : row.items()) {
      AppId dst = static_cast<AppId>(parse_int(dst_key, "bundle edge target"));
      if (dst < 0 || dst >= g.n_apps)
        throw std::runtime_error("bundle: edge target out of range");
      EdgeModel em;
      em.weight = e.at("weight").get<double>();
      em.alpha = e.at("alpha").get<double>();
      em.beta = e.at("beta").get<double>();
      em.total = e.at("total").get<std::int64_t>();
      for (const auto& [bucket_key, count] : e.at("histogram").items())
        em.histogram[static_cast<int>(parse_int(bucket_key, "bundle histogram bucket"))] =
            count.get<std::int64_t>();
      g.edges[static_cast<std::size_t>(src)].emplace(dst, std::move(em));
    }
  }
  return g;
}

inline nlohmann::json sensor_value_to_json(const SensorValue& v,
                                           const InternTable& symbols) {
  switch (v.kind) {
    case SensorValue::Kind::Missing: return nullptr;
    case SensorValue::Kind::Numeric: return v.num;
    case SensorValue::Kind::Categorical: return symbols.name(v.sym);
  }
  throw std::logic_error("model: unhandled sensor value kind");
}

inline SensorValue sensor_value_from_json(const nlohmann::json& j,
                                          const InternTable& symbols) {
  if (j.is_null()) return SensorValue::missing();
  if (j.is_number()) return SensorValue::numeric(j.get<double>());
  if (j.is_string()) {
    if (auto sym = symbols.find(j.get<std::string>()))
      return SensorValue::categorical(*sym);
    throw std::runtime_error("bundle: instance references unknown symbol " +
                             j.get<std::string>());
  }
  throw std::runtime_error("bundle: instance value is neither null, number, nor string");
}

}  // namespace detail

inline nlohmann::json bundle_to_json(const ModelBundle& b) {
  nlohmann::json users = nlohmann::json::array();
  for (const UserModel& m : b.users) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const SelectionRound& r : m.rounds)
      rounds.push_back({{"feature", r.feature},
                        {"l_h", r.l_h},
                        {"l_d_given_h", r.l_d_given_h},
                        {"dl", r.dl},
                        {"removed", r.removed}});
    nlohmann::json dims = nlohmann::json::array();
    for (const Normalizer::Dim& d : m.normalizer.dims)
      dims.push_back({{"numeric", d.numeric}, {"lo", d.lo}, {"hi", d.hi}});
    nlohmann::json instances = nlohmann::json::array();
    for (const Instance& inst : m.instances) {
      nlohmann::json values = nlohmann::json::array();
      for (const SensorValue& v : inst.values)
        values.push_back(detail::sensor_value_to_json(v, b.symbols));
      instances.push_back(
          {{"v", std::move(values)}, {"label", b.apps.name(inst.label)}});
    }
    users.push_back({{"user", m.user},
                     {"selected", m.selected},
                     {"candidate_count", m.candidate_count},
                     {"rounds", std::move(rounds)},
                     {"graph", detail::graph_to_json(m.graph)},
                     {"normalizer", std::move(dims)},
                     {"instances", std::move(instances)}});
  }
  return {{"schema_version", b.schema_version},
          {"config", detail::config_to_json(b.config)},
          {"schema", schema_to_json(b.schema)},
          {"apps", b.apps.names()},
          {"symbols", b.symbols.names()},
          {"users", std::move(users)}};
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  try {
    ModelBundle b;
    b.schema_version = j.at("schema_version").get<int>();
    if (b.schema_version != 1)
      throw std::runtime_error("bundle: unsupported schema_version " +
                               std::to_string(b.schema_version));
    b.config = detail::config_from_json(j.at("config"));
    b.schema = schema_from_json(j.at("schema"), 0);
    for (const auto& name : j.at("apps")) b.apps.intern(name.get<std::string>());
    for (const auto& name : j.at("symbols")) b.symbols.intern(name.get<std::string>());
    for (const auto& ju : j.at("users")) {
      UserModel m;
      m.user = ju.at("user").get<std::string>();
      m.selected = ju.at("selected").get<std::vector<std::string>>();
      m.candidate_count = ju.at("candidate_count").get<std::size_t>();
      for (const auto& jr : ju.at("rounds")) {
        SelectionRound r;
        r.feature = jr.at("feature").get<std::string>();
        r.l_h = jr.at("l_h").get<double>();
        r.l_d_given_h = jr.at("l_d_given_h").get<double>();
        r.dl = jr.at("dl").get<double>();
        r.removed = jr.at("removed").get<std::size_t>();
        m.rounds.push_back(std::move(r));
      }
      m.graph = detail::graph_from_json(ju.at("graph"));
      for (const auto& jd : ju.at("normalizer")) {
        Normalizer::Dim d;
        d.numeric = jd.at("numeric").get<bool>();
        d.lo = jd.at("lo").get<double>();
        d.hi = jd.at("hi").get<double>();
        m.normalizer.dims.push_back(d);
      }
      for (const auto& ji : ju.at("instances")) {
        Instance inst;
        std::string label = ji.at("label").get<std::string>();
        auto app = b.apps.find(label);
        if (!app) throw std::runtime_error("bundle: instance labeled with unknown app " + label);
        inst.label = *app;
        for (const auto& jv : ji.at("v"))
          inst.values.push_back(detail::sensor_value_from_json(jv, b.symbols));
        m.train_labels.push_back(inst.label);
        m.instances.push_back(std::move(inst));
      }
      std::vector<detail::FeatureRef> refs =
          detail::resolve_features(m.selected, b.schema, b.apps);
      m.app_kept.assign(static_cast<std::size_t>(b.apps.size()), 0);
      for (const detail::FeatureRef& r : refs)
        if (r.implicit) m.app_kept[static_cast<std::size_t>(r.app)] = 1;
      b.users.push_back(std::move(m));
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("bundle: malformed json: ") + e.what());
  }
}

inline void save_bundle(const ModelBundle& b, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << bundle_to_json(b).dump(2) << "\n";
}

inline ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": malformed json: " + e.what());
  }
  return bundle_from_json(j);
}

// Ordered selection trace across all users, one row per round.
inline void write_selection_csv(const ModelBundle& b, std::ostream& out) {
  out << "user,round,feature,l_h,l_d_given_h,dl,removed_count\n";
  char buf[160];
  for (const UserModel& m : b.users) {
    int round = 1;
    for (const SelectionRound& r : m.rounds) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%s,%.6f,%.6f,%.6f,%zu\n",
                    m.user.c_str(), round, r.feature.c_str(), r.l_h, r.l_d_given_h,
                    r.dl, r.removed);
      out << buf;
      ++round;
    }
  }
}

inline void write_graph_dump(const ModelBundle& b, std::ostream& out) {
  nlohmann::json j = nlohmann::json::object();
  for (const UserModel& m : b.users) j[m.user] = detail::graph_to_json(m.graph);
  out << j.dump(2) << "\n";
}

}  // namespace usage_oracle
