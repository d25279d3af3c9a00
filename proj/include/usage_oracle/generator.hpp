#pragma once

// Synthetic trace generator. Structure is planted two ways: context rules
// bias which app gets opened given the current sensor readings, and planted
// chains force deterministic follow-up apps at exponential intervals unless
// a noise event interrupts. Noise events pick uniformly random apps.
//
// Fixed sensor schema: hour (numeric, 0-24), dow (numeric, 0-6), wifi
// (categorical dwell state), battery (numeric, pure noise).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"

namespace usage_oracle {

struct PlantedChain {
  std::vector<AppId> apps;  // first app starts the chain when opened
  double mean_interval_min = 1.0;
};

struct ContextRule {
  std::string feature;  // schema feature the predicate reads
  std::string equals;   // categorical match (wifi state name)
  double min = 0.0;     // numeric range match, [min, max)
  double max = 0.0;
  AppId app = 0;
  double boost = 0.0;
};

struct GeneratorSpec {
  int n_users = 1;
  int n_apps = 2;
  int n_events_per_user = 100;
  double noise_rate = 0.0;
  double idle_gap_mean_min = 45.0;
  double wifi_dwell_mean_min = 300.0;
  std::vector<PlantedChain> planted_chains;
  std::vector<ContextRule> context_rules;

  static FeatureSchema schema() {
    FeatureSchema s;
    s.names = {"hour", "dow", "wifi", "battery"};
    s.kinds = {FeatureKind::Numeric, FeatureKind::Numeric, FeatureKind::Categorical,
               FeatureKind::Numeric};
    return s;
  }

  void validate() const {
    if (n_users < 1 || n_apps < 1 || n_events_per_user < 1)
      throw std::runtime_error("generator spec: counts must be positive");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0))
      throw std::runtime_error("generator spec: noise_rate outside [0,1]");
    if (idle_gap_mean_min <= 0.0 || wifi_dwell_mean_min <= 0.0)
      throw std::runtime_error("generator spec: mean gaps must be positive");
    for (const PlantedChain& c : planted_chains) {
      if (c.apps.empty()) throw std::runtime_error("generator spec: empty chain");
      if (c.mean_interval_min <= 0.0)
        throw std::runtime_error("generator spec: chain interval must be positive");
      for (AppId a : c.apps)
        if (a < 0 || a >= n_apps)
          throw std::runtime_error("generator spec: chain app outside [0,n_apps)");
    }
    FeatureSchema s = schema();
    for (const ContextRule& r : context_rules) {
      int idx = s.index_of(r.feature);
      if (idx < 0)
        throw std::runtime_error("generator spec: rule on unknown feature '" +
                                 r.feature + "'");
      bool categorical = s.kinds[static_cast<std::size_t>(idx)] == FeatureKind::Categorical;
      if (categorical && r.equals.empty())
        throw std::runtime_error("generator spec: categorical rule needs 'equals'");
      if (!categorical && !(r.min <= r.max))
        throw std::runtime_error("generator spec: numeric rule needs min <= max");
      if (r.app < 0 || r.app >= n_apps)
        throw std::runtime_error("generator spec: rule app outside [0,n_apps)");
      if (r.boost < 0.0)
        throw std::runtime_error("generator spec: rule boost must be >= 0");
    }
  }

  static GeneratorSpec from_json(const nlohmann::json& j) {
    GeneratorSpec spec;
    auto grab = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    grab("n_users", spec.n_users);
    grab("n_apps", spec.n_apps);
    grab("n_events_per_user", spec.n_events_per_user);
    grab("noise_rate", spec.noise_rate);
    grab("idle_gap_mean_min", spec.idle_gap_mean_min);
    grab("wifi_dwell_mean_min", spec.wifi_dwell_mean_min);
    if (j.contains("planted_chains")) {
      for (const nlohmann::json& c : j.at("planted_chains")) {
        PlantedChain chain;
        for (const nlohmann::json& a : c.at("apps"))
          chain.apps.push_back(a.get<AppId>());
        chain.mean_interval_min = c.at("mean_interval_min").get<double>();
        spec.planted_chains.push_back(std::move(chain));
      }
    }
    if (j.contains("context_rules")) {
      for (const nlohmann::json& r : j.at("context_rules")) {
        ContextRule rule;
        rule.feature = r.at("feature").get<std::string>();
        if (r.contains("equals")) rule.equals = r.at("equals").get<std::string>();
        if (r.contains("min")) rule.min = r.at("min").get<double>();
        if (r.contains("max")) rule.max = r.at("max").get<double>();
        rule.app = r.at("app").get<AppId>();
        rule.boost = r.at("boost").get<double>();
        spec.context_rules.push_back(std::move(rule));
      }
    }
    spec.validate();
    return spec;
  }

  static GeneratorSpec from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open generator spec: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ": invalid JSON: " + e.what());
    }
    return from_json(j);
  }
};

struct ChainStats {
  std::int64_t attempts = 0;     // pending transitions with a following event
  std::int64_t completions = 0;  // transitions that actually fired
};

struct GenerationResult {
  Dataset dataset;
  std::vector<ChainStats> chain_stats;  // one per planted chain
};

namespace detail {

inline std::string padded_name(const char* prefix, int index, int count) {
  int width = 1;
  for (int c = count - 1; c >= 10; c /= 10) ++width;
  std::string digits = std::to_string(index);
  std::string pad(width > static_cast<int>(digits.size())
                      ? static_cast<std::size_t>(width) - digits.size()
                      : 0,
                  '0');
  return prefix + pad + digits;
}

}  // namespace detail

inline GenerationResult generate(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();
  GenerationResult result;
  Dataset& ds = result.dataset;
  ds.schema = GeneratorSpec::schema();
  result.chain_stats.assign(spec.planted_chains.size(), ChainStats{});

  for (int a = 0; a < spec.n_apps; ++a)
    ds.apps.intern(detail::padded_name("app", a, spec.n_apps));
  const std::vector<std::string> wifi_states{"home", "work", "cafe", "none"};
  std::vector<std::int32_t> wifi_syms;
  for (const std::string& s : wifi_states) wifi_syms.push_back(ds.symbols.intern(s));

  FeatureSchema schema = GeneratorSpec::schema();
  struct CompiledRule {
    int feature_idx;
    bool categorical;
    std::int32_t sym = -1;
    double min = 0.0, max = 0.0;
    AppId app;
    double boost;
  };
  std::vector<CompiledRule> rules;
  for (const ContextRule& r : spec.context_rules) {
    CompiledRule cr;
    cr.feature_idx = schema.index_of(r.feature);
    cr.categorical =
        schema.kinds[static_cast<std::size_t>(cr.feature_idx)] == FeatureKind::Categorical;
    if (cr.categorical) cr.sym = ds.symbols.intern(r.equals);
    cr.min = r.min;
    cr.max = r.max;
    cr.app = r.app;
    cr.boost = r.boost;
    rules.push_back(cr);
  }

  for (int u = 0; u < spec.n_users; ++u) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(u)));
    UserTrace trace;
    trace.user = detail::padded_name("user", u, spec.n_users);

    double ts = 0.0;
    std::size_t wifi_state = rng.below(wifi_states.size());
    double wifi_left = rng.exponential(spec.wifi_dwell_mean_min);
    int pending_chain = -1;
    std::size_t pending_pos = 0;

    for (int e = 0; e < spec.n_events_per_user; ++e) {
      bool continuing = pending_chain >= 0;
      double gap = rng.exponential(
          continuing ? spec.planted_chains[static_cast<std::size_t>(pending_chain)]
                           .mean_interval_min
                     : spec.idle_gap_mean_min);
      ts += gap;
      wifi_left -= gap;
      while (wifi_left < 0.0) {
        wifi_state = rng.below(wifi_states.size());
        wifi_left += rng.exponential(spec.wifi_dwell_mean_min);
      }

      UsageEvent ev;
      ev.ts_min = ts;
      ev.sensors.assign(schema.size(), SensorValue::missing());
      ev.sensors[0] = SensorValue::numeric(std::fmod(ts / 60.0, 24.0));
      ev.sensors[1] = SensorValue::numeric(
          std::fmod(std::floor(ts / 1440.0), 7.0));
      ev.sensors[2] = SensorValue::categorical(wifi_syms[wifi_state]);
      ev.sensors[3] = SensorValue::numeric(rng.uniform01());

      double roll = rng.uniform01();
      if (roll < spec.noise_rate) {
        ev.app = static_cast<AppId>(rng.below(static_cast<std::uint64_t>(spec.n_apps)));
        pending_chain = -1;  // noise interrupts any pending transition
      } else if (continuing) {
        const PlantedChain& chain =
            spec.planted_chains[static_cast<std::size_t>(pending_chain)];
        ev.app = chain.apps[pending_pos];
        ++result.chain_stats[static_cast<std::size_t>(pending_chain)].completions;
        ++pending_pos;
        if (pending_pos >= chain.apps.size()) pending_chain = -1;
      } else {
        // Context-weighted pick: base weight 1, plus the boost of every rule
        // matching the current sensor readings.
        std::vector<double> weights(static_cast<std::size_t>(spec.n_apps), 1.0);
        for (const CompiledRule& r : rules) {
          const SensorValue& v = ev.sensors[static_cast<std::size_t>(r.feature_idx)];
          bool match = r.categorical
                           ? (v.kind == SensorValue::Kind::Categorical && v.sym == r.sym)
                           : (v.kind == SensorValue::Kind::Numeric && v.num >= r.min &&
                              v.num < r.max);
          if (match) weights[static_cast<std::size_t>(r.app)] += r.boost;
        }
        double total = 0.0;
        for (double w : weights) total += w;
        double x = rng.uniform01() * total;
        AppId picked = static_cast<AppId>(spec.n_apps - 1);
        for (AppId a = 0; a < spec.n_apps; ++a) {
          x -= weights[static_cast<std::size_t>(a)];
          if (x < 0.0) {
            picked = a;
            break;
          }
        }
        ev.app = picked;
        for (std::size_t c = 0; c < spec.planted_chains.size(); ++c) {
          const PlantedChain& chain = spec.planted_chains[c];
          if (chain.apps.size() >= 2 && chain.apps[0] == picked) {
            pending_chain = static_cast<int>(c);
            pending_pos = 1;
            break;
          }
        }
      }

      // A transition is attempted whenever a chain is pending and another
      // event will follow; the next roll decides whether it completes.
      if (pending_chain >= 0 && e + 1 < spec.n_events_per_user)
        ++result.chain_stats[static_cast<std::size_t>(pending_chain)].attempts;

      trace.events.push_back(std::move(ev));
    }
    ds.users.push_back(std::move(trace));
  }
  return result;
}

}  // namespace usage_oracle
