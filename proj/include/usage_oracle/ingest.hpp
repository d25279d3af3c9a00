#pragma once

// JSONL usage logs. First line declares the schema:
//   {"schema": [["hour", "numeric"], ["wifi", "categorical"], ...]}
// Every following line is one event:
//   {"user": "u1", "ts_min": 12.5, "app": "Maps", "sensors": {...}}
// Sensor values are numbers, strings, or null (missing); keys absent from an
// event are treated as missing. Per-user traces are sorted by timestamp.

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"

namespace usage_oracle {

namespace detail {

inline std::runtime_error at_line(int lineno, const std::string& msg) {
  return std::runtime_error("line " + std::to_string(lineno) + ": " + msg);
}

}  // namespace detail

inline FeatureSchema schema_from_json(const nlohmann::json& j, int lineno) {
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_array())
    throw detail::at_line(lineno, "expected a {\"schema\": [...]} header");
  FeatureSchema schema;
  for (const nlohmann::json& entry : j["schema"]) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() ||
        !entry[1].is_string())
      throw detail::at_line(lineno, "schema entries must be [name, kind] pairs");
    std::string name = entry[0].get<std::string>();
    std::string kind = entry[1].get<std::string>();
    if (schema.index_of(name) >= 0)
      throw detail::at_line(lineno, "duplicate feature name '" + name + "'");
    if (kind == "numeric")
      schema.kinds.push_back(FeatureKind::Numeric);
    else if (kind == "categorical")
      schema.kinds.push_back(FeatureKind::Categorical);
    else
      throw detail::at_line(lineno, "unknown feature kind '" + kind + "'");
    schema.names.push_back(std::move(name));
  }
  return schema;
}

inline nlohmann::json schema_to_json(const FeatureSchema& schema) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < schema.size(); ++i)
    entries.push_back({schema.names[i],
                       schema.kinds[i] == FeatureKind::Numeric ? "numeric"
                                                               : "categorical"});
  return nlohmann::json{{"schema", entries}};
}

inline Dataset load_log(std::istream& in) {
  Dataset ds;
  std::string line;
  int lineno = 0;
  bool have_schema = false;
  std::unordered_map<std::string, std::size_t> trace_index;

  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(t);
    } catch (const nlohmann::json::exception& e) {
      throw detail::at_line(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!have_schema) {
      ds.schema = schema_from_json(j, lineno);
      have_schema = true;
      continue;
    }

    if (!j.is_object() || !j.contains("user") || !j.contains("ts_min") ||
        !j.contains("app"))
      throw detail::at_line(lineno, "event needs user, ts_min, and app");
    if (!j["user"].is_string()) throw detail::at_line(lineno, "user must be a string");
    if (!j["ts_min"].is_number())
      throw detail::at_line(lineno, "ts_min must be a number");
    if (!j["app"].is_string()) throw detail::at_line(lineno, "app must be a string");

    UsageEvent ev;
    ev.ts_min = j["ts_min"].get<double>();
    ev.app = ds.apps.intern(j["app"].get<std::string>());
    ev.sensors.assign(ds.schema.size(), SensorValue::missing());
    if (j.contains("sensors")) {
      if (!j["sensors"].is_object())
        throw detail::at_line(lineno, "sensors must be an object");
      for (const auto& [name, value] : j["sensors"].items()) {
        int idx = ds.schema.index_of(name);
        if (idx < 0)
          throw detail::at_line(lineno, "unknown sensor '" + name + "'");
        if (value.is_null()) continue;
        if (ds.schema.kinds[static_cast<std::size_t>(idx)] == FeatureKind::Numeric) {
          if (!value.is_number())
            throw detail::at_line(lineno, "sensor '" + name + "' expects a number");
          ev.sensors[static_cast<std::size_t>(idx)] =
              SensorValue::numeric(value.get<double>());
        } else {
          if (!value.is_string())
            throw detail::at_line(lineno, "sensor '" + name + "' expects a string");
          ev.sensors[static_cast<std::size_t>(idx)] = SensorValue::categorical(
              ds.symbols.intern(value.get<std::string>()));
        }
      }
    }

    std::string user = j["user"].get<std::string>();
    auto it = trace_index.find(user);
    if (it == trace_index.end()) {
      it = trace_index.emplace(user, ds.users.size()).first;
      ds.users.emplace_back();
      ds.users.back().user = user;
    }
    ds.users[it->second].events.push_back(std::move(ev));
  }
  if (!have_schema) throw std::runtime_error("log has no schema header line");

  for (UserTrace& trace : ds.users)
    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const UsageEvent& a, const UsageEvent& b) {
                       return a.ts_min < b.ts_min;
                     });
  return ds;
}

inline Dataset load_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log: " + path);
  try {
    return load_log(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

// Variant that insists on a specific schema (order, names, and kinds), used
// when queries must line up with a trained model.
inline Dataset load_log(const std::string& path, const FeatureSchema& expected) {
  Dataset ds = load_log(path);
  if (!(ds.schema == expected))
    throw std::runtime_error(path + ": schema does not match the trained model");
  return ds;
}

inline void write_log(const Dataset& ds, std::ostream& out) {
  out << schema_to_json(ds.schema).dump() << "\n";
  for (const UserTrace& trace : ds.users) {
    for (const UsageEvent& ev : trace.events) {
      nlohmann::json sensors = nlohmann::json::object();
      for (std::size_t i = 0; i < ds.schema.size(); ++i) {
        const SensorValue& v = ev.sensors[i];
        switch (v.kind) {
          case SensorValue::Kind::Missing:
            sensors[ds.schema.names[i]] = nullptr;
            break;
          case SensorValue::Kind::Numeric:
            sensors[ds.schema.names[i]] = v.num;
            break;
          case SensorValue::Kind::Categorical:
            sensors[ds.schema.names[i]] = ds.symbols.name(v.sym);
            break;
        }
      }
      nlohmann::json j{{"user", trace.user},
                       {"ts_min", ev.ts_min},
                       {"app", ds.apps.name(ev.app)},
                       {"sensors", sensors}};
      out << j.dump() << "\n";
    }
  }
}

inline void write_log(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write log: " + path);
  write_log(ds, out);
}

// Chronological split: the first floor(train_fraction * len) events of each
// user train, the rest test. Users without at least 2 training events and 1
// test event are flagged excluded rather than rejected.
inline void split_dataset(Dataset& ds, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction outside (0,1)");
  for (UserTrace& trace : ds.users) {
    trace.split_index = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(trace.events.size())));
    trace.excluded =
        trace.split_index < 2 || trace.split_index >= trace.events.size();
  }
}

}  // namespace usage_oracle
