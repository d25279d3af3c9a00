#pragma once

// Shared domain types: interned ids, events, traces, configuration, and the
// deterministic random source used by the synthetic generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace usage_oracle {

using AppId = std::int32_t;

// Dense string interning: same string <-> same id, ids assigned 0,1,2,... in
// first-seen order. Used for app names, user ids, and categorical symbols.
class InternTable {
 public:
  AppId intern(const std::string& name) {
    if (name.empty()) throw std::runtime_error("intern: empty name");
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    AppId id = static_cast<AppId>(names_.size());
    index_.emplace(name, id);
    names_.push_back(name);
    return id;
  }

  std::optional<AppId> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(AppId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= names_.size())
      throw std::invalid_argument("intern table: id out of range");
    return names_[static_cast<std::size_t>(id)];
  }

  AppId size() const { return static_cast<AppId>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, AppId> index_;
  std::vector<std::string> names_;
};

// A sensor reading is numeric, categorical (interned symbol), or missing.
// One feature keeps one kind across a dataset; Missing can appear anywhere.
struct SensorValue {
  enum class Kind : std::uint8_t { Missing, Numeric, Categorical };
  Kind kind = Kind::Missing;
  double num = 0.0;
  std::int32_t sym = -1;

  static SensorValue missing() { return {}; }
  static SensorValue numeric(double v) {
    SensorValue s;
    s.kind = Kind::Numeric;
    s.num = v;
    return s;
  }
  static SensorValue categorical(std::int32_t symbol) {
    SensorValue s;
    s.kind = Kind::Categorical;
    s.sym = symbol;
    return s;
  }
  bool is_missing() const { return kind == Kind::Missing; }
  bool operator==(const SensorValue&) const = default;
};

enum class FeatureKind : std::uint8_t { Numeric, Categorical };

// Ordered feature declaration shared by every event of a dataset. Sensor
// vectors are stored dense, aligned with this order.
struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;

  int index_of(std::string_view n) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == n) return static_cast<int>(i);
    return -1;
  }
  std::size_t size() const { return names.size(); }
  bool operator==(const FeatureSchema&) const = default;
};

struct UsageEvent {
  double ts_min = 0.0;  // minutes, real-valued
  AppId app = -1;
  std::vector<SensorValue> sensors;  // one slot per schema entry
};

struct UserTrace {
  std::string user;
  std::vector<UsageEvent> events;  // non-decreasing in ts_min
  std::size_t split_index = 0;     // first test event; set by split()
  bool excluded = false;           // too little data on either side of the split
};

struct Dataset {
  FeatureSchema schema;
  InternTable apps;
  InternTable symbols;  // categorical sensor values, shared across features
  std::vector<UserTrace> users;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(what + ": not a number: '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(what + ": not an integer: '" + s + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size() || s.find('-') != std::string::npos)
      throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(what + ": not an unsigned integer: '" + s + "'");
  }
}

}  // namespace detail

// Tunable knobs shared by the whole pipeline. Defaults match the documented
// operating point; validate() rejects out-of-range values naming the field.
struct Config {
  int top_k = 4;
  double knn_fraction = 0.40;
  double rho = 0.70;
  double min_tp = 0.001;
  int max_lookback = 5;
  int refine_iters = 3;
  double coverage_threshold = 0.75;
  std::uint64_t rng_seed = 0;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& range) {
      throw std::runtime_error("config: " + field + " out of range, expected " + range);
    };
    if (top_k < 1) fail("top_k", "a positive integer");
    if (!(knn_fraction > 0.0 && knn_fraction <= 1.0)) fail("knn_fraction", "(0,1]");
    if (!(rho > 0.0 && rho <= 1.0)) fail("rho", "(0,1]");
    if (!(min_tp > 0.0 && min_tp < 1.0)) fail("min_tp", "(0,1)");
    if (max_lookback < 1) fail("max_lookback", "a positive integer");
    if (refine_iters < 1) fail("refine_iters", "a positive integer");
    if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0))
      fail("coverage_threshold", "(0,1]");
  }

  void set(const std::string& key, const std::string& value) {
    if (key == "top_k")
      top_k = static_cast<int>(detail::parse_int(value, "config: top_k"));
    else if (key == "knn_fraction")
      knn_fraction = detail::parse_double(value, "config: knn_fraction");
    else if (key == "rho")
      rho = detail::parse_double(value, "config: rho");
    else if (key == "min_tp")
      min_tp = detail::parse_double(value, "config: min_tp");
    else if (key == "max_lookback")
      max_lookback = static_cast<int>(detail::parse_int(value, "config: max_lookback"));
    else if (key == "refine_iters")
      refine_iters = static_cast<int>(detail::parse_int(value, "config: refine_iters"));
    else if (key == "coverage_threshold")
      coverage_threshold = detail::parse_double(value, "config: coverage_threshold");
    else if (key == "rng_seed")
      rng_seed = detail::parse_uint(value, "config: rng_seed");
    else
      throw std::runtime_error("config: unknown key '" + key + "'");
  }

  // Flat key=value text; '#' starts a comment, blank lines ignored.
  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: line " + std::to_string(lineno) +
                                 ": expected key=value");
      c.set(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
    return c;
  }
};

// Deterministic random source. mt19937_64 is fully specified by the standard;
// the transforms below avoid std::*_distribution, whose output may differ
// between standard libraries and would break byte-identical generation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // Uniform in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0,n) via rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Inverse-CDF exponential sample with the given mean.
  double exponential(double mean) { return -mean * std::log(1.0 - uniform01()); }

  // Derive a stream-specific seed (splitmix64 finalizer); used to give each
  // synthetic user an independent deterministic sequence.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace usage_oracle
