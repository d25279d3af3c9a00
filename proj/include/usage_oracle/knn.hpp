#pragma once

// Exact kNN over the selected explicit+implicit feature space, plus the MFU
// and MRU baseline rankers. Votes are distance-weighted; ranked lists are
// padded by global training frequency and never contain apps absent from the
// training labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "core.hpp"

namespace usage_oracle {

struct Instance {
  std::vector<SensorValue> values;  // aligned with the selected feature ids
  AppId label = -1;                 // training only; -1 for queries
};

struct PredictionEntry {
  AppId app = -1;
  double score = 0.0;
};
using PredictionList = std::vector<PredictionEntry>;

// Min-max statistics per numeric dimension, learned on training data and
// applied unchanged to queries (clamped into [0,1]).
struct Normalizer {
  struct Dim {
    bool numeric = false;
    double lo = 0.0;
    double hi = 0.0;
  };
  std::vector<Dim> dims;

  SensorValue apply(const SensorValue& v, std::size_t d) const {
    const Dim& dim = dims[d];
    if (!dim.numeric || v.kind != SensorValue::Kind::Numeric) return v;
    if (dim.hi <= dim.lo) return SensorValue::numeric(0.0);
    double scaled = (v.num - dim.lo) / (dim.hi - dim.lo);
    return SensorValue::numeric(std::clamp(scaled, 0.0, 1.0));
  }

  Instance apply(const Instance& in) const {
    if (in.values.size() != dims.size())
      throw std::invalid_argument("normalizer: dimension count mismatch");
    Instance out = in;
    for (std::size_t d = 0; d < dims.size(); ++d)
      out.values[d] = apply(in.values[d], d);
    return out;
  }
};

inline std::pair<Normalizer, std::vector<Instance>> normalize(
    const std::vector<Instance>& train, const std::vector<FeatureKind>& kinds) {
  if (train.empty()) throw std::invalid_argument("normalize: empty training set");
  for (const Instance& inst : train)
    if (inst.values.size() != kinds.size())
      throw std::invalid_argument("normalize: instance arity mismatch");

  Normalizer nz;
  nz.dims.resize(kinds.size());
  for (std::size_t d = 0; d < kinds.size(); ++d) {
    Normalizer::Dim& dim = nz.dims[d];
    dim.numeric = kinds[d] == FeatureKind::Numeric;
    if (!dim.numeric) continue;
    bool seen = false;
    for (const Instance& inst : train) {
      const SensorValue& v = inst.values[d];
      if (v.kind != SensorValue::Kind::Numeric) continue;
      if (!seen) {
        dim.lo = dim.hi = v.num;
        seen = true;
      } else {
        dim.lo = std::min(dim.lo, v.num);
        dim.hi = std::max(dim.hi, v.num);
      }
    }
  }

  std::vector<Instance> scaled;
  scaled.reserve(train.size());
  for (const Instance& inst : train) scaled.push_back(nz.apply(inst));
  return {std::move(nz), std::move(scaled)};
}

// Euclidean over numeric dims, 0/1 over categorical dims; any Missing side
// contributes the per-dimension maximum of 1.
inline double distance(const Instance& a, const Instance& b) {
  if (a.values.size() != b.values.size())
    throw std::invalid_argument("distance: instances disagree on dimension count");
  double sum = 0.0;
  for (std::size_t d = 0; d < a.values.size(); ++d) {
    const SensorValue& x = a.values[d];
    const SensorValue& y = b.values[d];
    if (x.is_missing() || y.is_missing()) {
      sum += 1.0;
      continue;
    }
    if (x.kind != y.kind)
      throw std::invalid_argument("distance: mixed value kinds in one dimension");
    if (x.kind == SensorValue::Kind::Numeric) {
      double diff = x.num - y.num;
      sum += diff * diff;
    } else {
      sum += x.sym == y.sym ? 0.0 : 1.0;
    }
  }
  return std::sqrt(sum);
}

namespace detail {

// Ranks (app, count) pairs by count descending, smaller id on ties.
inline std::vector<std::pair<AppId, std::int64_t>> by_frequency(
    const std::map<AppId, std::int64_t>& counts) {
  std::vector<std::pair<AppId, std::int64_t>> order(counts.begin(), counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return order;
}

}  // namespace detail

inline PredictionList predict_knn(const std::vector<Instance>& train,
                                  const Instance& query, double knn_fraction,
                                  int top_k) {
  if (train.empty()) throw std::invalid_argument("predict_knn: empty training set");
  if (!(knn_fraction > 0.0 && knn_fraction <= 1.0))
    throw std::invalid_argument("predict_knn: knn_fraction outside (0,1]");
  if (top_k < 1) throw std::invalid_argument("predict_knn: top_k must be >= 1");

  std::size_t n = train.size();
  // The epsilon guards against 0.4 * 5 landing a hair above 2.0 in floats.
  std::size_t k_neighbors = static_cast<std::size_t>(std::max(
      1.0, std::ceil(knn_fraction * static_cast<double>(n) - 1e-9)));
  k_neighbors = std::min(k_neighbors, n);

  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = {distance(train[i], query), i};
  std::sort(dist.begin(), dist.end());  // ties fall to the earlier index

  std::map<AppId, std::int64_t> label_freq;
  for (const Instance& inst : train) ++label_freq[inst.label];

  std::map<AppId, double> votes;
  for (std::size_t i = 0; i < k_neighbors; ++i)
    votes[train[dist[i].second].label] += 1.0 / (dist[i].first + 1e-9);

  std::vector<std::pair<AppId, double>> ranked(votes.begin(), votes.end());
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    auto fa = label_freq.at(a.first), fb = label_freq.at(b.first);
    if (fa != fb) return fa > fb;
    return a.first < b.first;
  });

  std::size_t list_len = std::min<std::size_t>(static_cast<std::size_t>(top_k),
                                               label_freq.size());
  PredictionList out;
  for (const auto& [app, score] : ranked) {
    if (out.size() == list_len) break;
    out.push_back({app, score});
  }
  // Apps below K-neighbor coverage enter by global frequency with zero score.
  for (const auto& [app, freq] : detail::by_frequency(label_freq)) {
    if (out.size() == list_len) break;
    if (votes.count(app)) continue;
    out.push_back({app, 0.0});
  }
  return out;
}

inline PredictionList predict_mfu(std::span<const AppId> train_labels, int k) {
  if (train_labels.empty())
    throw std::invalid_argument("predict_mfu: empty training labels");
  if (k < 1) throw std::invalid_argument("predict_mfu: k must be >= 1");
  std::map<AppId, std::int64_t> counts;
  for (AppId a : train_labels) ++counts[a];
  std::size_t list_len = std::min<std::size_t>(static_cast<std::size_t>(k),
                                               counts.size());
  PredictionList out;
  for (const auto& [app, count] : detail::by_frequency(counts)) {
    if (out.size() == list_len) break;
    out.push_back({app, static_cast<double>(count)});
  }
  return out;
}

// Ranks training-known apps by recency of last use before the query; slots
// beyond the recently-used apps fall back to MFU order.
inline PredictionList predict_mru(std::span<const AppId> recent_apps,
                                  std::span<const AppId> train_labels, int k) {
  if (train_labels.empty())
    throw std::invalid_argument("predict_mru: empty training labels");
  if (k < 1) throw std::invalid_argument("predict_mru: k must be >= 1");
  std::map<AppId, std::int64_t> counts;
  for (AppId a : train_labels) ++counts[a];
  std::size_t list_len = std::min<std::size_t>(static_cast<std::size_t>(k),
                                               counts.size());

  PredictionList out;
  auto already = [&](AppId a) {
    for (const PredictionEntry& e : out)
      if (e.app == a) return true;
    return false;
  };
  for (std::size_t i = recent_apps.size(); i-- > 0 && out.size() < list_len;) {
    AppId a = recent_apps[i];
    if (!counts.count(a) || already(a)) continue;
    out.push_back({a, 1.0 / (1.0 + static_cast<double>(out.size()))});
  }
  for (const auto& [app, count] : detail::by_frequency(counts)) {
    if (out.size() == list_len) break;
    if (already(app)) continue;
    out.push_back({app, 1.0 / (1.0 + static_cast<double>(out.size()))});
  }
  return out;
}

}  // namespace usage_oracle
