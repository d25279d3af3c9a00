#pragma once

// Personalized feature selection. Each candidate feature projects the
// training points onto bins; the description length of that grouping is
// L(H) = sum_i log2(NG(App_i)) plus L(D|H) = sum_i log2(miss(App_i) + 1).
// Greedy rounds pick the minimum-DL feature and remove the points its
// per-bin majority classifies correctly, until a fraction rho is removed.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace usage_oracle {

struct FeatureColumn {
  std::string id;  // sensor name or implicit dimension like "IF[Maps]"
  FeatureKind kind = FeatureKind::Numeric;
  std::vector<SensorValue> values;  // one per training instance
};

struct GroupingHypothesis {
  bool categorical = false;
  // Numeric projection: value_bins equal-width bins over [lo, hi].
  double lo = 0.0;
  double hi = 0.0;
  int value_bins = 0;
  // Categorical projection: sorted distinct symbols, one bin each.
  std::vector<std::int32_t> symbols;
  // Missing readings occupy a dedicated extra bin after the value bins.
  bool has_missing_bin = false;

  std::vector<AppId> per_bin_majority;  // -1 for empty bins
  std::map<AppId, int> ng;              // group count per app
  std::map<AppId, int> miss;            // points in bins with a foreign majority
  double l_h = 0.0;
  double l_d_given_h = 0.0;
  double dl = 0.0;

  int total_bins() const {
    int base = categorical ? static_cast<int>(symbols.size()) : value_bins;
    return base + (has_missing_bin ? 1 : 0);
  }

  // Bin index for a value, -1 when the value cannot be placed (unseen
  // categorical symbol, or Missing without a missing bin).
  int bin_of(const SensorValue& v) const {
    int base = categorical ? static_cast<int>(symbols.size()) : value_bins;
    if (v.is_missing()) return has_missing_bin ? base : -1;
    if (categorical) {
      auto it = std::lower_bound(symbols.begin(), symbols.end(), v.sym);
      if (it == symbols.end() || *it != v.sym) return -1;
      return static_cast<int>(it - symbols.begin());
    }
    if (value_bins <= 0) return -1;
    if (value_bins == 1 || hi <= lo) return 0;
    double width = (hi - lo) / value_bins;
    int idx = static_cast<int>(std::floor((v.num - lo) / width));
    return std::clamp(idx, 0, value_bins - 1);
  }
};

namespace detail {

// Smallest k with 2^k >= n; integer-exact replacement for ceil(log2 n).
inline int ceil_log2(std::size_t n) {
  if (n <= 1) return 0;
  return static_cast<int>(std::bit_width(n - 1));
}

}  // namespace detail

inline GroupingHypothesis hypothesize(const FeatureColumn& column,
                                      std::span<const AppId> labels) {
  std::size_t n = labels.size();
  if (n == 0) throw std::invalid_argument("hypothesize: empty working set");
  if (column.values.size() != n)
    throw std::invalid_argument("hypothesize: column/label length mismatch");

  GroupingHypothesis h;
  h.categorical = column.kind == FeatureKind::Categorical;

  bool any_missing = false;
  if (h.categorical) {
    for (const SensorValue& v : column.values) {
      if (v.is_missing()) {
        any_missing = true;
      } else {
        if (v.kind != SensorValue::Kind::Categorical)
          throw std::invalid_argument("hypothesize: numeric value in categorical column");
        h.symbols.push_back(v.sym);
      }
    }
    std::sort(h.symbols.begin(), h.symbols.end());
    h.symbols.erase(std::unique(h.symbols.begin(), h.symbols.end()), h.symbols.end());
  } else {
    bool any_value = false;
    for (const SensorValue& v : column.values) {
      if (v.is_missing()) {
        any_missing = true;
        continue;
      }
      if (v.kind != SensorValue::Kind::Numeric)
        throw std::invalid_argument("hypothesize: categorical value in numeric column");
      if (!any_value) {
        h.lo = h.hi = v.num;
        any_value = true;
      } else {
        h.lo = std::min(h.lo, v.num);
        h.hi = std::max(h.hi, v.num);
      }
    }
    if (any_value)
      h.value_bins = h.hi > h.lo ? std::max(1, detail::ceil_log2(n) + 1) : 1;
  }
  h.has_missing_bin = any_missing;

  int bins = h.total_bins();
  std::vector<std::map<AppId, int>> bin_counts(static_cast<std::size_t>(bins));
  std::map<AppId, int> label_freq;
  for (std::size_t i = 0; i < n; ++i) {
    int b = h.bin_of(column.values[i]);
    if (b < 0) throw std::logic_error("hypothesize: unplaceable working-set value");
    ++bin_counts[static_cast<std::size_t>(b)][labels[i]];
    ++label_freq[labels[i]];
  }

  // Majority per bin: most points, then higher working-set frequency, then
  // smaller app id (map order already gives the smallest id first).
  h.per_bin_majority.assign(static_cast<std::size_t>(bins), -1);
  for (int b = 0; b < bins; ++b) {
    AppId best = -1;
    int best_count = 0;
    for (const auto& [app, count] : bin_counts[static_cast<std::size_t>(b)]) {
      bool wins = count > best_count ||
                  (count == best_count && best >= 0 &&
                   label_freq[app] > label_freq[best]);
      if (best < 0 || wins) {
        best = app;
        best_count = count;
      }
    }
    h.per_bin_majority[static_cast<std::size_t>(b)] = best;
  }

  // Group counts: maximal runs of consecutive occupied value bins for numeric
  // features, one group per occupied value for categorical ones; the missing
  // bin is never adjacent to anything.
  int value_bin_count = bins - (h.has_missing_bin ? 1 : 0);
  for (const auto& [app, freq] : label_freq) {
    int groups = 0;
    if (h.categorical) {
      for (int b = 0; b < value_bin_count; ++b)
        if (bin_counts[static_cast<std::size_t>(b)].count(app)) ++groups;
    } else {
      bool in_run = false;
      for (int b = 0; b < value_bin_count; ++b) {
        bool occupied = bin_counts[static_cast<std::size_t>(b)].count(app) > 0;
        if (occupied && !in_run) ++groups;
        in_run = occupied;
      }
    }
    if (h.has_missing_bin &&
        bin_counts[static_cast<std::size_t>(bins - 1)].count(app))
      ++groups;
    h.ng[app] = groups;

    int missed = 0;
    for (int b = 0; b < bins; ++b) {
      auto it = bin_counts[static_cast<std::size_t>(b)].find(app);
      if (it != bin_counts[static_cast<std::size_t>(b)].end() &&
          h.per_bin_majority[static_cast<std::size_t>(b)] != app)
        missed += it->second;
    }
    h.miss[app] = missed;
  }

  for (const auto& [app, groups] : h.ng) h.l_h += std::log2(static_cast<double>(groups));
  for (const auto& [app, missed] : h.miss)
    h.l_d_given_h += std::log2(static_cast<double>(missed) + 1.0);
  h.dl = h.l_h + h.l_d_given_h;
  return h;
}

struct SelectionRound {
  std::string feature;
  double l_h = 0.0;
  double l_d_given_h = 0.0;
  double dl = 0.0;
  std::size_t removed = 0;
};

struct SelectionResult {
  std::vector<std::string> picked;  // feature ids in pick order
  std::vector<SelectionRound> rounds;
};

// Greedy rounds over the candidate pool. Ties on DL fall to fewer total bins,
// then to the lexicographically smaller feature id. Picked features leave the
// pool; selection stops once the removed fraction reaches rho, the pool is
// empty, or a round removes nothing.
inline SelectionResult select_features(const std::vector<FeatureColumn>& candidates,
                                       std::span<const AppId> labels, double rho) {
  if (candidates.empty())
    throw std::invalid_argument("select_features: no candidate features");
  if (!(rho > 0.0 && rho <= 1.0))
    throw std::invalid_argument("select_features: rho outside (0,1]");
  std::size_t n = labels.size();
  if (n == 0) throw std::invalid_argument("select_features: empty training set");
  for (const FeatureColumn& c : candidates)
    if (c.values.size() != n)
      throw std::invalid_argument("select_features: column length mismatch: " + c.id);

  std::vector<std::size_t> working(n);
  for (std::size_t i = 0; i < n; ++i) working[i] = i;
  std::vector<char> available(candidates.size(), 1);

  SelectionResult result;
  std::size_t removed_total = 0;
  while (!working.empty()) {
    std::vector<AppId> sub_labels;
    sub_labels.reserve(working.size());
    for (std::size_t idx : working) sub_labels.push_back(labels[idx]);

    int best = -1;
    GroupingHypothesis best_h;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (!available[c]) continue;
      FeatureColumn sub;
      sub.id = candidates[c].id;
      sub.kind = candidates[c].kind;
      sub.values.reserve(working.size());
      for (std::size_t idx : working) sub.values.push_back(candidates[c].values[idx]);
      GroupingHypothesis h = hypothesize(sub, sub_labels);
      bool wins =
          best < 0 || h.dl < best_h.dl ||
          (h.dl == best_h.dl &&
           (h.total_bins() < best_h.total_bins() ||
            (h.total_bins() == best_h.total_bins() &&
             candidates[c].id < candidates[static_cast<std::size_t>(best)].id)));
      if (wins) {
        best = static_cast<int>(c);
        best_h = std::move(h);
      }
    }
    if (best < 0) break;  // pool exhausted
    available[static_cast<std::size_t>(best)] = 0;
    const FeatureColumn& picked = candidates[static_cast<std::size_t>(best)];

    std::vector<std::size_t> kept;
    std::size_t removed = 0;
    for (std::size_t idx : working) {
      int b = best_h.bin_of(picked.values[idx]);
      bool correct = b >= 0 && best_h.per_bin_majority[static_cast<std::size_t>(b)] ==
                                   labels[idx];
      if (correct)
        ++removed;
      else
        kept.push_back(idx);
    }
    removed_total += removed;
    working = std::move(kept);

    result.picked.push_back(picked.id);
    result.rounds.push_back(
        {picked.id, best_h.l_h, best_h.l_d_given_h, best_h.dl, removed});

    if (removed == 0) break;
    if (static_cast<double>(removed_total) >=
        rho * static_cast<double>(n) - 1e-9)
      break;
    bool any_left = false;
    for (char a : available) any_left |= (a != 0);
    if (!any_left) break;
  }
  return result;
}

}  // namespace usage_oracle
