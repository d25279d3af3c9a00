#pragma once

// Implicit features: per-app probabilities of transiting (directly or through
// later intermediates) into a target app. Training-side values come from a
// suffix DP over the recent history; test-side values are refined iteratively
// against the transition matrix because the target is unknown.

#include <atomic>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "aug.hpp"
#include "core.hpp"

namespace usage_oracle {

using ImplicitFeature = std::vector<double>;

// Entries are sums over distinct paths and are not provably bounded by 1.
// They are deliberately not clamped; this counter records how often an entry
// exceeded 1 so the CLI can surface it as a diagnostic.
inline std::atomic<std::uint64_t>& if_entries_above_one() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

namespace detail {

// Earliest history index still inside the truncation window. Walking back
// from the target, the product of consecutive-hop edge probabilities must
// stay >= min_tp and the depth must stay <= max_lookback.
inline std::size_t window_start(std::span<const UsageEvent> history, AppId target,
                                double target_time, const Aug& aug, double min_tp,
                                int max_lookback) {
  std::size_t start = history.size();
  double acc = 1.0;
  AppId next_app = target;
  double next_time = target_time;
  for (int depth = 1; depth <= max_lookback && start > 0; ++depth) {
    const UsageEvent& e = history[start - 1];
    acc *= aug.edge_prob(e.app, next_app, next_time - e.ts_min);
    if (acc < min_tp) break;
    --start;
    next_app = e.app;
    next_time = e.ts_min;
  }
  return start;
}

inline void check_implicit_args(AppId target, const Aug& aug, double min_tp,
                                int max_lookback) {
  if (target < 0 || target >= aug.n_apps)
    throw std::invalid_argument("implicit feature: target app out of range");
  if (min_tp < 0.0) throw std::invalid_argument("implicit feature: negative min_tp");
  if (max_lookback < 0)
    throw std::invalid_argument("implicit feature: negative max_lookback");
}

}  // namespace detail

// Suffix DP: V(j) is the probability mass of all paths from history position
// j through any increasing subset of later positions into the target. Each
// position contributes V(j) to its app's entry.
inline ImplicitFeature implicit_for_training(std::span<const UsageEvent> history,
                                             AppId target, double target_time,
                                             const Aug& aug, double min_tp,
                                             int max_lookback) {
  detail::check_implicit_args(target, aug, min_tp, max_lookback);
  ImplicitFeature feat(static_cast<std::size_t>(aug.n_apps), 0.0);
  if (history.empty()) return feat;

  std::size_t n = history.size();
  std::size_t start =
      detail::window_start(history, target, target_time, aug, min_tp, max_lookback);
  if (start >= n) return feat;

  std::vector<double> v(n - start, 0.0);
  for (std::size_t j = n; j-- > start;) {
    const UsageEvent& e = history[j];
    double val = aug.edge_prob(e.app, target, target_time - e.ts_min);
    for (std::size_t m = j + 1; m < n; ++m)
      val += aug.edge_prob(e.app, history[m].app, history[m].ts_min - e.ts_min) *
             v[m - start];
    v[j - start] = val;
    if (e.app >= 0 && e.app < aug.n_apps)
      feat[static_cast<std::size_t>(e.app)] += val;
  }

  for (double x : feat)
    if (x > 1.0) if_entries_above_one().fetch_add(1, std::memory_order_relaxed);
  return feat;
}

namespace detail {

// Explicit path enumeration for the oracle: from `cur`, either hop straight
// to the target or extend through any later position. No memoization; every
// path's product is accumulated hop by hop from the front.
struct PathEnumerator {
  std::span<const UsageEvent> history;
  AppId target;
  double target_time;
  const Aug& aug;
  double sum = 0.0;

  void dfs(std::size_t cur, double acc) {
    const UsageEvent& e = history[cur];
    sum += acc * aug.edge_prob(e.app, target, target_time - e.ts_min);
    for (std::size_t m = cur + 1; m < history.size(); ++m)
      dfs(m, acc * aug.edge_prob(e.app, history[m].app,
                                 history[m].ts_min - e.ts_min));
  }
};

}  // namespace detail

// Test oracle: enumerates every forward path explicitly (exponential in the
// window length), applying the same truncation window as the DP.
inline ImplicitFeature brute_force_if(std::span<const UsageEvent> history,
                                      AppId target, double target_time,
                                      const Aug& aug, double min_tp,
                                      int max_lookback) {
  if (history.size() > 12)
    throw std::invalid_argument("brute_force_if: history longer than 12 events");
  detail::check_implicit_args(target, aug, min_tp, max_lookback);
  ImplicitFeature feat(static_cast<std::size_t>(aug.n_apps), 0.0);
  if (history.empty()) return feat;

  std::size_t n = history.size();
  std::size_t start =
      detail::window_start(history, target, target_time, aug, min_tp, max_lookback);
  for (std::size_t j = start; j < n; ++j) {
    detail::PathEnumerator pe{history.subspan(0, n), target, target_time, aug};
    pe.dfs(j, 1.0);
    AppId app = history[j].app;
    if (app >= 0 && app < aug.n_apps) feat[static_cast<std::size_t>(app)] += pe.sum;
  }
  return feat;
}

// n x n matrix whose column j is the implicit feature computed as if the next
// app were App_j. A row is all zero when that app never transitions anywhere.
struct TransitionMatrix {
  AppId n = 0;
  std::vector<double> cells;  // row-major

  double at(AppId row, AppId col) const {
    return cells[static_cast<std::size_t>(row) * static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(col)];
  }
  double& at(AppId row, AppId col) {
    return cells[static_cast<std::size_t>(row) * static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(col)];
  }
};

inline TransitionMatrix build_transition_matrix(std::span<const UsageEvent> history,
                                                double query_time, const Aug& aug,
                                                double min_tp, int max_lookback) {
  TransitionMatrix m;
  m.n = aug.n_apps;
  m.cells.assign(static_cast<std::size_t>(m.n) * static_cast<std::size_t>(m.n), 0.0);
  for (AppId j = 0; j < m.n; ++j) {
    ImplicitFeature col =
        implicit_for_training(history, j, query_time, aug, min_tp, max_lookback);
    for (AppId row = 0; row < m.n; ++row)
      m.at(row, j) = col[static_cast<std::size_t>(row)];
  }
  return m;
}

struct RefinementResult {
  ImplicitFeature if_t;       // final test-side implicit feature
  std::vector<double> theta;  // final next-app distribution
  int iterations = 0;
};

// Starts from a uniform theta and alternates IF_t = M theta with a fresh
// theta = M^T IF_t, normalizing theta each round (uniform reset if the sum
// collapses to 0). Runs at most refine_iters rounds, exiting early once the
// argmax of theta stops moving between consecutive rounds.
inline RefinementResult refine_testing_feature(const TransitionMatrix& m,
                                               int refine_iters) {
  if (refine_iters < 1)
    throw std::invalid_argument("refine_testing_feature: refine_iters must be >= 1");
  RefinementResult r;
  std::size_t n = static_cast<std::size_t>(m.n);
  r.if_t.assign(n, 0.0);
  r.theta.assign(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  if (n == 0) return r;

  AppId prev_argmax = -1;
  for (int it = 0; it < refine_iters; ++it) {
    for (AppId row = 0; row < m.n; ++row) {
      double s = 0.0;
      for (AppId col = 0; col < m.n; ++col)
        s += m.at(row, col) * r.theta[static_cast<std::size_t>(col)];
      r.if_t[static_cast<std::size_t>(row)] = s;
    }
    for (AppId col = 0; col < m.n; ++col) {
      double s = 0.0;
      for (AppId row = 0; row < m.n; ++row)
        s += r.if_t[static_cast<std::size_t>(row)] * m.at(row, col);
      r.theta[static_cast<std::size_t>(col)] = s;
    }
    double sum = 0.0;
    for (double t : r.theta) sum += t;
    if (sum <= 0.0) {
      r.theta.assign(n, 1.0 / static_cast<double>(n));
    } else {
      for (double& t : r.theta) t /= sum;
    }
    ++r.iterations;

    AppId argmax = 0;
    for (AppId i = 1; i < m.n; ++i)
      if (r.theta[static_cast<std::size_t>(i)] >
          r.theta[static_cast<std::size_t>(argmax)])
        argmax = i;
    if (argmax == prev_argmax) break;
    prev_argmax = argmax;
  }
  return r;
}

inline RefinementResult implicit_for_testing(std::span<const UsageEvent> history,
                                             double query_time, const Aug& aug,
                                             double min_tp, int max_lookback,
                                             int refine_iters) {
  return refine_testing_feature(
      build_transition_matrix(history, query_time, aug, min_tp, max_lookback),
      refine_iters);
}

}  // namespace usage_oracle
