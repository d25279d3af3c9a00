#pragma once

// Apps Usage Graph: one directed graph per user. Every consecutive launch
// pair (a at t1, b at t2) contributes an interval observation to edge a->b;
// each edge carries a transition weight and a fitted exponential model over
// integer interval buckets [x, x+1) minutes.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "core.hpp"

namespace usage_oracle {

struct EdgeModel {
  double alpha = 0.0;   // empirical bucket-0 probability
  double beta = 0.0;    // decay rate of alpha * e^(-beta * bucket)
  double weight = 0.0;  // fraction of the source app's out-transitions
  std::map<int, std::int64_t> histogram;  // bucket -> observation count
  std::int64_t total = 0;
};

struct Aug {
  AppId n_apps = 0;
  std::vector<std::map<AppId, EdgeModel>> edges;  // indexed by source app

  const EdgeModel* edge(AppId src, AppId dst) const {
    if (src < 0 || src >= n_apps) return nullptr;
    const auto& adj = edges[static_cast<std::size_t>(src)];
    auto it = adj.find(dst);
    return it == adj.end() ? nullptr : &it->second;
  }

  // weight * alpha * e^(-beta * floor(interval)); 0 when the edge is absent.
  double edge_prob(AppId src, AppId dst, double interval_min) const {
    if (interval_min < 0.0)
      throw std::invalid_argument("edge_prob: negative interval");
    const EdgeModel* e = edge(src, dst);
    if (e == nullptr) return 0.0;
    return e->weight * e->alpha * std::exp(-e->beta * std::floor(interval_min));
  }
};

namespace detail {

constexpr int kBetaGridPoints = 1000;
constexpr double kBetaMin = 1e-4;
constexpr double kBetaMax = 10.0;

inline double beta_grid_point(int i) {
  double t = static_cast<double>(i) / (kBetaGridPoints - 1);
  return std::exp(std::log(kBetaMin) + t * (std::log(kBetaMax) - std::log(kBetaMin)));
}

// L1 error of alpha * e^(-beta i) against p(i) over buckets 0..m_incl.
inline double fit_objective(const std::vector<double>& p, int m_incl,
                            double alpha, double beta) {
  double s = 0.0;
  for (int i = 0; i <= m_incl; ++i)
    s += std::abs(alpha * std::exp(-beta * i) - p[static_cast<std::size_t>(i)]);
  return s;
}

}  // namespace detail

// Normalizes the histogram, includes buckets 0,1,2,... until their cumulative
// probability reaches coverage_threshold, then fits beta by minimizing the L1
// error on the included buckets: a log-spaced grid scan over [1e-4, 10]
// followed by golden-section refinement between the flanking grid points.
// Ties keep the smallest beta; the refined value is only taken when strictly
// better than the grid winner.
inline std::pair<double, double> fit_exponential(
    const std::map<int, std::int64_t>& histogram, double coverage_threshold) {
  std::int64_t total = 0;
  int max_bucket = 0;
  for (const auto& [bucket, count] : histogram) {
    if (bucket < 0) throw std::invalid_argument("fit_exponential: negative bucket");
    if (count < 0) throw std::invalid_argument("fit_exponential: negative count");
    total += count;
    max_bucket = std::max(max_bucket, bucket);
  }
  if (total <= 0) throw std::invalid_argument("fit_exponential: empty histogram");

  std::vector<double> p(static_cast<std::size_t>(max_bucket) + 1, 0.0);
  for (const auto& [bucket, count] : histogram)
    p[static_cast<std::size_t>(bucket)] =
        static_cast<double>(count) / static_cast<double>(total);

  int m_incl = max_bucket;
  double cum = 0.0;
  for (int i = 0; i <= max_bucket; ++i) {
    cum += p[static_cast<std::size_t>(i)];
    if (cum >= coverage_threshold) {
      m_incl = i;
      break;
    }
  }

  double alpha = p[0];
  double best_beta = detail::kBetaMin;
  double best_obj = std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (int i = 0; i < detail::kBetaGridPoints; ++i) {
    double beta = detail::beta_grid_point(i);
    double obj = detail::fit_objective(p, m_incl, alpha, beta);
    if (obj < best_obj) {
      best_obj = obj;
      best_beta = beta;
      best_i = i;
    }
  }

  double a = detail::beta_grid_point(std::max(0, best_i - 1));
  double b = detail::beta_grid_point(std::min(detail::kBetaGridPoints - 1, best_i + 1));
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = detail::fit_objective(p, m_incl, alpha, c);
  double fd = detail::fit_objective(p, m_incl, alpha, d);
  for (int iter = 0; iter < 200 && (b - a) > 1e-13; ++iter) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = detail::fit_objective(p, m_incl, alpha, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = detail::fit_objective(p, m_incl, alpha, d);
    }
  }
  double mid = 0.5 * (a + b);
  if (detail::fit_objective(p, m_incl, alpha, mid) < best_obj) best_beta = mid;

  return {alpha, best_beta};
}

// Builds the graph from one user's time-sorted events. Fewer than two events
// yield an empty graph. App ids must lie in [0, n_apps).
inline Aug build_aug(std::span<const UsageEvent> events, AppId n_apps,
                     double coverage_threshold) {
  if (n_apps < 0) throw std::invalid_argument("build_aug: negative n_apps");
  Aug g;
  g.n_apps = n_apps;
  g.edges.resize(static_cast<std::size_t>(n_apps));

  std::vector<std::int64_t> out_total(static_cast<std::size_t>(n_apps), 0);
  for (std::size_t i = 0; i + 1 < events.size(); ++i) {
    const UsageEvent& a = events[i];
    const UsageEvent& b = events[i + 1];
    if (a.app < 0 || a.app >= n_apps || b.app < 0 || b.app >= n_apps)
      throw std::invalid_argument("build_aug: app id out of range");
    double dt = b.ts_min - a.ts_min;
    if (dt < 0.0) throw std::invalid_argument("build_aug: events not time-sorted");
    int bucket = static_cast<int>(std::floor(std::min(dt, 2.0e9)));
    EdgeModel& e = g.edges[static_cast<std::size_t>(a.app)][b.app];
    ++e.histogram[bucket];
    ++e.total;
    ++out_total[static_cast<std::size_t>(a.app)];
  }

  for (AppId src = 0; src < n_apps; ++src) {
    for (auto& [dst, e] : g.edges[static_cast<std::size_t>(src)]) {
      e.weight = static_cast<double>(e.total) /
                 static_cast<double>(out_total[static_cast<std::size_t>(src)]);
      std::tie(e.alpha, e.beta) = fit_exponential(e.histogram, coverage_threshold);
    }
  }
  return g;
}

// Keeps only events whose app is flagged in `keep`; used to rebuild a
// restricted graph after feature selection, where consecutive pairs are taken
// over the surviving events.
inline std::vector<UsageEvent> filter_to_apps(std::span<const UsageEvent> events,
                                              const std::vector<char>& keep) {
  std::vector<UsageEvent> out;
  for (const UsageEvent& e : events)
    if (e.app >= 0 && static_cast<std::size_t>(e.app) < keep.size() &&
        keep[static_cast<std::size_t>(e.app)])
      out.push_back(e);
  return out;
}

}  // namespace usage_oracle
