#pragma once
// Test-split evaluation: average recall and nDCG per user and overall, MFU and
// MRU baselines beside the graph-backed predictor, cohort breakdowns by app
// count, usage volume, and usage entropy, and single-axis parameter sweeps.
// Reports flatten to CSV rows: scope, cohort, predictor, k, recall, ndcg,
// n_cases.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "usage_oracle/core.hpp"
#include "usage_oracle/knn.hpp"
#include "usage_oracle/model.hpp"

namespace usage_oracle {

struct EvalCase {
  AppId truth = -1;
  PredictionList list;
};

inline double recall(std::span<const EvalCase> cases) {
  if (cases.empty()) throw std::invalid_argument("recall: no cases");
  std::int64_t hits = 0;
  for (const EvalCase& c : cases)
    for (const PredictionEntry& e : c.list)
      if (e.app == c.truth) {
        ++hits;
        break;
      }
  return static_cast<double>(hits) / static_cast<double>(cases.size());
}

inline double ndcg(std::span<const EvalCase> cases) {
  if (cases.empty()) throw std::invalid_argument("ndcg: no cases");
  double sum = 0.0;
  for (const EvalCase& c : cases)
    for (std::size_t i = 0; i < c.list.size(); ++i)
      if (c.list[i].app == c.truth) {
        sum += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        break;
      }
  return sum / static_cast<double>(cases.size());
}

inline double usage_entropy(std::span<const AppId> labels) {
  if (labels.empty()) throw std::invalid_argument("usage_entropy: no labels");
  std::map<AppId, std::int64_t> counts;
  for (AppId a : labels) ++counts[a];
  double h = 0.0;
  for (const auto& [app, count] : counts) {
    double p = static_cast<double>(count) / static_cast<double>(labels.size());
    h -= p * std::log2(p);
  }
  return h;
}

inline double top_k_frequency(std::span<const AppId> labels, int k) {
  if (labels.empty()) throw std::invalid_argument("top_k_frequency: no labels");
  if (k < 1) throw std::invalid_argument("top_k_frequency: k must be >= 1");
  std::map<AppId, std::int64_t> counts;
  for (AppId a : labels) ++counts[a];
  std::vector<std::int64_t> sorted;
  sorted.reserve(counts.size());
  for (const auto& [app, count] : counts) sorted.push_back(count);
  std::sort(sorted.rbegin(), sorted.rend());
  std::int64_t top = 0;
  for (std::size_t i = 0; i < sorted.size() && i < static_cast<std::size_t>(k); ++i)
    top += sorted[i];
  return static_cast<double>(top) / static_cast<double>(labels.size());
}

struct MetricCell {
  double recall = 0.0;
  double ndcg = 0.0;
  std::int64_t n_cases = 0;
};

struct ReportRow {
  std::string scope;
  std::string cohort;
  std::string predictor;
  int k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::int64_t n_cases = 0;
};

struct EvalOptions {
  std::vector<std::string> predictors = {"kap", "mfu", "mru"};
  std::vector<int> apps_cohort_edges = {5, 10, 20, 30};
  double entropy_step_bits = 0.5;
  TrainOptions train;
};

struct SweepRow {
  double value = 0.0;
  std::string predictor;
  MetricCell cell;
};

struct EvalReport {
  std::vector<std::string> predictors;
  std::map<std::string, std::map<std::string, MetricCell>> per_user;  // predictor -> user
  std::map<std::string, MetricCell> aggregate;  // unweighted mean over users
  std::vector<ReportRow> rows;
  std::vector<SweepRow> sweep;
  std::vector<std::string> notes;
};

namespace detail {

inline std::vector<std::string> checked_predictors(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  for (const std::string& p : in) {
    if (p != "kap" && p != "mfu" && p != "mru")
      throw std::runtime_error("unknown predictor: " + p);
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  if (out.empty()) throw std::runtime_error("no predictors requested");
  return out;
}

// Returns (bucket order index, label) so cohorts sort numerically.
inline std::pair<int, std::string> apps_cohort_bucket(int distinct,
                                                      const std::vector<int>& edges) {
  if (edges.empty()) return {0, "apps_all"};
  if (distinct < edges.front()) return {0, "apps<" + std::to_string(edges.front())};
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    if (distinct < edges[i + 1])
      return {static_cast<int>(i) + 1, "apps[" + std::to_string(edges[i]) + "-" +
                                           std::to_string(edges[i + 1]) + ")"};
  return {static_cast<int>(edges.size()), "apps>=" + std::to_string(edges.back())};
}

inline std::pair<int, std::string> entropy_cohort_bucket(double entropy, double step) {
  int index = static_cast<int>(std::floor(entropy / step));
  double lo = index * step;
  char buf[48];
  std::snprintf(buf, sizeof(buf), "entropy[%.1f-%.1f)", lo, lo + step);
  return {index, buf};
}

// Nearest-rank percentile over a sorted vector.
inline std::int64_t percentile(const std::vector<std::int64_t>& sorted, double p) {
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(sorted.size())));
  if (rank == 0) rank = 1;
  return sorted[std::min(rank, sorted.size()) - 1];
}

struct UserFacts {
  std::string name;
  int distinct_apps = 0;
  std::int64_t total_events = 0;
  double entropy = 0.0;
};

}  // namespace detail

inline EvalReport run_evaluation(const Dataset& ds, const Config& config,
                                 const EvalOptions& opts = {}) {
  config.validate();
  EvalReport report;
  report.predictors = detail::checked_predictors(opts.predictors);
  bool wants_kap = std::find(report.predictors.begin(), report.predictors.end(),
                             "kap") != report.predictors.end();

  ModelBundle bundle;
  std::map<std::string, std::size_t> model_index;
  if (wants_kap) {
    bundle = train_all(ds, config, opts.train);
    for (std::size_t i = 0; i < bundle.users.size(); ++i)
      model_index[bundle.users[i].user] = i;
  }

  std::vector<detail::UserFacts> facts;
  for (const UserTrace& trace : ds.users) {
    if (trace.excluded || trace.split_index >= trace.events.size()) {
      report.notes.push_back("skipping " + trace.user +
                             ": not enough events on both sides of the split");
      continue;
    }
    std::vector<AppId> train_labels;
    train_labels.reserve(trace.split_index);
    for (std::size_t i = 0; i < trace.split_index; ++i)
      train_labels.push_back(trace.events[i].app);

    std::map<std::string, std::vector<EvalCase>> cases;
    PredictionList mfu_list;
    if (std::find(report.predictors.begin(), report.predictors.end(), "mfu") !=
        report.predictors.end())
      mfu_list = predict_mfu(train_labels, config.top_k);
    const UserModel* model = nullptr;
    if (wants_kap) {
      auto it = model_index.find(trace.user);
      if (it == model_index.end())
        throw std::logic_error("evaluate: trained bundle is missing " + trace.user);
      model = &bundle.users[it->second];
    }

    std::vector<AppId> recent;
    recent.reserve(trace.events.size());
    for (std::size_t i = 0; i < trace.split_index; ++i)
      recent.push_back(trace.events[i].app);
    for (std::size_t i = trace.split_index; i < trace.events.size(); ++i) {
      const UsageEvent& query = trace.events[i];
      std::span<const UsageEvent> history(trace.events.data(), i);
      for (const std::string& p : report.predictors) {
        EvalCase c;
        c.truth = query.app;
        if (p == "kap")
          c.list = kap_predict(*model, ds.schema, ds.apps, config, history, query,
                               config.top_k);
        else if (p == "mfu")
          c.list = mfu_list;
        else
          c.list = predict_mru(recent, train_labels, config.top_k);
        cases[p].push_back(std::move(c));
      }
      recent.push_back(query.app);
    }

    for (const std::string& p : report.predictors) {
      MetricCell cell;
      cell.recall = recall(cases[p]);
      cell.ndcg = ndcg(cases[p]);
      cell.n_cases = static_cast<std::int64_t>(cases[p].size());
      report.per_user[p][trace.user] = cell;
    }

    detail::UserFacts f;
    f.name = trace.user;
    std::vector<char> seen(static_cast<std::size_t>(ds.apps.size()), 0);
    for (const UsageEvent& e : trace.events)
      seen[static_cast<std::size_t>(e.app)] = 1;
    f.distinct_apps = static_cast<int>(std::count(seen.begin(), seen.end(), 1));
    f.total_events = static_cast<std::int64_t>(trace.events.size());
    f.entropy = usage_entropy(train_labels);
    facts.push_back(std::move(f));
  }

  if (facts.empty())
    throw std::runtime_error("evaluate: no user has both training and test events");

  auto mean_over = [&](const std::string& predictor,
                       const std::vector<std::string>& users) {
    MetricCell cell;
    for (const std::string& u : users) {
      const MetricCell& c = report.per_user.at(predictor).at(u);
      cell.recall += c.recall;
      cell.ndcg += c.ndcg;
      cell.n_cases += c.n_cases;
    }
    cell.recall /= static_cast<double>(users.size());
    cell.ndcg /= static_cast<double>(users.size());
    return cell;
  };

  std::vector<std::string> all_users;
  for (const detail::UserFacts& f : facts) all_users.push_back(f.name);

  for (const std::string& p : report.predictors) {
    MetricCell cell = mean_over(p, all_users);
    report.aggregate[p] = cell;
    report.rows.push_back(
        {"overall", "all", p, config.top_k, cell.recall, cell.ndcg, cell.n_cases});
  }
  for (const detail::UserFacts& f : facts)
    for (const std::string& p : report.predictors) {
      const MetricCell& c = report.per_user.at(p).at(f.name);
      report.rows.push_back(
          {"user", f.name, p, config.top_k, c.recall, c.ndcg, c.n_cases});
    }

  // Cohorts: assign each user a (numeric bucket order, label); emit buckets in
  // ascending order, predictors adjacent per bucket.
  struct BucketMember {
    int order;
    std::string label;
    std::string user;
  };
  auto emit_cohort_rows = [&](std::vector<BucketMember> members) {
    std::stable_sort(members.begin(), members.end(),
                     [](const BucketMember& a, const BucketMember& b) {
                       return a.order < b.order;
                     });
    std::size_t i = 0;
    while (i < members.size()) {
      std::size_t j = i;
      std::vector<std::string> users;
      while (j < members.size() && members[j].order == members[i].order)
        users.push_back(members[j++].user);
      for (const std::string& p : report.predictors) {
        MetricCell cell = mean_over(p, users);
        report.rows.push_back({"cohort", members[i].label, p, config.top_k,
                               cell.recall, cell.ndcg, cell.n_cases});
      }
      i = j;
    }
  };

  std::vector<BucketMember> apps_buckets;
  for (const detail::UserFacts& f : facts) {
    auto [order, label] = detail::apps_cohort_bucket(f.distinct_apps,
                                                     opts.apps_cohort_edges);
    apps_buckets.push_back({order, label, f.name});
  }
  emit_cohort_rows(std::move(apps_buckets));

  std::vector<std::int64_t> counts;
  for (const detail::UserFacts& f : facts) counts.push_back(f.total_events);
  std::sort(counts.begin(), counts.end());
  std::int64_t q1 = detail::percentile(counts, 0.25);
  std::int64_t q2 = detail::percentile(counts, 0.50);
  std::int64_t q3 = detail::percentile(counts, 0.75);
  std::vector<BucketMember> usage_buckets;
  for (const detail::UserFacts& f : facts) {
    int order = f.total_events <= q1 ? 1 : f.total_events <= q2 ? 2
                : f.total_events <= q3 ? 3 : 4;
    usage_buckets.push_back({order, "usage_q" + std::to_string(order), f.name});
  }
  emit_cohort_rows(std::move(usage_buckets));

  std::vector<BucketMember> entropy_buckets;
  for (const detail::UserFacts& f : facts) {
    auto [order, label] = detail::entropy_cohort_bucket(f.entropy,
                                                        opts.entropy_step_bits);
    entropy_buckets.push_back({order, label, f.name});
  }
  emit_cohort_rows(std::move(entropy_buckets));

  return report;
}

namespace detail {

inline Config with_axis(const Config& base, const std::string& axis, double value) {
  Config c = base;
  auto as_int = [&](const char* what) {
    double rounded = std::round(value);
    if (std::fabs(value - rounded) > 1e-9)
      throw std::runtime_error(std::string("sweep: ") + what +
                               " takes integer values");
    return static_cast<int>(rounded);
  };
  if (axis == "k")
    c.top_k = as_int("k");
  else if (axis == "rho")
    c.rho = value;
  else if (axis == "min_tp")
    c.min_tp = value;
  else if (axis == "refine_iters")
    c.refine_iters = as_int("refine_iters");
  else if (axis == "knn_fraction")
    c.knn_fraction = value;
  else
    throw std::runtime_error("sweep: unknown axis " + axis +
                             " (expected k, rho, min_tp, refine_iters, knn_fraction)");
  c.validate();
  return c;
}

inline std::string axis_value_label(const std::string& axis, double value) {
  if (axis == "k" || axis == "refine_iters")
    return std::to_string(static_cast<int>(std::llround(value)));
  return nlohmann::json(value).dump();
}

}  // namespace detail

inline EvalReport run_sweep(const Dataset& ds, const Config& base,
                            const std::string& axis, const std::vector<double>& values,
                            const EvalOptions& opts = {}) {
  if (values.empty()) throw std::runtime_error("sweep: no values given");
  EvalReport report;
  bool first = true;
  for (double v : values) {
    Config c = detail::with_axis(base, axis, v);
    EvalReport sub = run_evaluation(ds, c, opts);
    if (first) {
      report.predictors = sub.predictors;
      report.notes = sub.notes;
      first = false;
    }
    std::string label = axis + "=" + detail::axis_value_label(axis, v);
    for (const std::string& p : sub.predictors) {
      const MetricCell& cell = sub.aggregate.at(p);
      report.sweep.push_back({v, p, cell});
      report.rows.push_back(
          {"sweep", label, p, c.top_k, cell.recall, cell.ndcg, cell.n_cases});
    }
  }
  return report;
}

inline void write_report_csv(const EvalReport& report, std::ostream& out,
                             bool gnuplot = false) {
  char buf[64];
  const char sep = gnuplot ? ' ' : ',';
  if (gnuplot)
    out << "# scope cohort predictor k recall ndcg n_cases\n";
  else
    out << "scope,cohort,predictor,k,recall,ndcg,n_cases\n";
  for (const ReportRow& r : report.rows) {
    out << r.scope << sep << r.cohort << sep << r.predictor << sep << r.k << sep;
    std::snprintf(buf, sizeof(buf), "%.6f%c%.6f%c%lld\n", r.recall, sep, r.ndcg, sep,
                  static_cast<long long>(r.n_cases));
    out << buf;
  }
}

}  // namespace usage_oracle
