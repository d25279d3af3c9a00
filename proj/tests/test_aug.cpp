#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include <usage_oracle/aug.hpp>
#include <usage_oracle/core.hpp>

using namespace usage_oracle;

namespace {

UsageEvent ev(AppId app, double ts) {
  UsageEvent e;
  e.app = app;
  e.ts_min = ts;
  return e;
}

}  // namespace

TEST_CASE("single consecutive pair builds one self-edge", "[aug]") {
  std::vector<UsageEvent> events{ev(0, 0.0), ev(0, 0.3)};
  Aug g = build_aug(events, 1, 0.75);
  const EdgeModel* e = g.edge(0, 0);
  REQUIRE(e != nullptr);
  REQUIRE(e->weight == 1.0);
  REQUIRE(e->total == 1);
  REQUIRE(e->histogram.at(0) == 1);
  REQUIRE(e->alpha == 1.0);
}

TEST_CASE("interleaved apps produce one edge per direction", "[aug]") {
  std::vector<UsageEvent> events{ev(0, 0.0), ev(1, 1.5), ev(0, 2.0)};
  Aug g = build_aug(events, 2, 0.75);
  const EdgeModel* ab = g.edge(0, 1);
  const EdgeModel* ba = g.edge(1, 0);
  REQUIRE(ab != nullptr);
  REQUIRE(ba != nullptr);
  REQUIRE(ab->weight == 1.0);
  REQUIRE(ba->weight == 1.0);
  REQUIRE(ab->histogram.at(1) == 1);  // interval 1.5 lands in bucket [1,2)
  REQUIRE(ba->histogram.at(0) == 1);  // interval 0.5 lands in bucket [0,1)
  REQUIRE(g.edge(0, 0) == nullptr);
}

TEST_CASE("out-edge weights sum to one per source", "[aug]") {
  Rng r(101);
  for (int trial = 0; trial < 20; ++trial) {
    AppId n_apps = static_cast<AppId>(2 + r.below(5));
    std::vector<UsageEvent> events;
    double t = 0.0;
    for (int i = 0; i < 60; ++i) {
      t += r.exponential(3.0);
      events.push_back(ev(static_cast<AppId>(r.below(static_cast<std::uint64_t>(n_apps))), t));
    }
    Aug g = build_aug(events, n_apps, 0.75);
    for (AppId src = 0; src < n_apps; ++src) {
      if (g.edges[static_cast<std::size_t>(src)].empty()) continue;
      double sum = 0.0;
      for (const auto& [dst, e] : g.edges[static_cast<std::size_t>(src)]) sum += e.weight;
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
    }
  }
}

TEST_CASE("fit_exponential: single-bucket histogram takes the smallest beta", "[aug]") {
  std::map<int, std::int64_t> h{{0, 17}};
  auto [alpha, beta] = fit_exponential(h, 0.75);
  REQUIRE(alpha == 1.0);
  REQUIRE(beta == Catch::Approx(1e-4).margin(1e-12));
}

TEST_CASE("fit_exponential: halving histogram recovers ln 2", "[aug]") {
  // Counts sum to 1024, so p(0)=0.5 and p(1)=0.25 are exact; coverage 0.75
  // includes exactly buckets 0 and 1, where alpha*e^(-beta*i) fits perfectly
  // at beta = ln 2.
  std::map<int, std::int64_t> h;
  std::int64_t c = 512;
  for (int b = 0; b < 10; ++b, c /= 2) h[b] = c;
  h[10] = 1;  // pad to total 1024
  auto [alpha, beta] = fit_exponential(h, 0.75);
  REQUIRE(alpha == 0.5);
  REQUIRE(beta == Catch::Approx(std::log(2.0)).margin(1e-6));
}

TEST_CASE("fit_exponential beats every grid point", "[aug]") {
  // Independent grid scan at full coverage; the returned beta must be at
  // least as good as every point of the documented search grid.
  Rng r(55);
  for (int trial = 0; trial < 10; ++trial) {
    std::map<int, std::int64_t> h;
    int buckets = static_cast<int>(2 + r.below(6));
    for (int b = 0; b < buckets; ++b) h[b] = static_cast<std::int64_t>(1 + r.below(50));
    auto [alpha, beta] = fit_exponential(h, 1.0);

    std::int64_t total = 0;
    for (auto& [b, cnt] : h) total += cnt;
    std::vector<double> p(static_cast<std::size_t>(buckets), 0.0);
    for (auto& [b, cnt] : h)
      p[static_cast<std::size_t>(b)] = static_cast<double>(cnt) / static_cast<double>(total);
    auto objective = [&](double bb) {
      double s = 0.0;
      for (int i = 0; i < buckets; ++i)
        s += std::abs(alpha * std::exp(-bb * i) - p[static_cast<std::size_t>(i)]);
      return s;
    };
    double returned = objective(beta);
    for (int i = 0; i < 1000; ++i) {
      double t = static_cast<double>(i) / 999.0;
      double g = std::exp(std::log(1e-4) + t * (std::log(10.0) - std::log(1e-4)));
      REQUIRE(returned <= objective(g) + 1e-12);
    }
  }
}

TEST_CASE("fit_exponential rejects empty or malformed histograms", "[aug]") {
  std::map<int, std::int64_t> empty;
  REQUIRE_THROWS_AS(fit_exponential(empty, 0.75), std::invalid_argument);
  std::map<int, std::int64_t> negative{{-1, 3}};
  REQUIRE_THROWS_AS(fit_exponential(negative, 0.75), std::invalid_argument);
}

TEST_CASE("edge_prob evaluates the fitted model on the bucket lattice", "[aug]") {
  Aug g;
  g.n_apps = 2;
  g.edges.resize(2);
  EdgeModel e;
  e.alpha = 0.5;
  e.beta = std::log(2.0);
  e.weight = 1.0;
  g.edges[0][1] = e;

  REQUIRE(g.edge_prob(0, 1, 1.0) == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(g.edge_prob(0, 1, 0.3) == g.edge_prob(0, 1, 0.7));  // same bucket
  double prev = g.edge_prob(0, 1, 0.0);
  for (double iv : {1.0, 2.0, 5.0, 9.0}) {
    double cur = g.edge_prob(0, 1, iv);
    REQUIRE(cur <= prev);
    prev = cur;
  }
  REQUIRE(g.edge_prob(1, 0, 1.0) == 0.0);  // absent edge
  REQUIRE(g.edge_prob(5, 0, 1.0) == 0.0);  // unknown source
  REQUIRE_THROWS_AS(g.edge_prob(0, 1, -0.1), std::invalid_argument);
}

TEST_CASE("sub-minute trace yields a 0.4 self-transition query", "[aug]") {
  // All intervals fall in bucket 0, so alpha=1 per edge and the query reduces
  // to the transition weight: A goes to A twice out of five A-departures.
  std::vector<UsageEvent> events{ev(0, 0.0), ev(0, 0.1), ev(0, 0.2), ev(1, 0.3),
                                 ev(0, 0.4), ev(2, 0.5), ev(0, 0.6), ev(1, 0.7)};
  Aug g = build_aug(events, 3, 0.75);
  REQUIRE(g.edge(0, 0)->weight == Catch::Approx(0.4).margin(1e-12));
  REQUIRE(g.edge_prob(0, 0, 0.3) == Catch::Approx(0.4).margin(1e-9));
}

TEST_CASE("exponential intervals recover their mean through the fit", "[aug]") {
  // Alternating A/B trace; every A->B interval is drawn exp(mean 2 min).
  // The fitted 1/beta must sit within 15% of the sample mean.
  Rng r(13);
  std::vector<UsageEvent> events;
  double t = 0.0;
  double ab_sum = 0.0;
  int ab_count = 0;
  events.push_back(ev(0, t));
  for (int i = 0; i < 1000; ++i) {
    double d1 = r.exponential(2.0);
    ab_sum += d1;
    ++ab_count;
    t += d1;
    events.push_back(ev(1, t));
    t += r.exponential(2.0);
    events.push_back(ev(0, t));
  }
  Aug g = build_aug(events, 2, 0.75);
  double sample_mean = ab_sum / ab_count;
  double fitted_mean = 1.0 / g.edge(0, 1)->beta;
  REQUIRE(fitted_mean == Catch::Approx(sample_mean).epsilon(0.15));
}

TEST_CASE("build_aug is deterministic and handles tiny traces", "[aug]") {
  std::vector<UsageEvent> events{ev(0, 0.0), ev(1, 2.5), ev(1, 3.0), ev(0, 7.2)};
  Aug a = build_aug(events, 2, 0.75);
  Aug b = build_aug(events, 2, 0.75);
  for (AppId src = 0; src < 2; ++src) {
    REQUIRE(a.edges[static_cast<std::size_t>(src)].size() ==
            b.edges[static_cast<std::size_t>(src)].size());
    for (const auto& [dst, e] : a.edges[static_cast<std::size_t>(src)]) {
      const EdgeModel* o = b.edge(src, dst);
      REQUIRE(o != nullptr);
      REQUIRE(e.alpha == o->alpha);
      REQUIRE(e.beta == o->beta);
      REQUIRE(e.weight == o->weight);
      REQUIRE(e.histogram == o->histogram);
    }
  }

  std::vector<UsageEvent> one{ev(0, 0.0)};
  Aug tiny = build_aug(one, 1, 0.75);
  REQUIRE(tiny.edges[0].empty());

  std::vector<UsageEvent> unsorted{ev(0, 5.0), ev(1, 1.0)};
  REQUIRE_THROWS_AS(build_aug(unsorted, 2, 0.75), std::invalid_argument);
}

TEST_CASE("filter_to_apps keeps flagged apps in order", "[aug]") {
  std::vector<UsageEvent> events{ev(0, 0.0), ev(1, 1.0), ev(2, 2.0), ev(1, 3.0)};
  std::vector<char> keep{1, 0, 1};
  auto out = filter_to_apps(events, keep);
  REQUIRE(out.size() == 2);
  REQUIRE(out[0].app == 0);
  REQUIRE(out[1].app == 2);
  REQUIRE(out[1].ts_min == 2.0);
}
