#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <usage_oracle/core.hpp>

using namespace usage_oracle;

namespace {

// Writes a throwaway file in the test working directory and removes it on
// scope exit.
struct TempFile {
  std::string path;
  TempFile(const std::string& name, const std::string& content) : path(name) {
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("interning assigns dense ids in first-seen order", "[core]") {
  InternTable t;
  REQUIRE(t.intern("Maps") == 0);
  REQUIRE(t.intern("Maps") == 0);
  REQUIRE(t.intern("Camera") == 1);
  REQUIRE(t.size() == 2);
  REQUIRE(t.name(0) == "Maps");
  REQUIRE(t.name(1) == "Camera");
  REQUIRE(t.find("Camera").value() == 1);
  REQUIRE_FALSE(t.find("Mail").has_value());
}

TEST_CASE("interning rejects empty names and bad ids", "[core]") {
  InternTable t;
  REQUIRE_THROWS_AS(t.intern(""), std::runtime_error);
  t.intern("a");
  REQUIRE_THROWS_AS(t.name(1), std::invalid_argument);
  REQUIRE_THROWS_AS(t.name(-1), std::invalid_argument);
}

TEST_CASE("interning round-trips arbitrary strings", "[core]") {
  InternTable t;
  std::vector<std::string> inserted;
  for (int i = 0; i < 200; ++i) {
    inserted.push_back("app_" + std::to_string(i * 7919 % 97) + "_" + std::to_string(i));
    REQUIRE(t.intern(inserted.back()) == static_cast<AppId>(i));
  }
  for (int i = 0; i < 200; ++i) {
    REQUIRE(t.name(static_cast<AppId>(i)) == inserted[static_cast<std::size_t>(i)]);
    REQUIRE(t.intern(inserted[static_cast<std::size_t>(i)]) == static_cast<AppId>(i));
  }
}

TEST_CASE("config defaults", "[core]") {
  Config c;
  REQUIRE(c.top_k == 4);
  REQUIRE(c.knn_fraction == 0.40);
  REQUIRE(c.rho == 0.70);
  REQUIRE(c.min_tp == 0.001);
  REQUIRE(c.max_lookback == 5);
  REQUIRE(c.refine_iters == 3);
  REQUIRE(c.coverage_threshold == 0.75);
  REQUIRE(c.rng_seed == 0);
  REQUIRE_NOTHROW(c.validate());
}

TEST_CASE("config validation names the offending field", "[core]") {
  auto expect_rejected = [](void (*mutate)(Config&), const std::string& field) {
    Config c;
    mutate(c);
    REQUIRE_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring(field));
  };
  expect_rejected([](Config& c) { c.top_k = 0; }, "top_k");
  expect_rejected([](Config& c) { c.knn_fraction = 0.0; }, "knn_fraction");
  expect_rejected([](Config& c) { c.knn_fraction = 1.5; }, "knn_fraction");
  expect_rejected([](Config& c) { c.rho = -0.1; }, "rho");
  expect_rejected([](Config& c) { c.min_tp = 0.0; }, "min_tp");
  expect_rejected([](Config& c) { c.min_tp = 1.0; }, "min_tp");
  expect_rejected([](Config& c) { c.max_lookback = 0; }, "max_lookback");
  expect_rejected([](Config& c) { c.refine_iters = -2; }, "refine_iters");
  expect_rejected([](Config& c) { c.coverage_threshold = 0.0; }, "coverage_threshold");
}

TEST_CASE("config set parses every field and rejects junk", "[core]") {
  Config c;
  c.set("top_k", "7");
  c.set("knn_fraction", "0.25");
  c.set("rho", "0.9");
  c.set("min_tp", "0.05");
  c.set("max_lookback", "3");
  c.set("refine_iters", "2");
  c.set("coverage_threshold", "0.8");
  c.set("rng_seed", "12345");
  REQUIRE(c.top_k == 7);
  REQUIRE(c.knn_fraction == 0.25);
  REQUIRE(c.rho == 0.9);
  REQUIRE(c.min_tp == 0.05);
  REQUIRE(c.max_lookback == 3);
  REQUIRE(c.refine_iters == 2);
  REQUIRE(c.coverage_threshold == 0.8);
  REQUIRE(c.rng_seed == 12345);

  REQUIRE_THROWS_AS(c.set("nope", "1"), std::runtime_error);
  REQUIRE_THROWS_AS(c.set("top_k", "four"), std::runtime_error);
  REQUIRE_THROWS_AS(c.set("rho", "0.5x"), std::runtime_error);
  REQUIRE_THROWS_AS(c.set("rng_seed", "-3"), std::runtime_error);
}

TEST_CASE("config file parsing", "[core]") {
  TempFile f("tmp_config_ok.txt",
             "# comment\n"
             "top_k = 6\n"
             "\n"
             "min_tp=0.01\n"
             "rng_seed = 99\n");
  Config c = Config::from_file(f.path);
  REQUIRE(c.top_k == 6);
  REQUIRE(c.min_tp == 0.01);
  REQUIRE(c.rng_seed == 99);
  REQUIRE(c.knn_fraction == 0.40);  // untouched default

  TempFile bad("tmp_config_bad.txt", "top_k\n");
  REQUIRE_THROWS_WITH(Config::from_file(bad.path),
                      Catch::Matchers::ContainsSubstring("line 1"));
  REQUIRE_THROWS_AS(Config::from_file("does_not_exist.cfg"), std::runtime_error);
}

TEST_CASE("rng is deterministic per seed", "[core]") {
  Rng a(42), b(42), other(43);
  bool diverged = false;
  for (int i = 0; i < 100; ++i) {
    auto va = a.next();
    REQUIRE(va == b.next());
    if (va != other.next()) diverged = true;
  }
  REQUIRE(diverged);
}

TEST_CASE("rng uniform01 and below stay in range", "[core]") {
  Rng r(7);
  std::vector<int> hit(5, 0);
  for (int i = 0; i < 5000; ++i) {
    double u = r.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    std::uint64_t x = r.below(5);
    REQUIRE(x < 5);
    ++hit[static_cast<std::size_t>(x)];
  }
  for (int count : hit) REQUIRE(count > 0);
  REQUIRE_THROWS_AS(r.below(0), std::invalid_argument);
}

TEST_CASE("rng exponential matches its mean", "[core]") {
  Rng r(11);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = r.exponential(2.0);
    REQUIRE(x >= 0.0);
    sum += x;
  }
  REQUIRE(sum / n == Catch::Approx(2.0).epsilon(0.05));
}

TEST_CASE("rng mix separates streams", "[core]") {
  auto a = Rng::mix(1, 0);
  auto b = Rng::mix(1, 1);
  auto c = Rng::mix(2, 0);
  REQUIRE(a != b);
  REQUIRE(a != c);
  REQUIRE(Rng::mix(1, 0) == a);
}
