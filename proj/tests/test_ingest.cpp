#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <usage_oracle/core.hpp>
#include <usage_oracle/ingest.hpp>

using namespace usage_oracle;

namespace {

const char* kHeader =
    R"({"schema": [["hour", "numeric"], ["wifi", "categorical"]]})";

std::string log_text(const std::vector<std::string>& events) {
  std::string out = std::string(kHeader) + "\n";
  for (const std::string& e : events) out += e + "\n";
  return out;
}

Dataset load_string(const std::string& text) {
  std::istringstream in(text);
  return load_log(in);
}

std::string dump(const Dataset& ds) {
  std::ostringstream out;
  write_log(ds, out);
  return out.str();
}

}  // namespace

TEST_CASE("a small log parses into one sorted trace", "[ingest]") {
  Dataset ds = load_string(log_text({
      R"({"user": "u1", "ts_min": 1.0, "app": "Maps", "sensors": {"hour": 9.5, "wifi": "home"}})",
      R"({"user": "u1", "ts_min": 2.5, "app": "Mail", "sensors": {"hour": 9.6, "wifi": null}})",
      R"({"user": "u1", "ts_min": 4.0, "app": "Maps", "sensors": {"hour": 9.9}})",
  }));
  REQUIRE(ds.users.size() == 1);
  REQUIRE(ds.users[0].user == "u1");
  REQUIRE(ds.users[0].events.size() == 3);
  REQUIRE(ds.schema.names == std::vector<std::string>{"hour", "wifi"});

  const UsageEvent& first = ds.users[0].events[0];
  REQUIRE(ds.apps.name(first.app) == "Maps");
  REQUIRE(first.sensors[0].num == 9.5);
  REQUIRE(ds.symbols.name(first.sensors[1].sym) == "home");
  REQUIRE(ds.users[0].events[1].sensors[1].is_missing());  // explicit null
  REQUIRE(ds.users[0].events[2].sensors[1].is_missing());  // absent key
}

TEST_CASE("time-shuffled rows load to the same dataset", "[ingest]") {
  std::vector<std::string> rows{
      R"({"user": "u1", "ts_min": 1.0, "app": "A", "sensors": {"hour": 1}})",
      R"({"user": "u1", "ts_min": 2.0, "app": "B", "sensors": {"hour": 2}})",
      R"({"user": "u1", "ts_min": 3.0, "app": "C", "sensors": {"hour": 3}})",
  };
  Dataset sorted = load_string(log_text(rows));
  Dataset shuffled = load_string(log_text({rows[2], rows[0], rows[1]}));
  REQUIRE(dump(sorted) == dump(shuffled));
}

TEST_CASE("write then load is the identity", "[ingest]") {
  Dataset ds = load_string(log_text({
      R"({"user": "u1", "ts_min": 1.25, "app": "Maps", "sensors": {"hour": 0.1, "wifi": "work"}})",
      R"({"user": "u2", "ts_min": 0.5, "app": "Mail", "sensors": {"hour": null, "wifi": "home"}})",
  }));
  std::string once = dump(ds);
  Dataset reloaded = load_string(once);
  REQUIRE(dump(reloaded) == once);
  REQUIRE(reloaded.users.size() == 2);
  REQUIRE(reloaded.users[0].events[0].ts_min == 1.25);
}

TEST_CASE("parse errors carry the line number", "[ingest]") {
  using Catch::Matchers::ContainsSubstring;
  // Non-numeric value in a numeric column.
  REQUIRE_THROWS_WITH(
      load_string(log_text(
          {R"({"user": "u", "ts_min": 1, "app": "A", "sensors": {"hour": "nine"}})"})),
      ContainsSubstring("line 2") && ContainsSubstring("hour"));
  // Unknown sensor name.
  REQUIRE_THROWS_WITH(
      load_string(log_text(
          {R"({"user": "u", "ts_min": 1, "app": "A", "sensors": {"gps": 1}})"})),
      ContainsSubstring("unknown sensor"));
  // Broken JSON.
  REQUIRE_THROWS_WITH(load_string(log_text({"{nope"})), ContainsSubstring("line 2"));
  // Missing required event fields.
  REQUIRE_THROWS_WITH(load_string(log_text({R"({"user": "u", "app": "A"})"})),
                      ContainsSubstring("ts_min"));
  // Bad schema kind and duplicate names.
  REQUIRE_THROWS_WITH(
      load_string(R"({"schema": [["hour", "float"]]})" "\n"),
      ContainsSubstring("unknown feature kind"));
  REQUIRE_THROWS_WITH(
      load_string(R"({"schema": [["hour", "numeric"], ["hour", "numeric"]]})" "\n"),
      ContainsSubstring("duplicate"));
  // No header at all.
  REQUIRE_THROWS_AS(load_string(""), std::runtime_error);
}

TEST_CASE("schema-checked loading rejects mismatches", "[ingest]") {
  std::string path = "tmp_ingest_schema.jsonl";
  {
    std::ofstream out(path);
    out << log_text(
        {R"({"user": "u", "ts_min": 1, "app": "A", "sensors": {"hour": 1}})"});
  }
  FeatureSchema same;
  same.names = {"hour", "wifi"};
  same.kinds = {FeatureKind::Numeric, FeatureKind::Categorical};
  REQUIRE_NOTHROW(load_log(path, same));

  FeatureSchema other;
  other.names = {"hour", "wifi"};
  other.kinds = {FeatureKind::Numeric, FeatureKind::Numeric};
  REQUIRE_THROWS_WITH(load_log(path, other),
                      Catch::Matchers::ContainsSubstring("schema"));
  std::remove(path.c_str());

  REQUIRE_THROWS_WITH(load_log("no_such_file.jsonl"),
                      Catch::Matchers::ContainsSubstring("no_such_file"));
}

TEST_CASE("split indexes are floored and degenerate users excluded", "[ingest]") {
  Dataset ds;
  auto add_user = [&](int n_events) {
    UserTrace t;
    t.user = "u" + std::to_string(ds.users.size());
    for (int i = 0; i < n_events; ++i) {
      UsageEvent e;
      e.ts_min = i;
      e.app = 0;
      t.events.push_back(e);
    }
    ds.users.push_back(std::move(t));
  };
  add_user(10);
  add_user(1);
  add_user(3);

  split_dataset(ds, 0.7);
  REQUIRE(ds.users[0].split_index == 7);
  REQUIRE_FALSE(ds.users[0].excluded);
  REQUIRE(ds.users[1].excluded);
  REQUIRE(ds.users[2].split_index == 2);
  REQUIRE_FALSE(ds.users[2].excluded);

  split_dataset(ds, 2.0 / 3.0);
  REQUIRE(ds.users[0].split_index == 6);

  REQUIRE_THROWS_AS(split_dataset(ds, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(split_dataset(ds, 1.0), std::invalid_argument);
}
