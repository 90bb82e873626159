#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dcc/config.hpp"
#include "dcc/errors.hpp"

using namespace dcc;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("empty config yields defaults") {
  const auto c = parse_config("");
  const RunConfig d;
  CHECK(serialize_config(c) == serialize_config(d));
  CHECK(c.seed == 7);
  CHECK(c.model.n_layers == 4);
  CHECK(c.model.n_heads == 8);
  CHECK(c.chunking == ChunkingSpec::percent(0.10));
  CHECK(c.eval.chunking_table.size() == 5);
  CHECK(serialize_config(parse_config("  \n {} ")) == serialize_config(d));
}

TEST_CASE("overrides and round trip") {
  const auto c = parse_config(R"({
    "seed": 3,
    "model": {"n_layers": 2, "d_model": 64},
    "chunking": {"strategy": "fixed", "value": 16},
    "eval": {"tau_grid": [0.2, 0.8], "policies": ["cutoff", "full"]}
  })");
  CHECK(c.seed == 3);
  CHECK(c.model.n_layers == 2);
  CHECK(c.model.d_model == 64);
  CHECK(c.model.n_heads == 8);
  CHECK(c.chunking == ChunkingSpec::fixed(16));
  CHECK(c.eval.tau_grid == std::vector<double>{0.2, 0.8});
  const auto text = serialize_config(c);
  CHECK(serialize_config(parse_config(text)) == text);
}

TEST_CASE("config errors name the field") {
  CHECK(contains(error_of(R"({"eval": {"tau_grid": [0.5, 1.5]}})"), "eval.tau_grid"));
  CHECK(contains(error_of(R"({"colour": 1, "shade": 2})"), "unknown config keys: colour, shade"));
  CHECK(contains(error_of(R"({"model": {"depth": 2}})"), "model.depth"));
  CHECK(contains(error_of(R"({"seed": "seven"})"), "seed"));
  CHECK(contains(error_of(R"({"probe": {"heads": 99}})"), "probe.heads"));
  CHECK(contains(error_of(R"({"eval": {"policies": ["magic"]}})"), "magic"));
  CHECK(contains(error_of(R"({"chunking": {"strategy": "words"}})"), "chunking.strategy"));
  CHECK(contains(error_of(R"({"chunking": {"value": 0}})"), "chunking.value"));
  CHECK(contains(error_of(R"({"data": {"single_hop": 0, "multi_hop": 0}})"), "data"));
  CHECK(contains(error_of(R"({"model": {"d_model": 100}})"), "model"));
  CHECK(contains(error_of("[1, 2]"), "expected an object"));
}

TEST_CASE("syntax errors carry the line") {
  const auto msg = error_of("{\n  \"seed\": 3,\n  \"model\": {,\n}");
  CHECK(contains(msg, "<config>:3:"));
}

TEST_CASE("config files") {
  const auto missing = std::filesystem::temp_directory_path() / "dcc_unit_no_such_config.json";
  std::filesystem::remove(missing);
  try {
    load_config(missing);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(contains(e.what(), missing.string()));
  }

  const auto path = std::filesystem::temp_directory_path() / "dcc_unit_config.json";
  {
    std::ofstream out(path);
    out << "{\"seed\": 11,\n \"oops\": }";
  }
  try {
    load_config(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(contains(e.what(), path.string() + ":2:"));
  }
  {
    std::ofstream out(path);
    out << "{\"seed\": 11}";
  }
  CHECK(load_config(path).seed == 11);
  std::filesystem::remove(path);
}
