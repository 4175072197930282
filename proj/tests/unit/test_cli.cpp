#include <filesystem>
#include <regex>
#include <set>

#include <unistd.h>

#include "circuitlens/cla/circuit.hpp"
#include "circuitlens/cla/trace.hpp"
#include "circuitlens/cli/circuit_io.hpp"
#include "circuitlens/cli/commands.hpp"
#include "circuitlens/cli/config.hpp"
#include "circuitlens/common/error.hpp"
#include "circuitlens/common/files.hpp"
#include "doctest.h"

using namespace circuitlens;
using namespace circuitlens::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

cla::Circuit sample_circuit() {
  cla::Circuit c;
  c.layers = {{"relu2", {5, 1, 3}}, {"relu3", {0, 2}}, {"dense", {4}}};
  std::vector<cla::AttributionMatrix> mats(2);
  mats[0] = {"relu2", "relu3", 6, 3, 2, std::vector<double>(18, 0.0)};
  mats[1] = {"relu3", "dense", 3, 5, 2, std::vector<double>(15, 0.0)};
  mats[0].values[1 * 3 + 0] = 0.1;
  mats[0].values[3 * 3 + 2] = 2.5;
  mats[0].values[5 * 3 + 0] = -1.0;
  mats[1].values[0 * 5 + 4] = 0.3333333333333333;
  c.edges = cla::circuit_edges(c.layers, mats);
  c.method = cla::Method::cla;
  c.provenance = {7, "concept:1/probes:25/seed:7", {3, 2, 1}, 2, cla::Termination::fixed_point};
  return c;
}

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("circuitlens_cli_" + std::to_string(::getpid()));
  TempDir() { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config resolution") {
  SUBCASE("layers defaults, file and overrides") {
    json file = {{"probes", 10}, {"method", "random"}};
    json cfg = resolve_config("extract", file, {{"probes", 3}});
    CHECK(cfg["probes"] == 3);
    CHECK(cfg["method"] == "random");
    CHECK(cfg["rule"] == "both_neighbors");
    CHECK(cfg.size() == command_defaults("extract").size());
  }
  SUBCASE("every unknown key and type error is reported at once") {
    try {
      resolve_config("extract", {{"colour", 1}, {"probes", "many"}}, {{"shape", 2}});
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.details()["unknown_keys"] == json({"colour", "shape"}));
      REQUIRE(e.details()["type_errors"].size() == 1);
      CHECK(e.details()["type_errors"][0]["key"] == "probes");
    }
  }
  SUBCASE("nullable keys") {
    CHECK(resolve_config("extract", {}, {{"k", 4}})["k"] == 4);
    CHECK(resolve_config("extract", {}, {{"k", {4, 4, 2}}})["k"] == json({4, 4, 2}));
    CHECK_THROWS_AS(resolve_config("extract", {}, {{"k", "four"}}), ValidationError);
    CHECK_THROWS_AS(resolve_config("extract", {}, {{"concept", -1}}), ValidationError);
  }
  SUBCASE("unknown command") { CHECK_THROWS_AS(command_defaults("frobnicate"), ValidationError); }
  SUBCASE("resolved config file") {
    TempDir dir;
    write_resolved_config(dir.path, "export", command_defaults("export"));
    auto j = json::parse(read_file(dir.path / "resolved_config.json"));
    CHECK(j["command"] == "export");
    CHECK(j["tool_version"] == std::string(tool_version()));
    CHECK(j["config"]["format"] == "dot");
  }
}

TEST_CASE("circuit json") {
  const auto c = sample_circuit();
  const std::string text = export_circuit_json(c);
  const auto back = circuit_from_json(json::parse(text));
  CHECK(export_circuit_json(back) == text);
  CHECK(back.layers[0].neurons == cla::NeuronSet{1, 3, 5});
  CHECK(back.edges.size() == c.edges.size());
  // Neurons are listed ascending and keys sorted.
  CHECK(json::parse(text)["layers"][0]["neurons"] == json({1, 3, 5}));
  CHECK(text.find("\"edges\"") < text.find("\"layers\""));

  json broken = json::parse(text);
  broken["layers"][1].erase("neurons");
  try {
    circuit_from_json(broken);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("neurons") != std::string::npos);
  }
  TempDir dir;
  save_circuit_json(c, dir.path / "c.json");
  CHECK(read_file(dir.path / "c.json") == text);
  CHECK(export_circuit_json(load_circuit_json(dir.path / "c.json")) == text);
}

TEST_CASE("circuit dot") {
  const auto c = sample_circuit();
  const std::string dot = export_circuit_dot(c);
  CHECK(dot.rfind("digraph circuit {", 0) == 0);
  std::size_t nonzero = 0;
  for (const auto& e : c.edges) nonzero += e.score != 0.0;
  const std::regex edge_re("->");
  CHECK(static_cast<std::size_t>(std::distance(std::sregex_iterator(dot.begin(), dot.end(), edge_re),
                                               std::sregex_iterator())) == nonzero);
  CHECK(dot.find("\"relu2:3\" -> \"relu3:2\" [penwidth=5.0000") != std::string::npos);
  CHECK(dot.find("\"relu2:1\" -> \"relu3:0\" [penwidth=0.5000") != std::string::npos);
  CHECK(dot.find("style=dashed") != std::string::npos);
  const std::regex node_re("\"(relu2|relu3|dense):[0-9]+\" \\[label=");
  CHECK(std::distance(std::sregex_iterator(dot.begin(), dot.end(), node_re), std::sregex_iterator()) == 6);

  cla::Circuit flat = c;
  for (auto& e : flat.edges) e.score = 1.0;
  const std::string eq = export_circuit_dot(flat);
  std::smatch m;
  std::string rest = eq;
  std::set<std::string> widths;
  const std::regex pw("penwidth=([0-9.]+)");
  while (std::regex_search(rest, m, pw)) {
    widths.insert(m[1]);
    rest = m.suffix();
  }
  CHECK(widths == std::set<std::string>{"5.0000"});
}

TEST_CASE("command errors") {
  TempDir dir;
  SUBCASE("unknown command") { CHECK_THROWS_AS(run_command("nope", json::object()), ValidationError); }
  SUBCASE("export format") {
    save_circuit_json(sample_circuit(), dir.path / "c.json");
    auto cfg = resolve_config("export", {}, {{"circuit", (dir.path / "c.json").string()},
                                             {"out", (dir.path / "x").string()},
                                             {"format", "svg"}});
    CHECK_THROWS_AS(run_command("export", cfg), ValidationError);
    cfg["format"] = "json";
    run_command("export", cfg);
    CHECK(read_file(dir.path / "x" / "circuit.json") == export_circuit_json(sample_circuit()));
  }
  SUBCASE("ingest rejects a non-f64 trace") {
    cla::AttributionMatrix m{"a", "b", 2, 2, 1, {1, 2, 3, 4}};
    std::string bytes = cla::encode_trace(m);
    const auto pos = bytes.find("f64");
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, 3, "f32");
    write_file_atomic(dir.path / "t.trace", bytes);
    auto cfg = resolve_config("ingest", {}, {{"traces", {(dir.path / "t.trace").string()}},
                                             {"k", 1},
                                             {"out", (dir.path / "i").string()}});
    try {
      run_command("ingest", cfg);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("dtype") != std::string::npos);
    }
  }
  SUBCASE("ingest builds the circuit from traces") {
    cla::AttributionMatrix m{"a", "b", 2, 2, 1, {0, 5, 1, 0}};
    cla::write_trace(m, dir.path / "t.trace");
    auto cfg = resolve_config("ingest", {}, {{"traces", {(dir.path / "t.trace").string()}},
                                             {"k", 1},
                                             {"out", (dir.path / "i").string()}});
    run_command("ingest", cfg);
    auto c = load_circuit_json(dir.path / "i" / "circuit.json");
    CHECK(c.layers[0].neurons == cla::NeuronSet{0});
    CHECK(c.layers[1].neurons == cla::NeuronSet{1});
    CHECK(fs::exists(dir.path / "i" / "resolved_config.json"));
  }
}
