#include "circuitlens/cli/circuit_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "circuitlens/common/canonical_json.hpp"
#include "circuitlens/common/error.hpp"
#include "circuitlens/common/files.hpp"

namespace circuitlens::cli {

using nlohmann::json;

json circuit_to_json(const cla::Circuit& c) {
  json layers = json::array();
  for (const auto& l : c.layers) {
    layers.push_back({{"name", l.name}, {"neurons", std::vector<std::size_t>(l.neurons.begin(), l.neurons.end())}});
  }
  json edges = json::array();
  for (const auto& e : c.edges) {
    edges.push_back({{"from_layer", e.from_layer}, {"from", e.from}, {"to_layer", e.to_layer}, {"to", e.to},
                     {"score", e.score}});
  }
  const auto& p = c.provenance;
  return {{"method", cla::to_string(c.method)},
          {"provenance",
           {{"seed", p.seed},
            {"image_set", p.image_set},
            {"k", p.k},
            {"sweeps", p.sweeps},
            {"termination", cla::to_string(p.termination)}}},
          {"layers", layers},
          {"edges", edges}};
}

cla::Circuit circuit_from_json(const json& j) {
  std::string field;
  try {
    cla::Circuit c;
    field = "method";
    c.method = cla::parse_method(j.at("method").get<std::string>());
    field = "provenance";
    const json& p = j.at("provenance");
    c.provenance.seed = p.at("seed").get<std::uint64_t>();
    c.provenance.image_set = p.at("image_set").get<std::string>();
    c.provenance.k = p.at("k").get<std::vector<std::size_t>>();
    c.provenance.sweeps = p.at("sweeps").get<std::size_t>();
    c.provenance.termination = cla::parse_termination(p.at("termination").get<std::string>());
    field = "layers";
    for (const auto& l : j.at("layers")) {
      auto neurons = l.at("neurons").get<std::vector<std::size_t>>();
      c.layers.push_back({l.at("name").get<std::string>(), cla::NeuronSet(neurons.begin(), neurons.end())});
    }
    field = "edges";
    for (const auto& e : j.at("edges")) {
      c.edges.push_back({e.at("from_layer").get<std::string>(), e.at("from").get<std::size_t>(),
                         e.at("to_layer").get<std::string>(), e.at("to").get<std::size_t>(),
                         e.at("score").get<double>()});
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ParseError("malformed circuit JSON in '" + field + "': " + e.what(), {{"field", field}});
  } catch (const ValidationError& e) {
    throw ParseError(std::string("invalid circuit JSON: ") + e.what(), e.details());
  }
}

std::string export_circuit_json(const cla::Circuit& circuit) { return canonical_dump(circuit_to_json(circuit)) + "\n"; }

cla::Circuit load_circuit_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), {{"path", path.string()}, {"byte_offset", e.byte}});
  }
  return circuit_from_json(j);
}

void save_circuit_json(const cla::Circuit& circuit, const std::filesystem::path& path) {
  write_file_atomic(path, export_circuit_json(circuit));
}

namespace {

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  return out + "\"";
}

std::string node_id(const std::string& layer, std::size_t index) { return quoted(layer + ":" + std::to_string(index)); }

}  // namespace

std::string export_circuit_dot(const cla::Circuit& circuit) {
  double lo = INFINITY, hi = 0.0;
  for (const auto& e : circuit.edges) {
    if (e.score == 0.0) continue;
    lo = std::min(lo, std::abs(e.score));
    hi = std::max(hi, std::abs(e.score));
  }
  std::string out = "digraph circuit {\n  rankdir=LR;\n  node [shape=circle];\n";
  for (std::size_t i = 0; i < circuit.layers.size(); ++i) {
    const auto& l = circuit.layers[i];
    out += "  subgraph cluster_" + std::to_string(i) + " {\n    label=" + quoted(l.name) + ";\n";
    for (std::size_t m : l.neurons) out += "    " + node_id(l.name, m) + " [label=" + node_id(l.name, m) + "];\n";
    out += "  }\n";
  }
  char buf[32];
  for (const auto& e : circuit.edges) {
    if (e.score == 0.0) continue;
    const double w = hi > lo ? 0.5 + 4.5 * (std::abs(e.score) - lo) / (hi - lo) : 5.0;
    std::snprintf(buf, sizeof buf, "%.4f", w);
    out += "  " + node_id(e.from_layer, e.from) + " -> " + node_id(e.to_layer, e.to) + " [penwidth=" + buf +
           (e.score < 0 ? ", style=dashed" : "") + "];\n";
  }
  return out + "}\n";
}

}  // namespace circuitlens::cli
