#pragma once

#include <filesystem>
#include <string>

#include "circuitlens/cla/circuit.hpp"
#include "json.hpp"

namespace circuitlens::cli {

nlohmann::json circuit_to_json(const cla::Circuit& circuit);
/// Throws ParseError naming the offending field on malformed input.
cla::Circuit circuit_from_json(const nlohmann::json& j);

/// Canonical text (sorted keys, 17 significant digits, neurons ascending).
std::string export_circuit_json(const cla::Circuit& circuit);
cla::Circuit load_circuit_json(const std::filesystem::path& path);
void save_circuit_json(const cla::Circuit& circuit, const std::filesystem::path& path);

/// Graphviz text: one cluster per layer, one node per neuron labeled
/// "layer:index", edge penwidth linear in |score| mapped onto [0.5, 5.0].
/// Zero-score edges are omitted.
std::string export_circuit_dot(const cla::Circuit& circuit);

}  // namespace circuitlens::cli
