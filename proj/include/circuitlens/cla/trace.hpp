#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "circuitlens/cla/circuit.hpp"

namespace circuitlens::cla {

// Trace file: one JSON header line
//   {"layer_i":..., "layer_j":..., "width_i":..., "width_j":..., "num_images":..., "dtype":"f64"}
// then width_i * width_j little-endian float64 values, row-major.

std::string encode_trace(const AttributionMatrix& matrix);
/// Throws ParseError for a corrupt header, an unsupported dtype, or a payload
/// whose size disagrees with the header widths (naming the byte offset).
AttributionMatrix decode_trace(std::string_view bytes);

void write_trace(const AttributionMatrix& matrix, const std::filesystem::path& path);
AttributionMatrix read_trace(const std::filesystem::path& path);

/// Reads one trace per consecutive layer pair and builds the circuit from the
/// ingested matrices. Throws ValidationError when adjacent files disagree on
/// the shared layer's name or width.
Circuit circuit_from_trace(const std::vector<std::filesystem::path>& files, const std::vector<std::size_t>& k,
                           const BuildOptions& options = {});

}  // namespace circuitlens::cla
