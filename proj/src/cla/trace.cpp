#include "circuitlens/cla/trace.hpp"

#include "circuitlens/common/error.hpp"
#include "circuitlens/common/files.hpp"
#include "circuitlens/numerics/serialize.hpp"

namespace circuitlens::cla {

using nlohmann::json;

std::string encode_trace(const AttributionMatrix& m) {
  json header = {{"layer_i", m.layer_i}, {"layer_j", m.layer_j},       {"width_i", m.width_i},
                 {"width_j", m.width_j}, {"num_images", m.num_images}, {"dtype", "f64"}};
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + 8 * m.values.size());
  for (double v : m.values) numerics::append_le_f64(out, v);
  return out;
}

AttributionMatrix decode_trace(std::string_view bytes) {
  auto framed = numerics::split_header(bytes);
  const json& h = framed.header;
  AttributionMatrix m;
  try {
    const std::string dtype = h.at("dtype").get<std::string>();
    if (dtype != "f64") {
      throw ParseError("unsupported trace dtype '" + dtype + "' (only f64 is supported)",
                       {{"byte_offset", 0}, {"dtype", dtype}});
    }
    m.layer_i = h.at("layer_i").get<std::string>();
    m.layer_j = h.at("layer_j").get<std::string>();
    m.width_i = h.at("width_i").get<std::size_t>();
    m.width_j = h.at("width_j").get<std::size_t>();
    m.num_images = h.at("num_images").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("corrupt trace header: ") + e.what(), {{"byte_offset", 0}});
  }
  const std::size_t n = m.width_i * m.width_j;
  const std::size_t expected = 8 * n;
  if (framed.payload.size() != expected) {
    const std::size_t offset = framed.payload_offset + std::min(framed.payload.size(), expected);
    throw ParseError("trace payload has " + std::to_string(framed.payload.size()) + " bytes but header widths " +
                         std::to_string(m.width_i) + "x" + std::to_string(m.width_j) + " require " +
                         std::to_string(expected) + " (mismatch at byte offset " + std::to_string(offset) + ")",
                     {{"byte_offset", offset},
                      {"expected_bytes", expected},
                      {"actual_bytes", framed.payload.size()},
                      {"width_i", m.width_i},
                      {"width_j", m.width_j}});
  }
  m.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.values[i] = numerics::read_le_f64(framed.payload.data() + 8 * i);
  return m;
}

void write_trace(const AttributionMatrix& matrix, const std::filesystem::path& path) {
  write_file_atomic(path, encode_trace(matrix));
}

AttributionMatrix read_trace(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_trace(bytes);
  } catch (const ParseError& e) {
    json d = e.details();
    d["path"] = path.string();
    throw ParseError(path.string() + ": " + e.what(), d);
  }
}

Circuit circuit_from_trace(const std::vector<std::filesystem::path>& files, const std::vector<std::size_t>& k,
                           const BuildOptions& options) {
  if (files.empty()) throw ValidationError("no trace files given");
  std::vector<AttributionMatrix> mats;
  for (const auto& f : files) {
    mats.push_back(read_trace(f));
    if (mats.size() < 2) continue;
    const auto& prev = mats[mats.size() - 2];
    const auto& cur = mats.back();
    if (prev.layer_j != cur.layer_i || prev.width_j != cur.width_i) {
      throw ValidationError("trace files disagree on layer '" + prev.layer_j + "': width " +
                                std::to_string(prev.width_j) + " vs layer '" + cur.layer_i + "' width " +
                                std::to_string(cur.width_i),
                            {{"previous_file", files[mats.size() - 2].string()},
                             {"file", f.string()},
                             {"previous_layer", prev.layer_j},
                             {"previous_width", prev.width_j},
                             {"layer", cur.layer_i},
                             {"width", cur.width_i}});
    }
  }
  return build_circuit_from_matrices(mats, k, options);
}

}  // namespace circuitlens::cla
