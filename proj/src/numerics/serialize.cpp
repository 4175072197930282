#include "circuitlens/numerics/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "circuitlens/common/error.hpp"
#include "circuitlens/common/files.hpp"

namespace circuitlens::numerics {

void append_le_f32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void append_le_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float read_le_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

double read_le_f64(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

FramedPayload split_header(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) {
    throw ParseError("missing header line terminator", {{"byte_offset", bytes.size()}});
  }
  FramedPayload out;
  try {
    out.header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("corrupt header: ") + e.what(), {{"byte_offset", 0}});
  }
  if (!out.header.is_object()) throw ParseError("corrupt header: not a JSON object", {{"byte_offset", 0}});
  out.payload_offset = nl + 1;
  out.payload = bytes.substr(nl + 1);
  return out;
}

std::string encode_tensor(const Tensor& t) {
  nlohmann::json header = {{"dtype", "f32"}, {"shape", t.shape()}};
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + 4 * t.numel());
  for (float v : t.data()) append_le_f32(out, v);
  return out;
}

Tensor decode_tensor(std::string_view bytes) {
  FramedPayload framed = split_header(bytes);
  const auto& h = framed.header;
  if (!h.contains("dtype") || !h["dtype"].is_string()) {
    throw ParseError("tensor header lacks dtype", {{"byte_offset", 0}});
  }
  if (h["dtype"] != "f32") {
    throw ParseError("unsupported tensor dtype " + h["dtype"].get<std::string>(),
                     {{"byte_offset", 0}, {"dtype", h["dtype"]}});
  }
  Shape shape;
  try {
    shape = h.at("shape").get<Shape>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("tensor header has no valid shape", {{"byte_offset", 0}});
  }
  const std::size_t n = shape_numel(shape);
  const std::size_t expected = 4 * n;
  if (framed.payload.size() != expected) {
    const std::size_t offset = framed.payload_offset + std::min(framed.payload.size(), expected);
    throw ParseError("tensor payload has " + std::to_string(framed.payload.size()) + " bytes, header requires " +
                         std::to_string(expected) + " (stops at byte offset " + std::to_string(offset) + ")",
                     {{"byte_offset", offset}, {"expected_bytes", expected}, {"actual_bytes", framed.payload.size()}});
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = read_le_f32(framed.payload.data() + 4 * i);
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) { write_file_atomic(path, encode_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_tensor(bytes);
  } catch (const ParseError& e) {
    nlohmann::json d = e.details();
    d["path"] = path.string();
    throw ParseError(path.string() + ": " + e.what(), d);
  }
}

}  // namespace circuitlens::numerics
