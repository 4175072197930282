#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "circuitlens/numerics/tensor.hpp"
#include "json.hpp"

namespace circuitlens::numerics {

// Tensor file layout: one JSON header line {"dtype":"f32","shape":[...]}
// terminated by '\n', followed by product(shape) little-endian float32 values
// in row-major order.

std::string encode_tensor(const Tensor& t);
/// Throws ParseError on malformed header, unsupported dtype, or a payload
/// whose size disagrees with the header (the error names the byte offset).
Tensor decode_tensor(std::string_view bytes);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Splits "<json header>\n<payload>" and parses the header. Shared with the
/// trace format, which uses the same framing with an f64 payload.
struct FramedPayload {
  nlohmann::json header;
  std::string_view payload;
  std::size_t payload_offset = 0;
};
FramedPayload split_header(std::string_view bytes);

void append_le_f32(std::string& out, float v);
void append_le_f64(std::string& out, double v);
float read_le_f32(const char* p);
double read_le_f64(const char* p);

}  // namespace circuitlens::numerics
