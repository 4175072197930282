#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace circuitlens {

/// Writes `bytes` to `path` through a sibling temp file and a rename, so
/// readers never observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Incremental SHA-256 (OpenSSL EVP underneath).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view bytes);
  /// Lowercase hex digest. The object must not be updated afterwards.
  std::string hex_digest();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view bytes);

}  // namespace circuitlens
