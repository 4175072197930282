#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "circuitlens/netgraph/model.hpp"

namespace circuitlens::netgraph {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

struct LoadedCheckpoint {
  ModelGraph model;
  CheckpointMeta meta;
};

/// Writes `dir/model.json` (layer specs, class names, seed, epoch, and the
/// SHA-256 of every parameter file) plus one tensor file per parameter.
void save_checkpoint(const ModelGraph& model, const CheckpointMeta& meta, const std::filesystem::path& dir);

/// Reads and verifies a checkpoint. Every file is decoded and hash-checked
/// before the model is assembled, so a corrupt or truncated checkpoint raises
/// ParseError and yields nothing. When `expected_classes` is given, any
/// difference in class names or order raises ValidationError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir,
                                 const std::optional<std::vector<std::string>>& expected_classes = std::nullopt);

}  // namespace circuitlens::netgraph
