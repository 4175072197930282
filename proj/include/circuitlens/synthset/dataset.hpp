#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "circuitlens/synthset/glyphs.hpp"
#include "json.hpp"

namespace circuitlens::synthset {

enum class Split { train = 0, val = 1, test = 2 };
constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct CompositeClass {
  std::string name;  // "conceptA-conceptB"
  std::pair<std::size_t, std::size_t> concepts;

  bool contains(std::size_t concept_id) const { return concepts.first == concept_id || concepts.second == concept_id; }
  bool operator==(const CompositeClass&) const = default;
};

/// Fixed pairing table: class 2i pairs concepts (i, i+1 mod 10) and class
/// 2i+1 pairs (i, i+2 mod 10). Each concept appears in exactly four classes.
std::vector<CompositeClass> default_classes();
std::vector<std::string> class_names(const std::vector<CompositeClass>& classes);

struct DatasetConfig {
  std::uint64_t seed = 0;
  std::size_t canvas_size = 48;
  std::size_t patch_size = 16;
  float background_value = 0.5f;
  /// Per-class image counts for train, val, test.
  std::array<std::size_t, 3> per_class{300, 50, 50};
  std::vector<CompositeClass> classes = default_classes();

  std::size_t count(Split s) const { return per_class[static_cast<std::size_t>(s)]; }
  /// Throws ValidationError listing every problem.
  void validate() const;
};

struct DatasetManifest {
  DatasetConfig config;
  std::string content_hash;
  /// Relative tensor file per (split, class), [count, 3, S, S].
  std::vector<std::vector<std::string>> files;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

struct ImageSeeds {
  std::uint64_t glyph_a, glyph_b, placement;
};

/// Seeds of image `index` of `class_id` in `split`; a pure function of its
/// arguments, so generation order does not matter.
ImageSeeds image_seeds(std::uint64_t global_seed, std::size_t class_id, Split split, std::size_t index);

/// Places two patches at uniformly sampled non-overlapping positions on a
/// background canvas. Throws ValidationError after 100 failed placements.
Tensor compose_image(const CompositeClass& cls, std::uint64_t seed_a, std::uint64_t seed_b,
                     std::uint64_t placement_seed, const DatasetConfig& config);

/// Bounding boxes (x, y) of the two patches chosen by compose_image.
std::array<std::pair<std::size_t, std::size_t>, 2> place_patches(std::uint64_t placement_seed,
                                                                  const DatasetConfig& config);

/// Model input scaling: (x - 0.5) / 0.25, so the background maps to zero.
Tensor normalize(const Tensor& image);

/// Images and labels of one split, already normalized for the model.
struct SplitData {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
};

/// In-memory dataset: classes plus normalized split data.
struct ConceptDataset {
  DatasetConfig config;
  std::string content_hash;
  std::array<SplitData, 3> splits;

  const SplitData& split(Split s) const { return splits[static_cast<std::size_t>(s)]; }
  const std::vector<CompositeClass>& classes() const { return config.classes; }
  /// Classes containing / not containing `concept_id`.
  std::vector<std::size_t> positive_classes(std::size_t concept_id) const;
  std::vector<std::size_t> negative_classes(std::size_t concept_id) const;
};

/// Raw (unnormalized) images of one split-class in index order.
std::vector<Tensor> render_split_class(const DatasetConfig& config, Split split, std::size_t class_id);

/// Generates every image in memory (parallel over images).
ConceptDataset materialize(const DatasetConfig& config);

/// Writes images as tensor files plus `manifest.json` under `dir`.
DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& dir);

/// Reads a generated dataset and verifies its content hash.
ConceptDataset load_dataset(const std::filesystem::path& dir);

/// `n` composites each holding two instances of `concept_id` (raw pixels).
std::vector<Tensor> concept_probe_set(std::size_t concept_id, std::size_t n, const DatasetConfig& config,
                                      std::uint64_t seed);

/// Writes an 8-bit RGB PNG of a [3, H, W] image with values in [0, 1].
void export_png(const Tensor& image, const std::filesystem::path& path);

}  // namespace circuitlens::synthset
