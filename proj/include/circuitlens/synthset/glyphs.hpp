#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "circuitlens/numerics/tensor.hpp"

namespace circuitlens::synthset {

using numerics::Tensor;

enum class GlyphKind { disk, cross, stripes, checker, ring, triangle, lbar, dotgrid, gradient, chevron };

constexpr std::size_t kNumConcepts = 10;

using Rgb = std::array<float, 3>;

struct Concept {
  std::size_t id = 0;
  GlyphKind glyph_kind = GlyphKind::disk;
  std::string_view name;
  /// Primary fill and secondary color (used by the gradient glyph).
  std::array<Rgb, 2> palette{};
};

/// The ten concepts; concept i has glyph kind i and its own palette.
const std::array<Concept, kNumConcepts>& concepts();
const Concept& concept_by_id(std::size_t id);

/// Renders one instance of `glyph_concept` as a [3, P, P] patch with values in
/// [0, 1]. The instance seed controls position jitter, scale (within 20%),
/// rotation and per-channel color jitter. The patch backdrop is a gray 0.03 to
/// 0.05 away from `canvas_background`: faint, yet never equal to it, so a
/// placed patch covers exactly P*P non-background pixels.
Tensor render_glyph(const Concept& glyph_concept, std::uint64_t instance_seed, std::size_t patch_size,
                    float canvas_background = 0.5f);

}  // namespace circuitlens::synthset
