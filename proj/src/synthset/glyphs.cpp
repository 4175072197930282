#include "circuitlens/synthset/glyphs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "circuitlens/common/error.hpp"
#include "circuitlens/common/rng.hpp"

namespace circuitlens::synthset {

namespace {

constexpr int kSuper = 3;  // supersampling factor per axis

// Shape membership in the glyph's own frame, u and v in roughly [-1, 1]
// (v grows downward).
bool inside(GlyphKind kind, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (kind) {
    case GlyphKind::disk:
      return u * u + v * v <= 0.62 * 0.62;
    case GlyphKind::cross:
      return (au <= 0.18 && av <= 0.78) || (av <= 0.18 && au <= 0.78);
    case GlyphKind::stripes: {
      if (au > 0.78 || av > 0.78) return false;
      const double t = (u + v) * 2.4;
      return t - std::floor(t) < 0.5;
    }
    case GlyphKind::checker: {
      if (au > 0.76 || av > 0.76) return false;
      const long cu = static_cast<long>(std::floor((u + 0.76) / 0.38));
      const long cv = static_cast<long>(std::floor((v + 0.76) / 0.38));
      return (cu + cv) % 2 == 0;
    }
    case GlyphKind::ring: {
      const double r2 = u * u + v * v;
      return r2 >= 0.36 * 0.36 && r2 <= 0.74 * 0.74;
    }
    case GlyphKind::triangle:
      // Apex up at v = -0.75, base at v = 0.62.
      return v >= -0.75 && v <= 0.62 && au <= (v + 0.75) * 0.55;
    case GlyphKind::lbar:
      return (u >= -0.65 && u <= -0.3 && av <= 0.72) || (au <= 0.65 && v >= 0.38 && v <= 0.72);
    case GlyphKind::dotgrid: {
      for (double cu : {-0.5, 0.0, 0.5})
        for (double cv : {-0.5, 0.0, 0.5})
          if ((u - cu) * (u - cu) + (v - cv) * (v - cv) <= 0.17 * 0.17) return true;
      return false;
    }
    case GlyphKind::gradient:
      return au <= 0.7 && av <= 0.7;
    case GlyphKind::chevron:
      return au <= 0.72 && std::abs(v - (-0.35 + 0.9 * au)) <= 0.2;
  }
  return false;
}

Rgb jitter(const Rgb& c, Rng& rng) {
  Rgb out{};
  for (std::size_t ch = 0; ch < 3; ++ch)
    out[ch] = static_cast<float>(std::clamp(c[ch] + rng.uniform(-0.06, 0.06), 0.0, 1.0));
  return out;
}

}  // namespace

const std::array<Concept, kNumConcepts>& concepts() {
  static const std::array<Concept, kNumConcepts> table{{
      {0, GlyphKind::disk, "disk", {{{0.95f, 0.10f, 0.10f}, {0.95f, 0.10f, 0.10f}}}},
      {1, GlyphKind::cross, "cross", {{{0.10f, 0.20f, 0.95f}, {0.10f, 0.20f, 0.95f}}}},
      {2, GlyphKind::stripes, "stripes", {{{0.95f, 0.90f, 0.10f}, {0.95f, 0.90f, 0.10f}}}},
      {3, GlyphKind::checker, "checker", {{{0.10f, 0.75f, 0.15f}, {0.10f, 0.75f, 0.15f}}}},
      {4, GlyphKind::ring, "ring", {{{0.95f, 0.10f, 0.95f}, {0.95f, 0.10f, 0.95f}}}},
      {5, GlyphKind::triangle, "triangle", {{{0.10f, 0.90f, 0.95f}, {0.10f, 0.90f, 0.95f}}}},
      {6, GlyphKind::lbar, "lbar", {{{1.00f, 0.50f, 0.00f}, {1.00f, 0.50f, 0.00f}}}},
      {7, GlyphKind::dotgrid, "dotgrid", {{{0.35f, 0.00f, 0.55f}, {0.35f, 0.00f, 0.55f}}}},
      {8, GlyphKind::gradient, "gradient", {{{0.60f, 1.00f, 0.30f}, {0.00f, 0.40f, 0.40f}}}},
      {9, GlyphKind::chevron, "chevron", {{{1.00f, 0.75f, 0.85f}, {1.00f, 0.75f, 0.85f}}}},
  }};
  return table;
}

const Concept& concept_by_id(std::size_t id) {
  if (id >= kNumConcepts) {
    throw ValidationError("concept id " + std::to_string(id) + " out of range", {{"concept", id}});
  }
  return concepts()[id];
}

Tensor render_glyph(const Concept& glyph_concept, std::uint64_t instance_seed, std::size_t patch_size,
                    float canvas_background) {
  if (patch_size < 4) throw ValidationError("patch_size must be at least 4", {{"patch_size", patch_size}});
  Rng rng(derive_seed({instance_seed, glyph_concept.id}));
  const double scale = rng.uniform(0.8, 1.2);
  const double angle = rng.uniform(-15.0, 15.0) * std::numbers::pi / 180.0;
  const double tx = rng.uniform(-0.1, 0.1), ty = rng.uniform(-0.1, 0.1);
  const double offset = rng.uniform(0.03, 0.05);
  const float backdrop =
      static_cast<float>(canvas_background >= 0.05f ? canvas_background - offset : canvas_background + offset);
  const Rgb c0 = jitter(glyph_concept.palette[0], rng);
  const Rgb c1 = jitter(glyph_concept.palette[1], rng);
  const double cs = std::cos(angle), sn = std::sin(angle);

  const std::size_t P = patch_size;
  const double half = static_cast<double>(P) / 2.0;
  std::vector<float> out(3 * P * P);
  for (std::size_t py = 0; py < P; ++py) {
    for (std::size_t px = 0; px < P; ++px) {
      double acc[3] = {0, 0, 0};
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double x = (static_cast<double>(px) + (sx + 0.5) / kSuper - half) / half - tx;
          const double y = (static_cast<double>(py) + (sy + 0.5) / kSuper - half) / half - ty;
          const double u = (cs * x + sn * y) / scale;
          const double v = (-sn * x + cs * y) / scale;
          if (!inside(glyph_concept.glyph_kind, u, v)) continue;
          ++hits;
          const double t = glyph_concept.glyph_kind == GlyphKind::gradient ? std::clamp((u + 0.7) / 1.4, 0.0, 1.0) : 0.0;
          for (std::size_t ch = 0; ch < 3; ++ch) acc[ch] += (1.0 - t) * c0[ch] + t * c1[ch];
        }
      }
      const double n = kSuper * kSuper;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double alpha = hits / n;
        const double glyph = hits ? acc[ch] / hits : 0.0;
        out[(ch * P + py) * P + px] = static_cast<float>(alpha * glyph + (1.0 - alpha) * backdrop);
      }
    }
  }
  return Tensor({3, P, P}, std::move(out));
}

}  // namespace circuitlens::synthset
