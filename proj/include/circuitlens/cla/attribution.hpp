#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "circuitlens/netgraph/model.hpp"

namespace circuitlens::cla {

using netgraph::ModelGraph;
using numerics::Tensor;

/// attrs[m, n]: mean over images of sum_p |a_i[m, p]| * d||l_j,n(a_i)|| / d a_i[m, p].
/// Scores are signed.
struct AttributionMatrix {
  std::string layer_i;
  std::string layer_j;
  std::size_t width_i = 0;
  std::size_t width_j = 0;
  std::size_t num_images = 0;
  std::vector<double> values;  // row-major [width_i, width_j]

  double at(std::size_t m, std::size_t n) const { return values[m * width_j + n]; }
  /// sum_n attrs[m, n]
  double row_sum(std::size_t m) const;
  bool operator==(const AttributionMatrix&) const = default;
};

/// Per-image attribution of `layer_i` channels to `layer_j` channels given the
/// activation of layer_i. Only the layers after layer_i up to layer_j are
/// recomputed, so the gradient stops at a_i.
std::vector<double> attribution_single(const ModelGraph& model, std::string_view layer_i, std::string_view layer_j,
                                       const Tensor& activation_i);

/// Mean attribution over `images` (parallel over images, reduced in image
/// order). Throws ValidationError when layer_j does not come after layer_i or
/// the image list is empty.
AttributionMatrix attribution_matrix(const ModelGraph& model, std::string_view layer_i, std::string_view layer_j,
                                     const std::vector<Tensor>& images);

/// Matrices for every consecutive pair of `layers`, sharing one forward pass
/// per image.
std::vector<AttributionMatrix> attribution_matrices(const ModelGraph& model, const std::vector<std::string>& layers,
                                                    const std::vector<Tensor>& images);

}  // namespace circuitlens::cla
