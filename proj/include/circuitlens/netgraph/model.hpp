#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "circuitlens/numerics/tensor.hpp"

namespace circuitlens::netgraph {

using numerics::Shape;
using numerics::Tensor;

enum class LayerKind { conv, relu, pool, flatten, dense, softmax };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  /// Channel count of the layer's output (units for 1-D outputs).
  std::size_t width = 0;
  std::size_t stride = 1;     // conv, pool
  std::size_t padding = 0;    // conv
  std::size_t pool_size = 2;  // pool, unless global_pool
  /// Global average pooling [C, H, W] -> [C].
  bool global_pool = false;
  std::optional<Tensor> weight;  // conv [out, in, kh, kw]; dense [in, out]
  std::optional<Tensor> bias;    // [out]
};

/// Ordered feed-forward stack of named layers. Construction infers and checks
/// every layer's output shape, so a ModelGraph that exists is consistent. The
/// graph is immutable; concurrent forward passes may share it.
class ModelGraph {
 public:
  ModelGraph(Shape input_shape, std::vector<LayerSpec> layers, std::vector<std::string> class_names);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  std::size_t num_classes() const noexcept { return class_names_.size(); }

  const LayerSpec& layer(std::size_t index) const { return layers_.at(index); }
  /// Throws ValidationError("unknown layer ...") for names not in the graph.
  std::size_t index_of(std::string_view name) const;
  bool has_layer(std::string_view name) const;

  /// Output shape of layer `index`; input_shape() for the input of layer 0.
  const Shape& output_shape(std::size_t index) const { return output_shapes_.at(index); }
  const Shape& input_shape_of(std::size_t index) const;
  std::size_t width(std::string_view name) const { return layers_[index_of(name)].width; }

  /// Runs a single layer on `x` (shape must equal input_shape_of(index)).
  Tensor apply_layer(std::size_t index, const Tensor& x) const;

  /// Weight/bias tensors in layer order (weight before bias).
  std::vector<Tensor> parameters() const;
  /// Copy of this graph with parameters replaced positionally. Shapes must
  /// match. Used to put parameters on a tape for training.
  ModelGraph with_parameters(const std::vector<Tensor>& params) const;
  std::size_t parameter_count() const;

  /// Index of the nearest layer at or before `index` that owns a weight.
  std::optional<std::size_t> weight_layer_for(std::size_t index) const;

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<std::string> class_names_;
  std::vector<Shape> output_shapes_;
};

}  // namespace circuitlens::netgraph
