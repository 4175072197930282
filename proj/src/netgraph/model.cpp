#include "circuitlens/netgraph/model.hpp"

#include <set>

#include "circuitlens/common/error.hpp"
#include "circuitlens/numerics/ops.hpp"

namespace circuitlens::netgraph {

namespace nx = numerics;

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::pool: return "pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (LayerKind k : {LayerKind::conv, LayerKind::relu, LayerKind::pool, LayerKind::flatten, LayerKind::dense,
                      LayerKind::softmax}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown layer kind '" + std::string(name) + "'", {{"kind", name}});
}

namespace {

[[noreturn]] void layer_error(const LayerSpec& l, const std::string& why) {
  throw ValidationError("layer '" + l.name + "' (" + std::string(to_string(l.kind)) + "): " + why,
                        {{"layer", l.name}});
}

Shape infer_shape(const LayerSpec& l, const Shape& in) {
  switch (l.kind) {
    case LayerKind::conv: {
      if (in.size() != 3) layer_error(l, "expects [C, H, W] input, got " + nx::shape_string(in));
      if (!l.weight || l.weight->rank() != 4) layer_error(l, "needs a [out, in, kh, kw] weight");
      const Shape& w = l.weight->shape();
      if (w[1] != in[0]) layer_error(l, "weight " + nx::shape_string(w) + " does not fit input " + nx::shape_string(in));
      if (l.stride == 0) layer_error(l, "stride must be positive");
      if (w[2] > in[1] + 2 * l.padding || w[3] > in[2] + 2 * l.padding) layer_error(l, "kernel larger than padded input");
      if (l.bias && l.bias->shape() != Shape{w[0]}) layer_error(l, "bias must be [" + std::to_string(w[0]) + "]");
      return {w[0], (in[1] + 2 * l.padding - w[2]) / l.stride + 1, (in[2] + 2 * l.padding - w[3]) / l.stride + 1};
    }
    case LayerKind::relu:
    case LayerKind::softmax:
      if (l.kind == LayerKind::softmax && in.size() != 1) layer_error(l, "expects a 1-D input");
      return in;
    case LayerKind::pool:
      if (in.size() != 3) layer_error(l, "expects [C, H, W] input, got " + nx::shape_string(in));
      if (l.global_pool) return {in[0]};
      if (l.pool_size == 0 || l.stride == 0) layer_error(l, "pool size and stride must be positive");
      if (l.pool_size > in[1] || l.pool_size > in[2]) layer_error(l, "pool window larger than input");
      return {in[0], (in[1] - l.pool_size) / l.stride + 1, (in[2] - l.pool_size) / l.stride + 1};
    case LayerKind::flatten:
      return {nx::shape_numel(in)};
    case LayerKind::dense: {
      if (in.size() != 1) layer_error(l, "expects a 1-D input, got " + nx::shape_string(in));
      if (!l.weight || l.weight->rank() != 2 || l.weight->dim(0) != in[0]) {
        layer_error(l, "needs a [" + std::to_string(in[0]) + ", out] weight");
      }
      const std::size_t out = l.weight->dim(1);
      if (l.bias && l.bias->shape() != Shape{out}) layer_error(l, "bias must be [" + std::to_string(out) + "]");
      return {out};
    }
  }
  layer_error(l, "unsupported kind");
}

}  // namespace

ModelGraph::ModelGraph(Shape input_shape, std::vector<LayerSpec> layers, std::vector<std::string> class_names)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), class_names_(std::move(class_names)) {
  if (layers_.empty()) throw ValidationError("model has no layers");
  std::set<std::string> names;
  Shape shape = input_shape_;
  for (auto& l : layers_) {
    if (l.name.empty()) throw ValidationError("layer with empty name");
    if (!names.insert(l.name).second) throw ValidationError("duplicate layer name '" + l.name + "'", {{"layer", l.name}});
    shape = infer_shape(l, shape);
    if (l.width == 0) l.width = shape.at(0);
    if (l.width != shape.at(0)) {
      layer_error(l, "declared width " + std::to_string(l.width) + " but output has " + std::to_string(shape[0]) +
                         " channels");
    }
    output_shapes_.push_back(shape);
  }
  if (layers_.back().width != class_names_.size()) {
    throw ValidationError("final layer width " + std::to_string(layers_.back().width) + " != number of classes " +
                              std::to_string(class_names_.size()),
                          {{"layer", layers_.back().name}});
  }
}

std::size_t ModelGraph::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].name == name) return i;
  throw ValidationError("unknown layer '" + std::string(name) + "'", {{"layer", name}});
}

bool ModelGraph::has_layer(std::string_view name) const {
  for (const auto& l : layers_)
    if (l.name == name) return true;
  return false;
}

const Shape& ModelGraph::input_shape_of(std::size_t index) const {
  return index == 0 ? input_shape_ : output_shapes_.at(index - 1);
}

Tensor ModelGraph::apply_layer(std::size_t index, const Tensor& x) const {
  const LayerSpec& l = layers_.at(index);
  if (x.shape() != input_shape_of(index)) {
    throw ShapeError("layer '" + l.name + "': input shape " + nx::shape_string(x.shape()) + " != expected " +
                         nx::shape_string(input_shape_of(index)),
                     {{"op", l.name}, {"lhs", x.shape()}, {"rhs", input_shape_of(index)}});
  }
  switch (l.kind) {
    case LayerKind::conv:
      return nx::conv2d(x, *l.weight, l.bias, l.stride, l.padding);
    case LayerKind::relu:
      return nx::relu(x);
    case LayerKind::pool:
      return l.global_pool ? nx::global_avg_pool(x) : nx::max_pool2d(x, l.pool_size, l.stride);
    case LayerKind::flatten:
      return nx::reshape(x, {x.numel()});
    case LayerKind::dense: {
      const std::size_t in = x.dim(0), out = l.weight->dim(1);
      Tensor y = nx::reshape(nx::matmul(nx::reshape(x, {1, in}), *l.weight), {out});
      return l.bias ? nx::add(y, *l.bias) : y;
    }
    case LayerKind::softmax:
      return nx::softmax(x);
  }
  throw ValidationError("unsupported layer kind");
}

std::vector<Tensor> ModelGraph::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    if (l.weight) out.push_back(*l.weight);
    if (l.bias) out.push_back(*l.bias);
  }
  return out;
}

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

ModelGraph ModelGraph::with_parameters(const std::vector<Tensor>& params) const {
  ModelGraph copy = *this;
  std::size_t i = 0;
  auto take = [&](std::optional<Tensor>& slot, const std::string& layer) {
    if (!slot) return;
    if (i >= params.size()) throw ValidationError("too few parameters for layer '" + layer + "'");
    if (params[i].shape() != slot->shape()) {
      throw ShapeError("parameter for layer '" + layer + "' has shape " + nx::shape_string(params[i].shape()) +
                           ", expected " + nx::shape_string(slot->shape()),
                       {{"op", layer}, {"lhs", params[i].shape()}, {"rhs", slot->shape()}});
    }
    slot = params[i++];
  };
  for (auto& l : copy.layers_) {
    take(l.weight, l.name);
    take(l.bias, l.name);
  }
  if (i != params.size()) throw ValidationError("too many parameters supplied");
  return copy;
}

std::optional<std::size_t> ModelGraph::weight_layer_for(std::size_t index) const {
  for (std::size_t i = index + 1; i-- > 0;) {
    if (layers_[i].weight) return i;
  }
  return std::nullopt;
}

}  // namespace circuitlens::netgraph
