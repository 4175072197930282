#include "circuitlens/netgraph/tiny_compose.hpp"

#include <cmath>

#include "circuitlens/common/rng.hpp"

namespace circuitlens::netgraph {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(seed);
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<float> v(numerics::shape_numel(shape));
  for (float& x : v) x = static_cast<float>(sd * rng.normal());
  return Tensor(std::move(shape), std::move(v));
}

LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t k, std::uint64_t seed) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::conv;
  l.width = out;
  l.weight = he_normal({out, in, k, k}, in * k * k, seed);
  l.bias = Tensor::zeros({out});
  return l;
}

LayerSpec simple(std::string name, LayerKind kind) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  return l;
}

}  // namespace

ModelGraph make_tiny_compose(std::vector<std::string> class_names, std::size_t canvas_size, std::uint64_t seed) {
  const std::size_t classes = class_names.size();
  std::vector<LayerSpec> layers;
  layers.push_back(conv("conv1", 3, 16, 5, derive_seed({seed, 1})));
  layers.push_back(simple("relu1", LayerKind::relu));
  LayerSpec pool = simple("pool1", LayerKind::pool);
  pool.pool_size = 2;
  pool.stride = 2;
  layers.push_back(pool);
  layers.push_back(conv("conv2", 16, 32, 3, derive_seed({seed, 2})));
  layers.push_back(simple("relu2", LayerKind::relu));
  layers.push_back(conv("conv3", 32, 32, 3, derive_seed({seed, 3})));
  layers.push_back(simple("relu3", LayerKind::relu));
  LayerSpec gap = simple("gap", LayerKind::pool);
  gap.global_pool = true;
  layers.push_back(gap);
  LayerSpec dense = simple("dense", LayerKind::dense);
  dense.width = classes;
  dense.weight = he_normal({32, classes}, 32, derive_seed({seed, 4}));
  dense.bias = Tensor::zeros({classes});
  layers.push_back(dense);
  return ModelGraph({3, canvas_size, canvas_size}, std::move(layers), std::move(class_names));
}

std::vector<std::string> tiny_compose_analyzed_layers() { return {"relu2", "relu3", "dense"}; }

}  // namespace circuitlens::netgraph
