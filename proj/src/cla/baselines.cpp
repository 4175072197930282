#include "circuitlens/cla/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "circuitlens/common/error.hpp"
#include "circuitlens/common/parallel.hpp"
#include "circuitlens/common/rng.hpp"
#include "circuitlens/netgraph/forward.hpp"
#include "circuitlens/numerics/tape.hpp"
#include "ranking.hpp"

namespace circuitlens::cla {

namespace {

std::vector<double> mean_over_images(std::size_t width, std::size_t n_images,
                                     const std::function<std::vector<double>(std::size_t)>& per_image) {
  std::vector<std::vector<double>> parts(n_images);
  parallel_for(n_images, [&](std::size_t x) { parts[x] = per_image(x); });
  std::vector<double> out(width, 0.0);
  for (const auto& p : parts)
    for (std::size_t m = 0; m < width; ++m) out[m] += p[m];
  for (double& v : out) v /= static_cast<double>(n_images);
  return out;
}

void require_images(Method method, const std::vector<Tensor>& images) {
  if (images.empty()) {
    throw ValidationError("method '" + std::string(to_string(method)) + "' needs sample images",
                          {{"method", to_string(method)}});
  }
}

}  // namespace

std::vector<double> max_activation_scores(const ModelGraph& model, const std::string& layer,
                                          const std::vector<Tensor>& images) {
  const std::size_t width = model.width(layer);
  return mean_over_images(width, images.size(), [&](std::size_t x) {
    auto cap = netgraph::forward_capture(model, images[x], {layer});
    const Tensor& a = cap.capture.at(layer);
    const std::size_t spatial = a.numel() / width;
    auto d = a.data();
    std::vector<double> s(width, 0.0);
    for (std::size_t m = 0; m < width; ++m)
      for (std::size_t p = 0; p < spatial; ++p) s[m] += std::abs(static_cast<double>(d[m * spatial + p]));
    return s;
  });
}

std::vector<double> weight_magnitude_scores(const ModelGraph& model, const std::string& layer) {
  const std::size_t index = model.index_of(layer);
  const auto owner = model.weight_layer_for(index);
  if (!owner) throw ValidationError("layer '" + layer + "' has no weighted layer at or before it", {{"layer", layer}});
  const auto& spec = model.layer(*owner);
  const Tensor& w = *spec.weight;
  const std::size_t width = model.width(layer);
  std::vector<double> s(width, 0.0);
  auto d = w.data();
  if (spec.kind == netgraph::LayerKind::conv) {
    const std::size_t per = w.numel() / w.dim(0);
    if (w.dim(0) != width) throw ValidationError("weight layer width differs from layer '" + layer + "'");
    for (std::size_t m = 0; m < width; ++m)
      for (std::size_t i = 0; i < per; ++i) s[m] += std::abs(static_cast<double>(d[m * per + i]));
  } else {
    const std::size_t in = w.dim(0), out = w.dim(1);
    if (out != width) throw ValidationError("weight layer width differs from layer '" + layer + "'");
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t m = 0; m < out; ++m) s[m] += std::abs(static_cast<double>(d[i * out + m]));
  }
  return s;
}

std::vector<double> output_attribution_scores(const ModelGraph& model, const std::string& layer,
                                              const std::vector<Tensor>& images,
                                              const std::set<std::size_t>& target_classes) {
  if (target_classes.empty()) throw ValidationError("output_attribution needs at least one target class");
  for (std::size_t t : target_classes) {
    if (t >= model.num_classes()) {
      throw ValidationError("target class " + std::to_string(t) + " out of range", {{"class", t}});
    }
  }
  const std::size_t width = model.width(layer);
  const std::size_t last = model.layers().size() - 1;
  const std::string& final_name = model.layer(last).name;
  return mean_over_images(width, images.size(), [&](std::size_t x) {
    auto cap = netgraph::forward_capture(model, images[x], {layer});
    const Tensor& a = cap.capture.at(layer);
    const std::size_t spatial = a.numel() / width;
    numerics::Tape tape;
    Tensor leaf = tape.variable(a);
    Tensor logits = layer == final_name ? leaf : netgraph::recompute_segment(model, layer, final_name, leaf);
    auto ad = a.data();
    std::vector<double> s(width, 0.0);
    for (std::size_t t : target_classes) {
      tape.zero_grad();
      tape.backward(netgraph::channel_norm(logits, t));
      auto g = tape.grad(leaf);
      if (!g) continue;
      auto gd = g->data();
      for (std::size_t m = 0; m < width; ++m)
        for (std::size_t p = 0; p < spatial; ++p) {
          const std::size_t idx = m * spatial + p;
          s[m] += std::abs(static_cast<double>(ad[idx])) * gd[idx] / static_cast<double>(target_classes.size());
        }
    }
    return s;
  });
}

Circuit baseline_circuit(Method method, const ModelGraph& model, const std::vector<std::string>& layers,
                         const std::vector<std::size_t>& k, const BaselineInputs& inputs) {
  if (method == Method::cla) throw ValidationError("baseline_circuit does not build CLA circuits; use build_circuit");
  if (layers.size() < 2) throw ValidationError("need at least two layers", {{"layers", layers}});
  if (k.size() != layers.size()) throw ValidationError("expected one k per layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (k[i] > model.width(layers[i])) {
      throw ValidationError("k = " + std::to_string(k[i]) + " exceeds the width " +
                                std::to_string(model.width(layers[i])) + " of layer '" + layers[i] + "'",
                            {{"layer", layers[i]}, {"k", k[i]}, {"width", model.width(layers[i])}});
    }
  }
  if (method == Method::max_activation || method == Method::output_attribution) require_images(method, inputs.images);
  if (method == Method::output_attribution && inputs.target_classes.empty()) {
    throw ValidationError("method 'output_attribution' needs target classes", {{"method", "output_attribution"}});
  }

  Circuit c;
  c.method = method;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::size_t width = model.width(layers[i]);
    NeuronSet set;
    switch (method) {
      case Method::random: {
        Rng rng(derive_seed({inputs.seed, i}));
        auto picked = rng.subset(width, k[i]);
        set.insert(picked.begin(), picked.end());
        break;
      }
      case Method::max_activation:
        set = top_k(max_activation_scores(model, layers[i], inputs.images), k[i]);
        break;
      case Method::weight_magnitude:
        set = top_k(weight_magnitude_scores(model, layers[i]), k[i]);
        break;
      case Method::output_attribution:
        set = top_k(output_attribution_scores(model, layers[i], inputs.images, inputs.target_classes), k[i]);
        break;
      case Method::cla:
        break;
    }
    c.layers.push_back({layers[i], std::move(set)});
  }
  c.edges = circuit_edges(c.layers, inputs.edge_matrices);
  c.provenance = {inputs.seed, inputs.image_set, k, 0, Termination::not_refined};
  return c;
}

}  // namespace circuitlens::cla
