#include "circuitlens/cla/attribution.hpp"

#include <cmath>

#include "circuitlens/common/error.hpp"
#include "circuitlens/common/parallel.hpp"
#include "circuitlens/netgraph/forward.hpp"
#include "circuitlens/numerics/tape.hpp"

namespace circuitlens::cla {

namespace {

void check_order(const ModelGraph& model, std::string_view layer_i, std::string_view layer_j) {
  if (model.index_of(layer_j) <= model.index_of(layer_i)) {
    throw ValidationError("attribution pair (" + std::string(layer_i) + ", " + std::string(layer_j) +
                              "): layer_j must come after layer_i",
                          {{"layer_i", layer_i}, {"layer_j", layer_j}});
  }
}

void check_layers(const ModelGraph& model, const std::vector<std::string>& layers) {
  if (layers.size() < 2) throw ValidationError("need at least two layers", {{"layers", layers}});
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) check_order(model, layers[i], layers[i + 1]);
}

}  // namespace

double AttributionMatrix::row_sum(std::size_t m) const {
  double s = 0.0;
  for (std::size_t n = 0; n < width_j; ++n) s += values[m * width_j + n];
  return s;
}

std::vector<double> attribution_single(const ModelGraph& model, std::string_view layer_i, std::string_view layer_j,
                                       const Tensor& activation_i) {
  check_order(model, layer_i, layer_j);
  const std::size_t wi = model.width(layer_i), wj = model.width(layer_j);
  const std::size_t spatial = activation_i.numel() / wi;
  std::vector<double> out(wi * wj, 0.0);
  auto a = activation_i.data();
  bool any_nonzero = false;
  for (float v : a) any_nonzero |= v != 0.0f;
  if (!any_nonzero) return out;

  numerics::Tape tape;
  Tensor leaf = tape.variable(activation_i);
  Tensor next = netgraph::recompute_segment(model, layer_i, layer_j, leaf);
  for (std::size_t n = 0; n < wj; ++n) {
    Tensor s = netgraph::channel_norm(next, n);
    tape.zero_grad();
    tape.backward(s);
    auto g = tape.grad(leaf);
    if (!g) continue;
    auto gd = g->data();
    for (std::size_t m = 0; m < wi; ++m) {
      double acc = 0.0;
      for (std::size_t p = 0; p < spatial; ++p) {
        const std::size_t idx = m * spatial + p;
        acc += std::abs(static_cast<double>(a[idx])) * static_cast<double>(gd[idx]);
      }
      out[m * wj + n] = acc;
    }
  }
  return out;
}

std::vector<AttributionMatrix> attribution_matrices(const ModelGraph& model, const std::vector<std::string>& layers,
                                                    const std::vector<Tensor>& images) {
  check_layers(model, layers);
  if (images.empty()) throw ValidationError("attribution needs at least one image");
  const std::size_t pairs = layers.size() - 1;
  std::set<std::string, std::less<>> capture_set(layers.begin(), layers.end() - 1);

  std::vector<std::vector<std::vector<double>>> per_image(images.size());
  parallel_for(images.size(), [&](std::size_t x) {
    auto cap = netgraph::forward_capture(model, images[x], capture_set);
    per_image[x].resize(pairs);
    for (std::size_t k = 0; k < pairs; ++k) {
      per_image[x][k] = attribution_single(model, layers[k], layers[k + 1], cap.capture.at(layers[k]));
    }
  });

  std::vector<AttributionMatrix> out;
  for (std::size_t k = 0; k < pairs; ++k) {
    AttributionMatrix m{layers[k], layers[k + 1], model.width(layers[k]), model.width(layers[k + 1]),
                        images.size(), {}};
    m.values.assign(m.width_i * m.width_j, 0.0);
    for (const auto& img : per_image)
      for (std::size_t e = 0; e < m.values.size(); ++e) m.values[e] += img[k][e];
    for (double& v : m.values) v /= static_cast<double>(images.size());
    out.push_back(std::move(m));
  }
  return out;
}

AttributionMatrix attribution_matrix(const ModelGraph& model, std::string_view layer_i, std::string_view layer_j,
                                     const std::vector<Tensor>& images) {
  return attribution_matrices(model, {std::string(layer_i), std::string(layer_j)}, images).front();
}

}  // namespace circuitlens::cla
