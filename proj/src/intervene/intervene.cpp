#include "circuitlens/intervene/intervene.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "circuitlens/common/error.hpp"

namespace circuitlens::intervene {

namespace {

using netgraph::ChannelSet;

std::vector<std::size_t> check_circuit(const ModelGraph& model, const Circuit& circuit, std::size_t min_layers) {
  if (circuit.layers.size() < min_layers) {
    throw ValidationError("intervention needs a circuit with at least " + std::to_string(min_layers) + " layers",
                          {{"layers", circuit.layers.size()}});
  }
  std::vector<std::size_t> idx;
  for (const auto& l : circuit.layers) {
    if (!model.has_layer(l.name)) {
      throw ValidationError("circuit layer '" + l.name + "' is not in the model", {{"layer", l.name}});
    }
    const std::size_t i = model.index_of(l.name);
    if (!idx.empty() && i <= idx.back()) {
      throw ValidationError("circuit layers are not in model order at '" + l.name + "'", {{"layer", l.name}});
    }
    const std::size_t width = model.width(l.name);
    if (!l.neurons.empty() && *l.neurons.rbegin() >= width) {
      throw ValidationError("circuit neuron " + std::to_string(*l.neurons.rbegin()) + " exceeds the width of '" +
                                l.name + "'",
                            {{"layer", l.name}, {"neuron", *l.neurons.rbegin()}, {"width", width}});
    }
    idx.push_back(i);
  }
  return idx;
}

ChannelSet complement(std::size_t width, const ChannelSet& s) {
  ChannelSet out;
  for (std::size_t c = 0; c < width; ++c)
    if (!s.count(c)) out.insert(c);
  return out;
}

std::set<std::string, std::less<>> layer_set(const Circuit& c) {
  std::set<std::string, std::less<>> out;
  for (const auto& l : c.layers) out.insert(l.name);
  return out;
}

}  // namespace

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::edge_prune: return "edge";
    case Kind::circuit_prune: return "circuit";
    case Kind::path_patch: return "patch";
  }
  return "?";
}

Kind parse_kind(std::string_view name) {
  if (name == "edge" || name == "edge_prune") return Kind::edge_prune;
  if (name == "circuit" || name == "circuit_prune") return Kind::circuit_prune;
  if (name == "patch" || name == "path_patch") return Kind::path_patch;
  throw ValidationError("unknown intervention '" + std::string(name) + "' (expected edge, circuit or patch)",
                        {{"intervention", name}});
}

InterventionPlan edge_prune_plan(const ModelGraph& model, const Circuit& circuit, std::size_t pair) {
  check_circuit(model, circuit, 2);
  if (pair + 1 >= circuit.layers.size()) {
    throw ValidationError("edge prune pair " + std::to_string(pair) + " out of range", {{"pair", pair}});
  }
  const auto& l1 = circuit.layers[pair];
  const auto& l2 = circuit.layers[pair + 1];
  InterventionPlan plan;
  plan.zero_set[l1.name] = l1.neurons;
  plan.restore_set[l2.name] = complement(model.width(l2.name), l2.neurons);
  return plan;
}

InterventionPlan circuit_prune_plan(const ModelGraph& model, const Circuit& circuit) {
  check_circuit(model, circuit, 1);
  InterventionPlan plan;
  for (const auto& l : circuit.layers) {
    plan.zero_set[l.name] = l.neurons;
    plan.restore_set[l.name] = complement(model.width(l.name), l.neurons);
  }
  return plan;
}

Tensor edge_prune(const ModelGraph& model, const Tensor& input, const Circuit& circuit, std::size_t pair) {
  auto plan = edge_prune_plan(model, circuit, pair);
  auto clean = netgraph::forward_capture(model, input, {circuit.layers[pair + 1].name});
  return netgraph::forward_intervened(model, input, plan, clean.capture);
}

Tensor circuit_prune(const ModelGraph& model, const Tensor& input, const Circuit& circuit) {
  auto plan = circuit_prune_plan(model, circuit);
  auto clean = netgraph::forward_capture(model, input, layer_set(circuit));
  return netgraph::forward_intervened(model, input, plan, clean.capture);
}

Tensor path_patch(const ModelGraph& model, const Tensor& input, const Circuit& circuit, const Tensor& donor) {
  if (donor.shape() != input.shape()) {
    throw ShapeError("path_patch: donor shape " + numerics::shape_string(donor.shape()) + " != input shape " +
                         numerics::shape_string(input.shape()),
                     {{"input", input.shape()}, {"donor", donor.shape()}});
  }
  const auto idx = check_circuit(model, circuit, 1);
  const auto layers = layer_set(circuit);
  auto clean = netgraph::forward_capture(model, input, layers);
  auto donor_cap = netgraph::forward_capture(model, donor, layers);

  Tensor state = clean.capture.at(circuit.layers[0].name);
  for (std::size_t i = 0; i + 1 < circuit.layers.size(); ++i) {
    const std::string& from = circuit.layers[i].name;
    const std::string& to = circuit.layers[i + 1].name;
    // Destinations sharing the same donor sources share one recomputation.
    std::map<ChannelSet, ChannelSet> by_sources;
    {
      std::map<std::size_t, ChannelSet> sources;
      for (const auto& e : circuit.edges)
        if (e.from_layer == from && e.to_layer == to) sources[e.to].insert(e.from);
      for (auto& [n, src] : sources) by_sources[src].insert(n);
    }
    Tensor next = clean.capture.at(to);
    for (const auto& [src, dests] : by_sources) {
      Tensor patched_in = netgraph::overwrite_channels(state, src, &donor_cap.capture.at(from));
      Tensor out = netgraph::recompute_segment(model, from, to, patched_in);
      next = netgraph::overwrite_channels(next, dests, &out);
    }
    state = std::move(next);
  }
  const std::size_t last = model.layers().size() - 1;
  if (idx.back() == last) return state;
  return netgraph::run_layers(model, idx.back() + 1, last, state);
}

Tensor apply(Kind kind, const ModelGraph& model, const Tensor& input, const Circuit& circuit, const Tensor* donor) {
  switch (kind) {
    case Kind::edge_prune: return edge_prune(model, input, circuit);
    case Kind::circuit_prune: return circuit_prune(model, input, circuit);
    case Kind::path_patch:
      if (!donor) throw ValidationError("path patching needs a donor input");
      return path_patch(model, input, circuit, *donor);
  }
  throw ValidationError("unknown intervention kind");
}

std::vector<double> softmax(const Tensor& logits) {
  auto d = logits.data();
  std::vector<double> p(d.begin(), d.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) z += (v = std::exp(v - mx));
  for (double& v : p) v /= z;
  return p;
}

}  // namespace circuitlens::intervene
