#pragma once

#include <string_view>
#include <vector>

#include "circuitlens/cla/circuit.hpp"
#include "circuitlens/netgraph/forward.hpp"

namespace circuitlens::intervene {

using cla::Circuit;
using netgraph::InterventionPlan;
using netgraph::ModelGraph;
using numerics::Tensor;

enum class Kind { edge_prune, circuit_prune, path_patch };
std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view name);

/// Zero the circuit channels of circuit layer `pair` and restore the
/// non-circuit channels of layer `pair + 1` from the clean pass.
InterventionPlan edge_prune_plan(const ModelGraph& model, const Circuit& circuit, std::size_t pair = 0);
/// Zero circuit channels in every circuit layer and restore everything else.
InterventionPlan circuit_prune_plan(const ModelGraph& model, const Circuit& circuit);

/// Logits with information flow between circuit layers `pair` and `pair + 1`
/// cut. Throws ValidationError for circuits with fewer than two layers or
/// layers absent from the model.
Tensor edge_prune(const ModelGraph& model, const Tensor& input, const Circuit& circuit, std::size_t pair = 0);

/// Logits with every circuit channel zeroed and the rest held at clean values.
Tensor circuit_prune(const ModelGraph& model, const Tensor& input, const Circuit& circuit);

/// Logits when, for every circuit edge m -> n, the destination channel n is
/// recomputed from the source layer with channel m taken from the donor's
/// clean pass. Non-circuit channels keep the input's clean activations.
/// Throws ShapeError when donor and input shapes differ.
Tensor path_patch(const ModelGraph& model, const Tensor& input, const Circuit& circuit, const Tensor& donor);

/// Dispatch; `donor` is required only for path_patch.
Tensor apply(Kind kind, const ModelGraph& model, const Tensor& input, const Circuit& circuit,
             const Tensor* donor = nullptr);

/// Softmax in double precision.
std::vector<double> softmax(const Tensor& logits);

}  // namespace circuitlens::intervene
