#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "circuitlens/cla/attribution.hpp"

namespace circuitlens::cla {

using NeuronSet = std::set<std::size_t>;

enum class Method { cla, random, max_activation, weight_magnitude, output_attribution };
std::string_view to_string(Method method);
Method parse_method(std::string_view name);

/// How refinement re-selects a layer.
enum class SweepRule {
  /// Score each neuron against the circuit neurons of both adjacent layers and
  /// accept a new selection only when it strictly raises the objective.
  both_neighbors,
  /// Backward sweeps score against the next layer only, forward sweeps against
  /// the previous layer only; any differing selection is taken.
  one_sided,
};
std::string_view to_string(SweepRule rule);

enum class Termination { fixed_point, cycle, sweep_cap, not_refined };
std::string_view to_string(Termination t);
Termination parse_termination(std::string_view name);

struct CircuitLayer {
  std::string name;
  NeuronSet neurons;
  bool operator==(const CircuitLayer&) const = default;
};

struct Edge {
  std::string from_layer;
  std::size_t from = 0;
  std::string to_layer;
  std::size_t to = 0;
  double score = 0.0;
  bool operator==(const Edge&) const = default;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::string image_set;
  std::vector<std::size_t> k;
  std::size_t sweeps = 0;
  Termination termination = Termination::not_refined;
  bool operator==(const Provenance&) const = default;
};

struct Circuit {
  Method method = Method::cla;
  std::vector<CircuitLayer> layers;
  std::vector<Edge> edges;
  Provenance provenance;

  bool operator==(const Circuit&) const = default;
  std::vector<std::string> layer_names() const;
  const NeuronSet& neurons(std::string_view layer) const;
  /// Checks edge endpoints against the neuron sets, adjacency of edge layers,
  /// and set sizes against provenance.k when present.
  void validate() const;
};

struct BuildOptions {
  SweepRule rule = SweepRule::both_neighbors;
  std::size_t max_sweeps = 50;
  std::uint64_t seed = 0;
  std::string image_set;
};

/// Top-k neurons of layer_i ranked by sum_n attrs[m, n]; ties go to the lower
/// index. Throws ValidationError when k exceeds the width.
NeuronSet initialize_circuit(const AttributionMatrix& attrs, std::size_t k);

/// sum over adjacent layer pairs of sum_{m in S_i, n in S_i+1} attrs_i[m, n].
double circuit_objective(const std::vector<AttributionMatrix>& matrices, const std::vector<NeuronSet>& sets);

/// Initial forward selection followed by alternating backward/forward
/// refinement sweeps. Terminates at a fixed point, on a repeated circuit
/// (returning the cycle member with the largest objective), or at the sweep
/// cap. Matrices must chain: matrices[i].layer_j == matrices[i+1].layer_i.
Circuit build_circuit_from_matrices(const std::vector<AttributionMatrix>& matrices, const std::vector<std::size_t>& k,
                                    const BuildOptions& options = {});

/// Computes attribution matrices over `images` then builds the circuit.
Circuit build_circuit(const ModelGraph& model, const std::vector<std::string>& layers,
                      const std::vector<std::size_t>& k, const std::vector<Tensor>& images,
                      const BuildOptions& options = {});

/// Edges between every pair of neurons in adjacent circuit layers, scored by
/// the matching matrix (or 0 when `matrices` is empty).
std::vector<Edge> circuit_edges(const std::vector<CircuitLayer>& layers,
                                const std::vector<AttributionMatrix>& matrices = {});

/// Uniform k for every layer, clamped to each layer's width.
std::vector<std::size_t> uniform_k(const ModelGraph& model, const std::vector<std::string>& layers, std::size_t k);
/// k_i = round(fraction * width_i), at least 1 for a positive fraction.
std::vector<std::size_t> fractional_k(const ModelGraph& model, const std::vector<std::string>& layers,
                                      double fraction);

}  // namespace circuitlens::cla
