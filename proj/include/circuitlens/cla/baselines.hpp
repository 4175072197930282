#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "circuitlens/cla/circuit.hpp"

namespace circuitlens::cla {

struct BaselineInputs {
  /// Images for max_activation and output_attribution.
  std::vector<Tensor> images;
  /// Target classes for output_attribution.
  std::set<std::size_t> target_classes;
  std::uint64_t seed = 0;
  std::string image_set;
  /// When non-empty, used to score the circuit's edges.
  std::vector<AttributionMatrix> edge_matrices;
};

/// random: seeded uniform k-subset per layer.
/// max_activation: top-k by mean over images of sum_p |a[m, p]|.
/// weight_magnitude: top-k by the L1 norm of each neuron's incoming weights
///   (taken from the nearest weighted layer at or before the analyzed layer).
/// output_attribution: top-k by mean over images and target classes of
///   sum_p |a[m, p]| * d|logit_t| / d a[m, p].
/// Ties go to the lower index. Method::cla is rejected (use build_circuit).
Circuit baseline_circuit(Method method, const ModelGraph& model, const std::vector<std::string>& layers,
                         const std::vector<std::size_t>& k, const BaselineInputs& inputs);

/// Per-neuron score vectors used by the non-random baselines.
std::vector<double> max_activation_scores(const ModelGraph& model, const std::string& layer,
                                          const std::vector<Tensor>& images);
std::vector<double> weight_magnitude_scores(const ModelGraph& model, const std::string& layer);
std::vector<double> output_attribution_scores(const ModelGraph& model, const std::string& layer,
                                              const std::vector<Tensor>& images,
                                              const std::set<std::size_t>& target_classes);

}  // namespace circuitlens::cla
