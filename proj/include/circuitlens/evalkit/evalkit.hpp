#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "circuitlens/cla/circuit.hpp"
#include "circuitlens/intervene/intervene.hpp"
#include "circuitlens/synthset/dataset.hpp"
#include "json.hpp"

namespace circuitlens::evalkit {

using cla::Circuit;
using cla::NeuronSet;
using netgraph::ModelGraph;
using numerics::Tensor;

/// Layer name -> neuron set.
using LayerSets = std::map<std::string, NeuronSet>;
LayerSets layer_sets(const Circuit& circuit);

/// |A ∩ B| / |A ∪ B| over flattened (layer, index) pairs; 1 when both are
/// empty. Throws ValidationError when the layer names differ.
double iou(const LayerSets& a, const LayerSets& b);
double iou(const Circuit& a, const Circuit& b);

/// Per-layer union of two circuits' neuron sets.
LayerSets union_sets(const LayerSets& a, const LayerSets& b);

/// sum p ln(p / q) after adding 1e-9 to every entry and renormalizing.
/// Throws ValidationError on length mismatch, negative entries, or inputs that
/// do not sum to 1 within 1e-6.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

/// Spearman rank correlation with average ranks for ties. NaN when either
/// series is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

double median(std::vector<double> values);

/// Labeled evaluation inputs.
struct LabeledSet {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
};

struct KnockoutReport {
  std::size_t concept_id = 0;
  std::vector<std::size_t> k;
  std::string method;
  std::string intervention;
  std::vector<std::size_t> positive_classes;
  std::vector<std::size_t> negative_classes;
  double positive_accuracy = 0.0;
  double negative_accuracy = 0.0;
  double clean_positive_accuracy = 0.0;
  double clean_negative_accuracy = 0.0;
  /// Per class: mean logit over that class's inputs, before and after.
  std::vector<double> mean_logits_clean;
  std::vector<double> mean_logits_intervened;

  nlohmann::json to_json() const;
};

/// Accuracy on classes containing / not containing the concept, clean and
/// under edge or circuit pruning. Throws ValidationError when either class
/// partition is empty or the intervention is path_patch.
KnockoutReport knockout_eval(const ModelGraph& model, const synthset::ConceptDataset& dataset, synthset::Split split,
                             std::size_t concept_id, const Circuit& circuit, intervene::Kind intervention);

struct RedistributionReport {
  std::size_t class_index = 0;
  std::size_t pruned_concept = 0;
  std::size_t complement_concept = 0;
  std::vector<std::size_t> complement_classes;
  double clean_true_mass = 0.0;
  double true_mass = 0.0;
  /// Mean post-intervention probability on classes containing the complement.
  double complement_mass = 0.0;
  /// Entropy of the mean post-intervention distribution renormalized over the
  /// complement classes, and ln(#complement classes).
  double complement_entropy = 0.0;
  double uniform_entropy = 0.0;

  nlohmann::json to_json() const;
};

/// Inputs all come from `class_index`, which must contain `pruned_concept`.
RedistributionReport redistribution(const ModelGraph& model, const std::vector<synthset::CompositeClass>& classes,
                                    std::size_t class_index, const std::vector<Tensor>& inputs,
                                    std::size_t pruned_concept, const Circuit& circuit,
                                    intervene::Kind intervention = intervene::Kind::edge_prune);

/// iou(class circuit, concept A ∪ concept B).
double composition_overlap(const Circuit& class_circuit, const Circuit& concept_a, const Circuit& concept_b);

/// Expected-IoU baseline for composition_overlap: E|C ∩ (A ∪ B)| / E|C ∪ A ∪ B|
/// with C a uniform 2k-subset and A, B uniform k-subsets of each layer,
/// estimated from `draws` seeded draws.
double random_composition_baseline(const std::vector<std::size_t>& widths, const std::vector<std::size_t>& k,
                                   std::size_t draws, std::uint64_t seed);

struct StabilityPoint {
  std::size_t k_from = 0;
  std::size_t k_to = 0;
  double iou = 0.0;
  /// sum_l min(k) / sum_l max(k): IoU if the smaller circuit were contained.
  double containment = 0.0;
};

struct StabilityReport {
  std::vector<Circuit> circuits;
  std::vector<StabilityPoint> points;
  nlohmann::json to_json() const;
};

double containment_baseline(const std::vector<std::size_t>& k_small, const std::vector<std::size_t>& k_large);

/// One CLA circuit per k (uniform across layers, clamped to widths) from a
/// single set of attribution matrices, plus IoU between consecutive entries.
StabilityReport stability_sweep(const std::vector<cla::AttributionMatrix>& matrices,
                                const std::vector<std::size_t>& k_values, const cla::BuildOptions& options = {});

struct AblationPoint {
  std::size_t k = 0;
  double correct_probability = 0.0;
};

/// Mean correct-class probability over `inputs` after circuit_prune with the
/// CLA circuit at each k (k = 0 is the clean model).
std::vector<AblationPoint> partial_ablation_curve(const ModelGraph& model,
                                                  const std::vector<cla::AttributionMatrix>& matrices,
                                                  const std::vector<std::size_t>& k_values, const LabeledSet& inputs,
                                                  const cla::BuildOptions& options = {});

/// Mean KL(clean || patched) over inputs, each patched from `donor`.
double mean_patch_kl(const ModelGraph& model, const std::vector<Tensor>& inputs, const Circuit& circuit,
                     const Tensor& donor);

/// CSV with a fixed header for knockout reports.
std::string knockout_csv(const std::vector<KnockoutReport>& reports);
std::string ablation_csv(const std::vector<AblationPoint>& points);
std::string stability_csv(const StabilityReport& report);

}  // namespace circuitlens::evalkit
