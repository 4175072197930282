#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "circuitlens/netgraph/model.hpp"

namespace circuitlens::netgraph {

using ChannelSet = std::set<std::size_t>;

/// Layer name -> full activation tensor of that layer.
struct ActivationCapture {
  std::map<std::string, Tensor, std::less<>> activations;

  bool contains(std::string_view layer) const { return activations.find(layer) != activations.end(); }
  const Tensor& at(std::string_view layer) const;
};

/// Per-layer channel edits applied right after a layer computes its output:
/// zero_set channels are zeroed (or taken from donor_capture when present),
/// then restore_set channels are overwritten from the clean capture.
struct InterventionPlan {
  std::map<std::string, ChannelSet, std::less<>> zero_set;
  std::map<std::string, ChannelSet, std::less<>> restore_set;
  std::optional<ActivationCapture> donor_capture;

  bool empty() const { return zero_set.empty() && restore_set.empty(); }
};

struct CaptureResult {
  Tensor logits;
  ActivationCapture capture;
};

/// Called after layer `index` produced `activation`; returns the activation
/// the rest of the pass should see.
using LayerHook = std::function<Tensor(std::size_t index, const Tensor& activation)>;

/// Runs layers [first, last] starting from `x` (the input of layer `first`).
Tensor run_layers(const ModelGraph& model, std::size_t first, std::size_t last, Tensor x,
                  const LayerHook& hook = nullptr);

Tensor forward(const ModelGraph& model, const Tensor& input);

/// Plain forward that also records the activations of `capture_layers`.
/// Throws ValidationError for unknown layer names.
CaptureResult forward_capture(const ModelGraph& model, const Tensor& input,
                              const std::set<std::string, std::less<>>& capture_layers);

/// Captures every layer.
CaptureResult forward_capture_all(const ModelGraph& model, const Tensor& input);

/// Checks names, index ranges, zero/restore disjointness, and that `clean`
/// (and the donor capture, if any) hold every layer the plan reads from.
void validate_plan(const ModelGraph& model, const InterventionPlan& plan, const ActivationCapture& clean);

Tensor forward_intervened(const ModelGraph& model, const Tensor& input, const InterventionPlan& plan,
                          const ActivationCapture& clean);

/// Output of layer `layer` computed from `upstream`, the output of its
/// predecessor (or the model input for the first layer).
Tensor recompute_layer(const ModelGraph& model, std::string_view layer, const Tensor& upstream);

/// Output of layer `to` computed from the output of the earlier layer `from`,
/// running every layer in between.
Tensor recompute_segment(const ModelGraph& model, std::string_view from, std::string_view to,
                         const Tensor& from_activation);

/// L2 norm over all spatial positions of one channel ([C, H, W] or [C]);
/// for 1-D activations this is the absolute value of the unit.
Tensor channel_norm(const Tensor& activation, std::size_t channel);

/// `base` with the listed channels replaced by the same channels of `source`,
/// or by zeros when `source` is null.
Tensor overwrite_channels(const Tensor& base, const ChannelSet& channels, const Tensor* source);

}  // namespace circuitlens::netgraph
