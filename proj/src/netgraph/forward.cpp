#include "circuitlens/netgraph/forward.hpp"

#include <algorithm>

#include "circuitlens/common/error.hpp"
#include "circuitlens/numerics/ops.hpp"

namespace circuitlens::netgraph {

namespace nx = numerics;

const Tensor& ActivationCapture::at(std::string_view layer) const {
  auto it = activations.find(layer);
  if (it == activations.end()) {
    throw ValidationError("capture has no activation for layer '" + std::string(layer) + "'", {{"layer", layer}});
  }
  return it->second;
}

Tensor run_layers(const ModelGraph& model, std::size_t first, std::size_t last, Tensor x, const LayerHook& hook) {
  for (std::size_t i = first; i <= last; ++i) {
    x = model.apply_layer(i, x);
    if (hook) x = hook(i, x);
  }
  return x;
}

Tensor forward(const ModelGraph& model, const Tensor& input) {
  return run_layers(model, 0, model.layers().size() - 1, input);
}

CaptureResult forward_capture(const ModelGraph& model, const Tensor& input,
                              const std::set<std::string, std::less<>>& capture_layers) {
  for (const auto& name : capture_layers) model.index_of(name);
  CaptureResult result;
  result.logits = run_layers(model, 0, model.layers().size() - 1, input, [&](std::size_t i, const Tensor& a) {
    const auto& name = model.layer(i).name;
    if (capture_layers.count(name)) result.capture.activations.emplace(name, a);
    return a;
  });
  return result;
}

CaptureResult forward_capture_all(const ModelGraph& model, const Tensor& input) {
  std::set<std::string, std::less<>> all;
  for (const auto& l : model.layers()) all.insert(l.name);
  return forward_capture(model, input, all);
}

Tensor overwrite_channels(const Tensor& base, const ChannelSet& channels, const Tensor* source) {
  if (channels.empty()) return base;
  if (base.rank() == 0) throw ShapeError("overwrite_channels: 0-dimensional activation");
  if (source && source->shape() != base.shape()) {
    throw ShapeError("overwrite_channels: source shape " + nx::shape_string(source->shape()) + " != " +
                         nx::shape_string(base.shape()),
                     {{"op", "overwrite_channels"}, {"lhs", base.shape()}, {"rhs", source->shape()}});
  }
  const std::size_t C = base.dim(0);
  const std::size_t stride = base.numel() / C;
  std::vector<float> out = base.to_vector();
  for (std::size_t c : channels) {
    if (c >= C) {
      throw ValidationError("channel " + std::to_string(c) + " out of range (width " + std::to_string(C) + ")",
                            {{"channel", c}, {"width", C}});
    }
    if (source) {
      auto src = source->data();
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(c * stride), stride,
                  out.begin() + static_cast<std::ptrdiff_t>(c * stride));
    } else {
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(c * stride), stride, 0.0f);
    }
  }
  return Tensor(base.shape(), std::move(out));
}

void validate_plan(const ModelGraph& model, const InterventionPlan& plan, const ActivationCapture& clean) {
  auto check_indices = [&](const std::string& layer, const ChannelSet& set) {
    const std::size_t width = model.width(layer);
    for (std::size_t c : set) {
      if (c >= width) {
        throw ValidationError("intervention on layer '" + layer + "': channel " + std::to_string(c) +
                                  " >= width " + std::to_string(width),
                              {{"layer", layer}, {"channel", c}, {"width", width}});
      }
    }
  };
  for (const auto& [layer, set] : plan.zero_set) {
    check_indices(layer, set);
    if (plan.donor_capture && !set.empty() && !plan.donor_capture->contains(layer)) {
      throw ValidationError("donor capture lacks layer '" + layer + "'", {{"layer", layer}});
    }
  }
  for (const auto& [layer, set] : plan.restore_set) {
    check_indices(layer, set);
    if (!set.empty() && !clean.contains(layer)) {
      throw ValidationError("restore_set references layer '" + layer + "' missing from the clean capture",
                            {{"layer", layer}});
    }
    auto z = plan.zero_set.find(layer);
    if (z != plan.zero_set.end()) {
      for (std::size_t c : set) {
        if (z->second.count(c)) {
          throw ValidationError("channel " + std::to_string(c) + " of layer '" + layer +
                                    "' is in both zero_set and restore_set",
                                {{"layer", layer}, {"channel", c}});
        }
      }
    }
  }
}

Tensor forward_intervened(const ModelGraph& model, const Tensor& input, const InterventionPlan& plan,
                          const ActivationCapture& clean) {
  validate_plan(model, plan, clean);
  return run_layers(model, 0, model.layers().size() - 1, input, [&](std::size_t i, const Tensor& a) {
    const std::string& name = model.layer(i).name;
    Tensor out = a;
    if (auto z = plan.zero_set.find(name); z != plan.zero_set.end()) {
      const Tensor* donor = plan.donor_capture ? &plan.donor_capture->at(name) : nullptr;
      out = overwrite_channels(out, z->second, donor);
    }
    if (auto r = plan.restore_set.find(name); r != plan.restore_set.end() && !r->second.empty()) {
      out = overwrite_channels(out, r->second, &clean.at(name));
    }
    return out;
  });
}

Tensor recompute_layer(const ModelGraph& model, std::string_view layer, const Tensor& upstream) {
  return model.apply_layer(model.index_of(layer), upstream);
}

Tensor recompute_segment(const ModelGraph& model, std::string_view from, std::string_view to,
                         const Tensor& from_activation) {
  const std::size_t i = model.index_of(from);
  const std::size_t j = model.index_of(to);
  if (j <= i) {
    throw ValidationError("layer '" + std::string(to) + "' does not follow '" + std::string(from) + "'",
                          {{"from", from}, {"to", to}});
  }
  return run_layers(model, i + 1, j, from_activation);
}

Tensor channel_norm(const Tensor& activation, std::size_t c) { return nx::l2_norm(nx::channel(activation, c)); }

}  // namespace circuitlens::netgraph
