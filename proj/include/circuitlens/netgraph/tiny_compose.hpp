#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "circuitlens/netgraph/model.hpp"

namespace circuitlens::netgraph {

/// Reference classifier:
///   conv1(3->16, 5x5) relu1 pool1(2) conv2(16->32, 3x3) relu2
///   conv3(32->32, 3x3) relu3 gap(global average) dense(32->classes)
/// All convolutions are unpadded. Weights use seeded He-normal init, biases
/// start at zero. The softmax head is applied by consumers of the logits.
ModelGraph make_tiny_compose(std::vector<std::string> class_names, std::size_t canvas_size, std::uint64_t seed);

/// The three layers circuits are extracted from: relu2, relu3, dense.
std::vector<std::string> tiny_compose_analyzed_layers();

}  // namespace circuitlens::netgraph
