#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "circuitlens/cla/circuit.hpp"

namespace circuitlens::cla {

/// Indices of the k largest scores; ties go to the lower index.
inline NeuronSet top_k(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return NeuronSet(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
}

}  // namespace circuitlens::cla
