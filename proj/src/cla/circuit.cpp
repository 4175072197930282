#include "circuitlens/cla/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "circuitlens/common/error.hpp"
#include "ranking.hpp"

namespace circuitlens::cla {

namespace {

constexpr double kImprovementTolerance = 1e-12;

double set_score(const std::vector<double>& scores, const NeuronSet& s) {
  double total = 0.0;
  for (std::size_t m : s) total += scores[m];
  return total;
}

struct Chain {
  const std::vector<AttributionMatrix>& mats;
  std::vector<std::size_t> widths;

  std::size_t size() const { return widths.size(); }

  // Attribution of layer i's neurons to the selected neurons of layer i+1.
  std::vector<double> next_term(std::size_t i, const NeuronSet& next) const {
    const auto& A = mats[i];
    std::vector<double> s(A.width_i, 0.0);
    for (std::size_t m = 0; m < A.width_i; ++m)
      for (std::size_t n : next) s[m] += A.at(m, n);
    return s;
  }

  // Attribution from the selected neurons of layer i-1 to layer i's neurons.
  std::vector<double> prev_term(std::size_t i, const NeuronSet& prev) const {
    const auto& A = mats[i - 1];
    std::vector<double> s(A.width_j, 0.0);
    for (std::size_t n = 0; n < A.width_j; ++n)
      for (std::size_t m : prev) s[n] += A.at(m, n);
    return s;
  }
};

std::vector<std::size_t> check_chain(const std::vector<AttributionMatrix>& matrices, const std::vector<std::size_t>& k) {
  if (matrices.empty()) throw ValidationError("circuit construction needs attribution matrices for at least one layer pair");
  std::vector<std::size_t> widths{matrices[0].width_i};
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    const auto& A = matrices[i];
    if (A.values.size() != A.width_i * A.width_j) {
      throw ValidationError("attribution matrix (" + A.layer_i + ", " + A.layer_j + ") has inconsistent size",
                            {{"layer_i", A.layer_i}, {"layer_j", A.layer_j}});
    }
    if (i > 0 && (matrices[i - 1].layer_j != A.layer_i || matrices[i - 1].width_j != A.width_i)) {
      throw ValidationError("attribution matrices do not chain: (" + matrices[i - 1].layer_i + ", " +
                                matrices[i - 1].layer_j + ") is followed by (" + A.layer_i + ", " + A.layer_j + ")",
                            {{"previous", matrices[i - 1].layer_j}, {"next", A.layer_i},
                             {"previous_width", matrices[i - 1].width_j}, {"next_width", A.width_i}});
    }
    widths.push_back(A.width_j);
  }
  if (k.size() != widths.size()) {
    throw ValidationError("expected " + std::to_string(widths.size()) + " k values, got " + std::to_string(k.size()),
                          {{"expected", widths.size()}, {"actual", k.size()}});
  }
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (k[i] > widths[i]) {
      const std::string& name = i == 0 ? matrices[0].layer_i : matrices[i - 1].layer_j;
      throw ValidationError("k = " + std::to_string(k[i]) + " exceeds the width " + std::to_string(widths[i]) +
                                " of layer '" + name + "'",
                            {{"layer", name}, {"k", k[i]}, {"width", widths[i]}});
    }
  }
  return widths;
}

std::string layer_name(const std::vector<AttributionMatrix>& mats, std::size_t i) {
  return i == 0 ? mats[0].layer_i : mats[i - 1].layer_j;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::cla: return "cla";
    case Method::random: return "random";
    case Method::max_activation: return "max_activation";
    case Method::weight_magnitude: return "weight_magnitude";
    case Method::output_attribution: return "output_attribution";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::cla, Method::random, Method::max_activation, Method::weight_magnitude,
                   Method::output_attribution})
    if (to_string(m) == name) return m;
  throw ValidationError("unknown circuit method '" + std::string(name) + "'", {{"method", name}});
}

std::string_view to_string(SweepRule rule) {
  return rule == SweepRule::both_neighbors ? "both_neighbors" : "one_sided";
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::fixed_point: return "fixed_point";
    case Termination::cycle: return "cycle";
    case Termination::sweep_cap: return "sweep_cap";
    case Termination::not_refined: return "not_refined";
  }
  return "?";
}

Termination parse_termination(std::string_view name) {
  for (Termination t : {Termination::fixed_point, Termination::cycle, Termination::sweep_cap, Termination::not_refined})
    if (to_string(t) == name) return t;
  throw ValidationError("unknown termination '" + std::string(name) + "'");
}

std::vector<std::string> Circuit::layer_names() const {
  std::vector<std::string> out;
  for (const auto& l : layers) out.push_back(l.name);
  return out;
}

const NeuronSet& Circuit::neurons(std::string_view layer) const {
  for (const auto& l : layers)
    if (l.name == layer) return l.neurons;
  throw ValidationError("circuit has no layer '" + std::string(layer) + "'", {{"layer", layer}});
}

void Circuit::validate() const {
  if (!provenance.k.empty()) {
    if (provenance.k.size() != layers.size()) throw ValidationError("provenance k does not match the layer count");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].neurons.size() != provenance.k[i]) {
        throw ValidationError("layer '" + layers[i].name + "' has " + std::to_string(layers[i].neurons.size()) +
                                  " neurons but k = " + std::to_string(provenance.k[i]),
                              {{"layer", layers[i].name}});
      }
    }
  }
  for (const auto& e : edges) {
    std::size_t from_idx = layers.size();
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].name == e.from_layer) from_idx = i;
    if (from_idx + 1 >= layers.size() || layers[from_idx + 1].name != e.to_layer) {
      throw ValidationError("edge " + e.from_layer + " -> " + e.to_layer + " does not join adjacent circuit layers",
                            {{"from_layer", e.from_layer}, {"to_layer", e.to_layer}});
    }
    if (!layers[from_idx].neurons.count(e.from) || !layers[from_idx + 1].neurons.count(e.to)) {
      throw ValidationError("edge endpoint outside the circuit's neuron sets",
                            {{"from_layer", e.from_layer}, {"from", e.from}, {"to_layer", e.to_layer}, {"to", e.to}});
    }
    if (!std::isfinite(e.score)) throw ValidationError("non-finite edge score");
  }
}

NeuronSet initialize_circuit(const AttributionMatrix& attrs, std::size_t k) {
  if (k > attrs.width_i) {
    throw ValidationError("k = " + std::to_string(k) + " exceeds the width " + std::to_string(attrs.width_i) +
                              " of layer '" + attrs.layer_i + "'",
                          {{"layer", attrs.layer_i}, {"k", k}, {"width", attrs.width_i}});
  }
  std::vector<double> scores(attrs.width_i);
  for (std::size_t m = 0; m < attrs.width_i; ++m) scores[m] = attrs.row_sum(m);
  return top_k(scores, k);
}

double circuit_objective(const std::vector<AttributionMatrix>& matrices, const std::vector<NeuronSet>& sets) {
  double total = 0.0;
  for (std::size_t i = 0; i < matrices.size(); ++i)
    for (std::size_t m : sets.at(i))
      for (std::size_t n : sets.at(i + 1)) total += matrices[i].at(m, n);
  return total;
}

std::vector<Edge> circuit_edges(const std::vector<CircuitLayer>& layers, const std::vector<AttributionMatrix>& matrices) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    const AttributionMatrix* A = nullptr;
    for (const auto& m : matrices)
      if (m.layer_i == layers[i].name && m.layer_j == layers[i + 1].name) A = &m;
    if (!matrices.empty() && !A) {
      throw ValidationError("no attribution matrix for (" + layers[i].name + ", " + layers[i + 1].name + ")");
    }
    for (std::size_t m : layers[i].neurons)
      for (std::size_t n : layers[i + 1].neurons)
        edges.push_back({layers[i].name, m, layers[i + 1].name, n, A ? A->at(m, n) : 0.0});
  }
  return edges;
}

Circuit build_circuit_from_matrices(const std::vector<AttributionMatrix>& matrices, const std::vector<std::size_t>& k,
                                    const BuildOptions& options) {
  const Chain chain{matrices, check_chain(matrices, k)};
  const std::size_t L = chain.size();

  std::vector<NeuronSet> sets(L);
  sets[0] = initialize_circuit(matrices[0], k[0]);
  for (std::size_t i = 1; i < L; ++i) sets[i] = top_k(chain.prev_term(i, sets[i - 1]), k[i]);

  auto reselect = [&](std::size_t i, bool use_prev, bool use_next) -> bool {
    std::vector<double> score(chain.widths[i], 0.0);
    if (use_next && i + 1 < L) score = chain.next_term(i, sets[i + 1]);
    if (use_prev && i > 0) {
      auto p = chain.prev_term(i, sets[i - 1]);
      for (std::size_t m = 0; m < score.size(); ++m) score[m] += p[m];
    }
    NeuronSet candidate = top_k(score, k[i]);
    if (candidate == sets[i]) return false;
    if (options.rule == SweepRule::both_neighbors) {
      const double cur = set_score(score, sets[i]);
      const double cand = set_score(score, candidate);
      if (!(cand > cur + kImprovementTolerance * (std::abs(cur) + 1.0))) return false;
    }
    sets[i] = std::move(candidate);
    return true;
  };

  Provenance prov{options.seed, options.image_set, k, 0, Termination::not_refined};
  std::vector<std::vector<NeuronSet>> history{sets};
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    bool changed = false;
    const bool both = options.rule == SweepRule::both_neighbors;
    for (std::size_t i = L; i-- > 0;) {
      if (!both && i + 1 == L) continue;
      changed |= reselect(i, both, true);
    }
    for (std::size_t i = 1; i < L; ++i) changed |= reselect(i, true, both);
    prov.sweeps = sweep;
    if (!changed) {
      prov.termination = Termination::fixed_point;
      break;
    }
    auto seen = std::find(history.begin(), history.end(), sets);
    if (seen != history.end()) {
      prov.termination = Termination::cycle;
      double best = -INFINITY;
      std::vector<NeuronSet> best_sets;
      for (auto it = seen; it != history.end(); ++it) {
        const double obj = circuit_objective(matrices, *it);
        if (obj > best) best = obj, best_sets = *it;
      }
      sets = best_sets;
      break;
    }
    history.push_back(sets);
    if (sweep == options.max_sweeps) prov.termination = Termination::sweep_cap;
  }

  Circuit c;
  c.method = Method::cla;
  for (std::size_t i = 0; i < L; ++i) c.layers.push_back({layer_name(matrices, i), sets[i]});
  c.edges = circuit_edges(c.layers, matrices);
  c.provenance = prov;
  return c;
}

Circuit build_circuit(const ModelGraph& model, const std::vector<std::string>& layers,
                      const std::vector<std::size_t>& k, const std::vector<Tensor>& images, const BuildOptions& options) {
  if (k.size() != layers.size()) {
    throw ValidationError("expected " + std::to_string(layers.size()) + " k values, got " + std::to_string(k.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (k[i] > model.width(layers[i])) {
      throw ValidationError("k = " + std::to_string(k[i]) + " exceeds the width " +
                                std::to_string(model.width(layers[i])) + " of layer '" + layers[i] + "'",
                            {{"layer", layers[i]}, {"k", k[i]}, {"width", model.width(layers[i])}});
    }
  }
  return build_circuit_from_matrices(attribution_matrices(model, layers, images), k, options);
}

std::vector<std::size_t> uniform_k(const ModelGraph& model, const std::vector<std::string>& layers, std::size_t k) {
  std::vector<std::size_t> out;
  for (const auto& l : layers) out.push_back(std::min(k, model.width(l)));
  return out;
}

std::vector<std::size_t> fractional_k(const ModelGraph& model, const std::vector<std::string>& layers,
                                      double fraction) {
  std::vector<std::size_t> out;
  for (const auto& l : layers) {
    const double w = static_cast<double>(model.width(l));
    std::size_t k = std::min(static_cast<std::size_t>(std::lround(std::max(0.0, fraction) * w)), model.width(l));
    if (fraction > 0.0 && k == 0) k = 1;
    out.push_back(k);
  }
  return out;
}

}  // namespace circuitlens::cla
