#include "circuitlens/evalkit/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <sstream>

#include "circuitlens/common/canonical_json.hpp"
#include "circuitlens/common/error.hpp"
#include "circuitlens/common/parallel.hpp"
#include "circuitlens/common/rng.hpp"
#include "circuitlens/netgraph/forward.hpp"

namespace circuitlens::evalkit {

using nlohmann::json;

namespace {

constexpr double kSmoothing = 1e-9;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t argmax(const Tensor& logits) {
  auto d = logits.data();
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

void check_distribution(const std::vector<double>& p, const char* name) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ValidationError(std::string("distribution ") + name + " has a negative or NaN entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) {
    throw ValidationError(std::string("distribution ") + name + " sums to " + std::to_string(s) + ", not 1",
                          {{"sum", s}});
  }
}

std::vector<double> smoothed(const std::vector<double>& p) {
  std::vector<double> out(p);
  double s = 0.0;
  for (double& v : out) s += (v += kSmoothing);
  for (double& v : out) v /= s;
  return out;
}

Circuit with_k(const std::vector<cla::AttributionMatrix>& matrices, std::size_t k, const cla::BuildOptions& options) {
  std::vector<std::size_t> ks{std::min(k, matrices.front().width_i)};
  for (const auto& m : matrices) ks.push_back(std::min(k, m.width_j));
  return cla::build_circuit_from_matrices(matrices, ks, options);
}

}  // namespace

LayerSets layer_sets(const Circuit& circuit) {
  LayerSets out;
  for (const auto& l : circuit.layers) out[l.name] = l.neurons;
  return out;
}

double iou(const LayerSets& a, const LayerSets& b) {
  std::vector<std::string> na, nb;
  for (const auto& [k, v] : a) na.push_back(k);
  for (const auto& [k, v] : b) nb.push_back(k);
  if (na != nb) throw ValidationError("iou: circuits cover different layers", {{"a", na}, {"b", nb}});
  std::size_t inter = 0, uni = 0;
  for (const auto& [name, sa] : a) {
    const auto& sb = b.at(name);
    std::size_t common = 0;
    for (std::size_t m : sa) common += sb.count(m);
    inter += common;
    uni += sa.size() + sb.size() - common;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double iou(const Circuit& a, const Circuit& b) { return iou(layer_sets(a), layer_sets(b)); }

LayerSets union_sets(const LayerSets& a, const LayerSets& b) {
  LayerSets out = a;
  for (const auto& [name, s] : b) out[name].insert(s.begin(), s.end());
  return out;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) {
    throw ValidationError("kl_divergence: length mismatch", {{"p", p.size()}, {"q", q.size()}});
  }
  check_distribution(p, "p");
  check_distribution(q, "q");
  const auto ps = smoothed(p), qs = smoothed(q);
  double kl = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) kl += ps[i] * std::log(ps[i] / qs[i]);
  return kl;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman needs two equal-length series (n >= 2)");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0 || syy == 0) return std::nan("");
  return sxy / std::sqrt(sxx * syy);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

json KnockoutReport::to_json() const {
  return {{"concept", concept_id},
          {"k", k},
          {"method", method},
          {"intervention", intervention},
          {"positive_classes", positive_classes},
          {"negative_classes", negative_classes},
          {"positive_accuracy", positive_accuracy},
          {"negative_accuracy", negative_accuracy},
          {"clean_positive_accuracy", clean_positive_accuracy},
          {"clean_negative_accuracy", clean_negative_accuracy},
          {"mean_logits_clean", mean_logits_clean},
          {"mean_logits_intervened", mean_logits_intervened}};
}

KnockoutReport knockout_eval(const ModelGraph& model, const synthset::ConceptDataset& dataset, synthset::Split split,
                             std::size_t concept_id, const Circuit& circuit, intervene::Kind intervention) {
  if (intervention == intervene::Kind::path_patch) {
    throw ValidationError("knockout_eval supports edge and circuit pruning only");
  }
  KnockoutReport r;
  r.concept_id = concept_id;
  r.method = std::string(cla::to_string(circuit.method));
  r.intervention = std::string(intervene::to_string(intervention));
  for (const auto& l : circuit.layers) r.k.push_back(l.neurons.size());
  r.positive_classes = dataset.positive_classes(concept_id);
  r.negative_classes = dataset.negative_classes(concept_id);
  if (r.positive_classes.empty() || r.negative_classes.empty()) {
    throw ValidationError("concept " + std::to_string(concept_id) + " gives an empty class partition",
                          {{"concept", concept_id},
                           {"positive", r.positive_classes.size()},
                           {"negative", r.negative_classes.size()}});
  }
  const auto& data = dataset.split(split);
  const std::size_t n = data.images.size();
  const std::size_t C = model.num_classes();
  std::vector<Tensor> clean(n), pruned(n);
  parallel_for(n, [&](std::size_t i) {
    clean[i] = netgraph::forward(model, data.images[i]);
    pruned[i] = intervene::apply(intervention, model, data.images[i], circuit);
  });

  std::vector<bool> positive(C, false);
  for (std::size_t c : r.positive_classes) positive[c] = true;
  std::size_t pos_n = 0, neg_n = 0, pos_clean = 0, neg_clean = 0, pos_hit = 0, neg_hit = 0;
  std::vector<std::size_t> per_class(C, 0);
  r.mean_logits_clean.assign(C * C, 0.0);
  r.mean_logits_intervened.assign(C * C, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = data.labels[i];
    const bool ok_clean = argmax(clean[i]) == y, ok = argmax(pruned[i]) == y;
    if (positive[y]) {
      ++pos_n, pos_clean += ok_clean, pos_hit += ok;
    } else {
      ++neg_n, neg_clean += ok_clean, neg_hit += ok;
    }
    ++per_class[y];
    for (std::size_t c = 0; c < C; ++c) {
      r.mean_logits_clean[y * C + c] += clean[i].data()[c];
      r.mean_logits_intervened[y * C + c] += pruned[i].data()[c];
    }
  }
  if (pos_n == 0 || neg_n == 0) throw ValidationError("split has no inputs from one side of the class partition");
  for (std::size_t y = 0; y < C; ++y) {
    if (per_class[y] == 0) continue;
    for (std::size_t c = 0; c < C; ++c) {
      r.mean_logits_clean[y * C + c] /= static_cast<double>(per_class[y]);
      r.mean_logits_intervened[y * C + c] /= static_cast<double>(per_class[y]);
    }
  }
  r.positive_accuracy = static_cast<double>(pos_hit) / static_cast<double>(pos_n);
  r.negative_accuracy = static_cast<double>(neg_hit) / static_cast<double>(neg_n);
  r.clean_positive_accuracy = static_cast<double>(pos_clean) / static_cast<double>(pos_n);
  r.clean_negative_accuracy = static_cast<double>(neg_clean) / static_cast<double>(neg_n);
  return r;
}

json RedistributionReport::to_json() const {
  return {{"class", class_index},
          {"pruned_concept", pruned_concept},
          {"complement_concept", complement_concept},
          {"complement_classes", complement_classes},
          {"clean_true_mass", clean_true_mass},
          {"true_mass", true_mass},
          {"complement_mass", complement_mass},
          {"complement_entropy", complement_entropy},
          {"uniform_entropy", uniform_entropy}};
}

RedistributionReport redistribution(const ModelGraph& model, const std::vector<synthset::CompositeClass>& classes,
                                    std::size_t class_index, const std::vector<Tensor>& inputs,
                                    std::size_t pruned_concept, const Circuit& circuit,
                                    intervene::Kind intervention) {
  if (class_index >= classes.size()) throw ValidationError("class index out of range", {{"class", class_index}});
  const auto& cls = classes[class_index];
  if (!cls.contains(pruned_concept)) {
    throw ValidationError("concept " + std::to_string(pruned_concept) + " is not part of class '" + cls.name + "'",
                          {{"class", cls.name}, {"concept", pruned_concept}});
  }
  if (inputs.empty()) throw ValidationError("redistribution needs inputs");
  RedistributionReport r;
  r.class_index = class_index;
  r.pruned_concept = pruned_concept;
  r.complement_concept = cls.concepts.first == pruned_concept ? cls.concepts.second : cls.concepts.first;
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (classes[c].contains(r.complement_concept)) r.complement_classes.push_back(c);

  const std::size_t C = classes.size();
  std::vector<std::vector<double>> clean_p(inputs.size()), post_p(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    clean_p[i] = intervene::softmax(netgraph::forward(model, inputs[i]));
    post_p[i] = intervene::softmax(intervene::apply(intervention, model, inputs[i], circuit));
  });
  std::vector<double> mean_post(C, 0.0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    r.clean_true_mass += clean_p[i][class_index];
    r.true_mass += post_p[i][class_index];
    for (std::size_t c = 0; c < C; ++c) mean_post[c] += post_p[i][c];
  }
  const double n = static_cast<double>(inputs.size());
  r.clean_true_mass /= n;
  r.true_mass /= n;
  for (double& v : mean_post) v /= n;
  double mass = 0.0;
  for (std::size_t c : r.complement_classes) mass += mean_post[c];
  r.complement_mass = mass;
  for (std::size_t c : r.complement_classes) {
    const double q = mean_post[c] / mass;
    if (q > 0) r.complement_entropy -= q * std::log(q);
  }
  r.uniform_entropy = std::log(static_cast<double>(r.complement_classes.size()));
  return r;
}

double composition_overlap(const Circuit& class_circuit, const Circuit& concept_a, const Circuit& concept_b) {
  return iou(layer_sets(class_circuit), union_sets(layer_sets(concept_a), layer_sets(concept_b)));
}

double random_composition_baseline(const std::vector<std::size_t>& widths, const std::vector<std::size_t>& k,
                                   std::size_t draws, std::uint64_t seed) {
  if (widths.size() != k.size()) throw ValidationError("one k per layer width expected");
  Rng rng(seed);
  double inter = 0.0, uni = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (std::size_t l = 0; l < widths.size(); ++l) {
      const std::size_t w = widths[l];
      auto c = rng.subset(w, std::min(w, 2 * k[l]));
      auto a = rng.subset(w, std::min(w, k[l]));
      auto b = rng.subset(w, std::min(w, k[l]));
      NeuronSet cs(c.begin(), c.end()), ab(a.begin(), a.end());
      ab.insert(b.begin(), b.end());
      std::size_t common = 0;
      for (std::size_t m : cs) common += ab.count(m);
      inter += static_cast<double>(common);
      uni += static_cast<double>(cs.size() + ab.size() - common);
    }
  }
  return uni == 0 ? 1.0 : inter / uni;
}

double containment_baseline(const std::vector<std::size_t>& k_small, const std::vector<std::size_t>& k_large) {
  if (k_small.size() != k_large.size()) throw ValidationError("containment baseline needs matching k lists");
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < k_small.size(); ++i) {
    lo += static_cast<double>(std::min(k_small[i], k_large[i]));
    hi += static_cast<double>(std::max(k_small[i], k_large[i]));
  }
  return hi == 0 ? 1.0 : lo / hi;
}

json StabilityReport::to_json() const {
  json pts = json::array();
  for (const auto& p : points) {
    pts.push_back({{"k_from", p.k_from}, {"k_to", p.k_to}, {"iou", p.iou}, {"containment", p.containment}});
  }
  return {{"points", pts}};
}

StabilityReport stability_sweep(const std::vector<cla::AttributionMatrix>& matrices,
                                const std::vector<std::size_t>& k_values, const cla::BuildOptions& options) {
  StabilityReport r;
  for (std::size_t k : k_values) r.circuits.push_back(with_k(matrices, k, options));
  for (std::size_t i = 0; i + 1 < k_values.size(); ++i) {
    const auto& a = r.circuits[i];
    const auto& b = r.circuits[i + 1];
    r.points.push_back({k_values[i], k_values[i + 1], iou(a, b), containment_baseline(a.provenance.k, b.provenance.k)});
  }
  return r;
}

std::vector<AblationPoint> partial_ablation_curve(const ModelGraph& model,
                                                  const std::vector<cla::AttributionMatrix>& matrices,
                                                  const std::vector<std::size_t>& k_values, const LabeledSet& inputs,
                                                  const cla::BuildOptions& options) {
  if (inputs.images.size() != inputs.labels.size() || inputs.images.empty()) {
    throw ValidationError("partial ablation needs labeled inputs");
  }
  std::vector<AblationPoint> out;
  for (std::size_t k : k_values) {
    Circuit c = with_k(matrices, k, options);
    std::vector<double> p(inputs.images.size());
    parallel_for(inputs.images.size(), [&](std::size_t i) {
      p[i] = intervene::softmax(intervene::circuit_prune(model, inputs.images[i], c))[inputs.labels[i]];
    });
    double mean = 0.0;
    for (double v : p) mean += v;
    out.push_back({k, mean / static_cast<double>(p.size())});
  }
  return out;
}

double mean_patch_kl(const ModelGraph& model, const std::vector<Tensor>& inputs, const Circuit& circuit,
                     const Tensor& donor) {
  if (inputs.empty()) throw ValidationError("mean_patch_kl needs inputs");
  std::vector<double> kl(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    kl[i] = kl_divergence(intervene::softmax(netgraph::forward(model, inputs[i])),
                          intervene::softmax(intervene::path_patch(model, inputs[i], circuit, donor)));
  });
  double s = 0.0;
  for (double v : kl) s += v;
  return s / static_cast<double>(kl.size());
}

std::string knockout_csv(const std::vector<KnockoutReport>& reports) {
  std::ostringstream os;
  os << "concept,method,intervention,k,positive_accuracy,negative_accuracy,clean_positive_accuracy,"
        "clean_negative_accuracy\n";
  for (const auto& r : reports) {
    std::string ks;
    for (std::size_t i = 0; i < r.k.size(); ++i) ks += (i ? ";" : "") + std::to_string(r.k[i]);
    os << r.concept_id << ',' << r.method << ',' << r.intervention << ',' << ks << ','
       << format_double(r.positive_accuracy) << ',' << format_double(r.negative_accuracy) << ','
       << format_double(r.clean_positive_accuracy) << ',' << format_double(r.clean_negative_accuracy) << '\n';
  }
  return os.str();
}

std::string ablation_csv(const std::vector<AblationPoint>& points) {
  std::ostringstream os;
  os << "k,correct_probability\n";
  for (const auto& p : points) os << p.k << ',' << format_double(p.correct_probability) << '\n';
  return os.str();
}

std::string stability_csv(const StabilityReport& report) {
  std::ostringstream os;
  os << "k_from,k_to,iou,containment\n";
  for (const auto& p : report.points) {
    os << p.k_from << ',' << p.k_to << ',' << format_double(p.iou) << ',' << format_double(p.containment) << '\n';
  }
  return os.str();
}

}  // namespace circuitlens::evalkit
