#include <cmath>
#include <numeric>

#include "circuitlens/cla/circuit.hpp"
#include "circuitlens/common/error.hpp"
#include "circuitlens/evalkit/evalkit.hpp"
#include "circuitlens/netgraph/forward.hpp"
#include "circuitlens/netgraph/tiny_compose.hpp"
#include "doctest.h"
#include "support/reference.hpp"

using namespace circuitlens;
using namespace circuitlens::evalkit;
using cla::CircuitLayer;
using cla::NeuronSet;

namespace {

Circuit make_circuit(std::vector<CircuitLayer> layers) {
  Circuit c;
  c.layers = std::move(layers);
  c.edges = cla::circuit_edges(c.layers);
  return c;
}

// Pearson correlation of average ranks, written out independently.
double rank_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) less += w < v[i], equal += w == v[i];
      r[i] = less + (equal + 1) / 2.0;
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

synthset::ConceptDataset tiny_dataset() {
  synthset::DatasetConfig dc;
  dc.seed = 4;
  dc.per_class = {1, 1, 3};
  return synthset::materialize(dc);
}

}  // namespace

TEST_CASE("iou") {
  Circuit a = make_circuit({{"x", {1, 2}}, {"y", {}}});
  Circuit b = make_circuit({{"x", {2, 3}}, {"y", {}}});
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, b) == iou(b, a));
  CHECK(iou(a, make_circuit({{"x", {7}}, {"y", {8}}})) == 0.0);
  CHECK(iou(make_circuit({{"x", {}}, {"y", {}}}), make_circuit({{"x", {}}, {"y", {}}})) == 1.0);
  CHECK_THROWS_AS(iou(a, make_circuit({{"x", {1}}, {"z", {}}})), ValidationError);
  // Sets pool across layers: |{x1,x2,y5} ∩ {x2,y5,y6}| / |union| = 2 / 4.
  CHECK(iou(make_circuit({{"x", {1, 2}}, {"y", {5}}}), make_circuit({{"x", {2}}, {"y", {5, 6}}})) ==
        doctest::Approx(0.5));
}

TEST_CASE("kl_divergence") {
  CHECK(kl_divergence({0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(kl_divergence({1.0, 0.0}, {0.5, 0.5}) - std::log(2.0)) <= 1e-6);
  const double back = kl_divergence({0.5, 0.5}, {1.0, 0.0});
  CHECK(std::isfinite(back));
  CHECK(back > 1.0);
  CHECK(kl_divergence({0.9, 0.1}, {0.6, 0.4}) >= 0.0);
  CHECK_THROWS_AS(kl_divergence({0.5, 0.5}, {1.0}), ValidationError);
  CHECK_THROWS_AS(kl_divergence({0.5, 0.6}, {0.5, 0.5}), ValidationError);
  CHECK_THROWS_AS(kl_divergence({1.5, -0.5}, {0.5, 0.5}), ValidationError);
}

TEST_CASE("spearman and median") {
  CHECK(spearman({1, 2, 3, 4, 5}, {1, 4, 9, 16, 25}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4, 5}, {5, 3, 2, 1, 0}) == doctest::Approx(-1.0));
  const std::vector<double> x{1, 2, 2, 3, 7, 0.5}, y{1, 3, 2, 4, 4, 9};
  CHECK(spearman(x, y) == doctest::Approx(rank_correlation(x, y)));
  CHECK(std::isnan(spearman({1, 1, 1}, {1, 2, 3})));
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
}

TEST_CASE("composition and stability baselines") {
  CHECK(containment_baseline({10, 10, 10}, {12, 12, 12}) == doctest::Approx(30.0 / 36.0));

  Circuit a = make_circuit({{"x", {0, 1}}, {"y", {0}}});
  Circuit b = make_circuit({{"x", {2, 3}}, {"y", {1}}});
  CHECK(composition_overlap(make_circuit({{"x", {0, 1, 2, 3}}, {"y", {0, 1}}}), a, b) == 1.0);
  CHECK(composition_overlap(make_circuit({{"x", {4, 5}}, {"y", {2}}}), a, b) == 0.0);
  // {0,1,4} vs {0,1,2,3}: 2 shared of 5 in x, {1} vs {0,1}: 1 of 2 in y.
  CHECK(composition_overlap(make_circuit({{"x", {0, 1, 4}}, {"y", {1}}}), a, b) == doctest::Approx(3.0 / 7.0));

  // Ratio of closed-form expectations: E|A∪B| = 2k - k^2/w, E|C∩(A∪B)| = (2k/w) E|A∪B|.
  const std::vector<std::size_t> widths{32, 32, 20}, k{8, 8, 5};
  double inter = 0, uni = 0;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const double w = static_cast<double>(widths[l]), kk = static_cast<double>(k[l]);
    const double ab = 2 * kk - kk * kk / w;
    const double i = 2 * kk / w * ab;
    inter += i;
    uni += 2 * kk + ab - i;
  }
  CHECK(random_composition_baseline(widths, k, 20000, 3) == doctest::Approx(inter / uni).epsilon(0.02));
  CHECK(random_composition_baseline(widths, k, 100, 3) == random_composition_baseline(widths, k, 100, 3));
}

TEST_CASE("stability sweep") {
  Rng rng(8);
  std::vector<cla::AttributionMatrix> mats;
  for (std::size_t i = 0; i < 2; ++i) {
    cla::AttributionMatrix m;
    m.layer_i = i == 0 ? "a" : "b";
    m.layer_j = i == 0 ? "b" : "c";
    m.width_i = m.width_j = 6;
    m.num_images = 1;
    for (std::size_t v = 0; v < 36; ++v) m.values.push_back(rng.uniform(0.0, 1.0));
    mats.push_back(m);
  }
  auto r = stability_sweep(mats, {2, 3, 6, 8});
  REQUIRE(r.circuits.size() == 4);
  REQUIRE(r.points.size() == 3);
  CHECK(r.points[0].iou == doctest::Approx(iou(r.circuits[0], r.circuits[1])));
  CHECK(r.points[0].containment == doctest::Approx(6.0 / 9.0));
  // Both ends saturate at the width of 6.
  CHECK(r.points[2].iou == 1.0);
  CHECK(stability_csv(r).rfind("k_from,k_to,iou,containment\n", 0) == 0);
}

TEST_CASE("model-level evaluation") {
  auto ds = tiny_dataset();
  auto model = netgraph::make_tiny_compose(synthset::class_names(ds.classes()), ds.config.canvas_size, 2);
  const auto layers = netgraph::tiny_compose_analyzed_layers();
  Circuit empty = make_circuit({{layers[0], {}}, {layers[1], {}}, {layers[2], {}}});

  SUBCASE("empty circuit knockout matches clean") {
    auto r = knockout_eval(model, ds, synthset::Split::test, 0, empty, intervene::Kind::edge_prune);
    CHECK(r.positive_accuracy == r.clean_positive_accuracy);
    CHECK(r.negative_accuracy == r.clean_negative_accuracy);
    CHECK(r.mean_logits_clean == r.mean_logits_intervened);
    CHECK(r.positive_classes == ds.positive_classes(0));
    CHECK(knockout_csv({r}).find("\n0,") != std::string::npos);
    CHECK_THROWS_AS(knockout_eval(model, ds, synthset::Split::test, 0, empty, intervene::Kind::path_patch),
                    ValidationError);
  }
  SUBCASE("redistribution bookkeeping") {
    const std::size_t cls = 0;
    const auto concept_id = ds.classes()[cls].concepts.first;
    std::vector<Tensor> inputs;
    const auto& test = ds.split(synthset::Split::test);
    for (std::size_t i = 0; i < test.images.size(); ++i)
      if (test.labels[i] == cls) inputs.push_back(test.images[i]);
    auto r = redistribution(model, ds.classes(), cls, inputs, concept_id, empty);
    CHECK(r.true_mass == doctest::Approx(r.clean_true_mass));
    CHECK(r.complement_concept == ds.classes()[cls].concepts.second);
    for (std::size_t c = 0; c < ds.classes().size(); ++c) {
      const bool has = ds.classes()[c].contains(r.complement_concept);
      CHECK(has == (std::find(r.complement_classes.begin(), r.complement_classes.end(), c) !=
                    r.complement_classes.end()));
    }
    CHECK(r.uniform_entropy == doctest::Approx(std::log(static_cast<double>(r.complement_classes.size()))));
    CHECK(r.complement_entropy <= r.uniform_entropy + 1e-12);
    std::size_t absent = 0;
    while (ds.classes()[cls].contains(absent)) ++absent;
    CHECK_THROWS_AS(redistribution(model, ds.classes(), cls, inputs, absent, empty), ValidationError);
  }
  SUBCASE("partial ablation at k = 0 is the clean model") {
    std::vector<Tensor> probes;
    const auto& train = ds.split(synthset::Split::train);
    for (std::size_t i = 0; i < 4; ++i) probes.push_back(train.images[i]);
    auto mats = cla::attribution_matrices(model, layers, probes);
    LabeledSet set{{train.images[0], train.images[1]}, {train.labels[0], train.labels[1]}};
    auto curve = partial_ablation_curve(model, mats, {0, 4}, set);
    REQUIRE(curve.size() == 2);
    double clean = 0;
    for (std::size_t i = 0; i < 2; ++i) clean += intervene::softmax(netgraph::forward(model, set.images[i]))[set.labels[i]];
    CHECK(curve[0].correct_probability == doctest::Approx(clean / 2).epsilon(1e-12));
    CHECK(ablation_csv(curve).rfind("k,correct_probability\n", 0) == 0);
  }
  SUBCASE("self patch has zero KL") {
    Circuit c = make_circuit({{layers[0], {0, 1, 2}}, {layers[1], {3, 4}}, {layers[2], {0}}});
    const auto& x = ds.split(synthset::Split::test).images[0];
    CHECK(mean_patch_kl(model, {x}, c, x) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mean_patch_kl(model, {x}, c, ds.split(synthset::Split::test).images[5]) >= 0.0);
  }
}
