// Acceptance runner: one [PASS]/[FAIL] line per criterion, plus a JSON report.
// Trained models are cached per seed under --cache and reused when the cached
// record matches the current dataset hash.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>

#include <unistd.h>

#include "CLI11.hpp"
#include "circuitlens/cla/baselines.hpp"
#include "circuitlens/cla/trace.hpp"
#include "circuitlens/cli/circuit_io.hpp"
#include "circuitlens/common/canonical_json.hpp"
#include "circuitlens/common/error.hpp"
#include "circuitlens/common/files.hpp"
#include "circuitlens/evalkit/evalkit.hpp"
#include "circuitlens/netgraph/checkpoint.hpp"
#include "circuitlens/netgraph/forward.hpp"
#include "circuitlens/netgraph/tiny_compose.hpp"
#include "circuitlens/numerics/finite_diff.hpp"
#include "circuitlens/numerics/tape.hpp"
#include "circuitlens/trainer/trainer.hpp"
#include "support/oracles.hpp"
#include "support/planted.hpp"
#include "support/reference.hpp"

using namespace circuitlens;
using cla::Circuit;
using cla::Method;
using netgraph::ModelGraph;
using nlohmann::json;
using numerics::Tensor;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kProbes = 25;
constexpr std::uint64_t kProbeSeed = 7;
const std::vector<Method> kKnockoutMethods{Method::cla, Method::random, Method::max_activation,
                                           Method::weight_magnitude};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "  .. %s\n", msg.c_str());
  std::fflush(stderr);
}

struct Outcome {
  bool pass = false;
  std::string summary;
  json details = json::object();
};

// Everything trained or derived once and shared across criteria.
class Context {
 public:
  Context(fs::path cache, std::vector<std::uint64_t> seeds) : cache_(std::move(cache)), seeds_(std::move(seeds)) {}

  const std::vector<std::uint64_t>& seeds() const { return seeds_; }
  const std::vector<std::string>& layers() const { return layers_; }

  const synthset::ConceptDataset& dataset() {
    if (!dataset_) {
      progress("materializing the default dataset");
      dataset_ = synthset::materialize(synthset::DatasetConfig{});
    }
    return *dataset_;
  }

  struct Trained {
    ModelGraph model;
    json record;
  };

  // Loads the cached model for `seed` or trains and caches it.
  const Trained& trained(std::uint64_t seed) {
    if (auto it = trained_.find(seed); it != trained_.end()) return it->second;
    const auto& ds = dataset();
    const auto names = synthset::class_names(ds.classes());
    const fs::path dir = cache_ / ("model_seed" + std::to_string(seed));
    const fs::path record_path = dir / "train_record.json";
    if (fs::exists(record_path)) {
      json record = json::parse(read_file(record_path));
      if (record.value("dataset_hash", "") == ds.content_hash) {
        auto loaded = netgraph::load_checkpoint(dir, names);
        return trained_.emplace(seed, Trained{loaded.model, record}).first->second;
      }
      progress("cached model for seed " + std::to_string(seed) + " was trained on other data; retraining");
    }
    progress("training TinyCompose, seed " + std::to_string(seed));
    trainer::TrainConfig tc;
    tc.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    auto init = netgraph::make_tiny_compose(names, ds.config.canvas_size, seed);
    auto result = trainer::train(init, ds, tc, [](const trainer::EpochRecord& e) {
      progress("epoch " + std::to_string(e.epoch) + " loss " + fmt(e.train_loss, 4) + " val " + fmt(e.val_acc, 4));
    });
    const double wall = seconds_since(t0);
    netgraph::save_checkpoint(result.model, {seed, result.best_epoch}, dir);
    json record = {{"dataset_hash", ds.content_hash},
                   {"seed", seed},
                   {"epochs_run", result.history.size()},
                   {"best_epoch", result.best_epoch},
                   {"early_stopped", result.early_stopped},
                   {"wall_seconds", wall},
                   {"test_accuracy", trainer::evaluate_accuracy(result.model, ds.split(synthset::Split::test))}};
    write_file_atomic(record_path, canonical_dump(record) + "\n");
    write_file_atomic(dir / "history.csv", trainer::history_csv(result.history));
    return trained_.emplace(seed, Trained{result.model, record}).first->second;
  }

  const ModelGraph& model(std::uint64_t seed) { return trained(seed).model; }

  const std::vector<Tensor>& concept_probes(std::size_t concept_id) {
    auto& slot = probes_[concept_id];
    if (slot.empty()) {
      for (const auto& raw : synthset::concept_probe_set(concept_id, kProbes, dataset().config, kProbeSeed))
        slot.push_back(synthset::normalize(raw));
    }
    return slot;
  }

  std::string concept_image_set(std::size_t concept_id) const {
    return "concept:" + std::to_string(concept_id) + "/probes:" + std::to_string(kProbes) +
           "/seed:" + std::to_string(kProbeSeed);
  }

  const std::vector<cla::AttributionMatrix>& concept_matrices(std::uint64_t seed, std::size_t concept_id) {
    auto key = std::make_pair(seed, concept_id);
    if (auto it = matrices_.find(key); it != matrices_.end()) return it->second;
    return matrices_.emplace(key, cla::attribution_matrices(model(seed), layers_, concept_probes(concept_id)))
        .first->second;
  }

  // Concept circuit for `method` at the given per-layer k.
  Circuit concept_circuit(std::uint64_t seed, std::size_t concept_id, Method method, const std::vector<std::size_t>& k) {
    const auto& mats = concept_matrices(seed, concept_id);
    cla::BuildOptions opt;
    opt.seed = seed;
    opt.image_set = concept_image_set(concept_id);
    if (method == Method::cla) return cla::build_circuit_from_matrices(mats, k, opt);
    cla::BaselineInputs in;
    in.images = concept_probes(concept_id);
    in.seed = derive_seed({seed, concept_id});
    in.image_set = opt.image_set;
    in.edge_matrices = mats;
    for (std::size_t c : dataset().positive_classes(concept_id)) in.target_classes.insert(c);
    return cla::baseline_circuit(method, model(seed), layers_, k, in);
  }

  std::vector<std::size_t> k_fraction(std::uint64_t seed, double f) { return cla::fractional_k(model(seed), layers_, f); }

  // Test images of one class, at most `limit` of them.
  std::vector<Tensor> class_images(std::size_t class_id, std::size_t limit, synthset::Split split) {
    const auto& data = dataset().split(split);
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < data.images.size() && out.size() < limit; ++i)
      if (data.labels[i] == class_id) out.push_back(data.images[i]);
    return out;
  }

 private:
  fs::path cache_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::string> layers_ = netgraph::tiny_compose_analyzed_layers();
  std::optional<synthset::ConceptDataset> dataset_;
  std::map<std::uint64_t, Trained> trained_;
  std::map<std::size_t, std::vector<Tensor>> probes_;
  std::map<std::pair<std::uint64_t, std::size_t>, std::vector<cla::AttributionMatrix>> matrices_;
};

// ---------------------------------------------------------------------------
// 1. Gradient suite

// Central difference of f along coordinate j, or nullopt when the forward and
// backward one-sided slopes disagree (the step crosses a ReLU or max-pool kink,
// where no finite-difference estimate is meaningful).
std::optional<double> smooth_central_diff(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                          std::size_t j, double h) {
  auto vu = x.to_vector(), vd = x.to_vector();
  vu[j] = static_cast<float>(static_cast<double>(vu[j]) + h);
  vd[j] = static_cast<float>(static_cast<double>(vd[j]) - h);
  const Tensor up(x.shape(), std::move(vu)), down(x.shape(), std::move(vd));
  const double hu = static_cast<double>(up.data()[j]) - x.data()[j];
  const double hd = static_cast<double>(x.data()[j]) - down.data()[j];
  const double f0 = f(x), fu = f(up), fd = f(down);
  const double fwd = (fu - f0) / hu, bwd = (f0 - fd) / hd;
  if (std::abs(fwd - bwd) > 1e-3 * std::max({std::abs(fwd), std::abs(bwd), 1e-4})) return std::nullopt;
  return (fu - fd) / (hu + hd);
}

Outcome gradient_suite(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_input = 0.0, worst_kernel = 0.0;
  std::size_t checked = 0, kinks = 0;
  auto compare = [&](const std::function<double(const Tensor&)>& f, const Tensor& at, const std::optional<Tensor>& grad,
                     double& worst) {
    for (std::size_t i = 0; i < at.numel(); ++i) {
      auto fd = smooth_central_diff(f, at, i, 1e-4);
      if (!fd) {
        ++kinks;
        continue;
      }
      if (std::abs(*fd) <= 1e-4) continue;
      const double got = grad ? grad->data()[i] : 0.0;
      worst = std::max(worst, std::abs(got - *fd) / std::abs(*fd));
      ++checked;
    }
  };
  for (std::uint64_t seed = 1000; seed < 1020; ++seed) {
    auto net = reference::RandomNet::make(seed);
    Rng rng(seed * 31);
    Tensor x = reference::random_tensor(rng, net.input_shape);

    numerics::Tape tape;
    Tensor xv = tape.variable(x);
    std::vector<Tensor> kernels;
    for (const auto& c : net.convs) kernels.push_back(tape.variable(c.kernels));
    tape.backward(net.forward(xv, &kernels));

    compare([&](const Tensor& t) { return net.reference(t); }, x, tape.grad(xv), worst_input);
    const std::size_t li = rng.below(net.convs.size());
    compare(
        [&](const Tensor& kt) {
          std::vector<Tensor> ks;
          for (const auto& c : net.convs) ks.push_back(c.kernels);
          ks[li] = kt;
          return net.reference(x, &ks);
        },
        net.convs[li].kernels, tape.grad(kernels[li]), worst_kernel);
  }

  double worst_kernel_ref = 0.0;
  Rng rng(4242);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(9), n = 1 + rng.below(9);
    Tensor a = reference::random_tensor(rng, {m, k}), b = reference::random_tensor(rng, {k, n});
    auto ref = reference::matmul(reference::to_double(a), reference::to_double(b), m, k, n);
    auto got = numerics::matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) worst_kernel_ref = std::max(worst_kernel_ref, std::abs(got.data()[i] - ref[i]));

    const std::size_t ci = 1 + rng.below(3), co = 1 + rng.below(4), hw = 5 + rng.below(6);
    const std::size_t kk = rng.below(2) ? 3 : 1, stride = 1 + rng.below(2), pad = rng.below(2);
    Tensor x = reference::random_tensor(rng, {ci, hw, hw});
    Tensor w = reference::random_tensor(rng, {co, ci, kk, kk});
    Tensor bias = reference::random_tensor(rng, {co});
    auto out = numerics::conv2d(x, w, bias, stride, pad);
    auto cref = reference::conv2d(reference::from_tensor(x), reference::to_double(w), co, kk, kk,
                                  reference::to_double(bias), stride, pad);
    for (std::size_t i = 0; i < cref.v.size(); ++i)
      worst_kernel_ref = std::max(worst_kernel_ref, std::abs(out.data()[i] - cref.v[i]));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_input <= 1e-3 && worst_kernel <= 1e-3 && worst_kernel_ref <= 1e-5 && secs < 120;
  o.summary = "20 nets, " + std::to_string(checked) + " coords (" + std::to_string(kinks) +
              " at kinks skipped): max rel err input " + fmt(worst_input, 6) +
              ", kernel " + fmt(worst_kernel, 6) + " (<= 1e-3); conv/matmul vs loops " + fmt(worst_kernel_ref, 8) +
              " (<= 1e-5); " + fmt(secs, 1) + " s";
  o.details = {{"coordinates", checked},
               {"kink_coordinates_skipped", kinks},
               {"max_rel_err_input", worst_input},
               {"max_rel_err_kernel", worst_kernel},
               {"max_abs_err_reference", worst_kernel_ref},
               {"seconds", secs}};
  return o;
}

// ---------------------------------------------------------------------------
// 2. Attribution oracle

ModelGraph dense_probe(std::vector<float> w, std::size_t out) {
  std::vector<netgraph::LayerSpec> layers;
  layers.push_back(planted::relu("in"));
  layers.push_back(planted::dense("d", Tensor({2, out}, std::move(w)), Tensor::zeros({out})));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < out; ++i) names.push_back("c" + std::to_string(i));
  return ModelGraph({2}, std::move(layers), names);
}

Outcome attribution_oracle(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  auto diag = cla::attribution_single(dense_probe({1, 0, 0, 1}, 2), "in", "d", Tensor({2}, {3.0f, 4.0f}));
  auto lin = cla::attribution_single(dense_probe({2, -1}, 1), "in", "d", Tensor({2}, {3.0f, 4.0f}));
  double analytic = 0.0;
  const std::vector<double> want_diag{3, 0, 0, 4}, want_lin{6, -4};
  for (std::size_t i = 0; i < 4; ++i) analytic = std::max(analytic, std::abs(diag[i] - want_diag[i]));
  for (std::size_t i = 0; i < 2; ++i) analytic = std::max(analytic, std::abs(lin[i] - want_lin[i]));

  // 10 layer pairs: alternating relu2->relu3 and relu3->dense on independently
  // initialized TinyCompose models, evaluated on default-config images.
  const auto& ds = ctx.dataset();
  const auto names = synthset::class_names(ds.classes());
  double worst = 0.0;
  std::size_t entries = 0;
  for (std::uint64_t pair = 0; pair < 10; ++pair) {
    ModelGraph m = netgraph::make_tiny_compose(names, ds.config.canvas_size, 500 + pair);
    const bool conv_pair = pair % 2 == 0;
    const std::string li = conv_pair ? "relu2" : "relu3", lj = conv_pair ? "relu3" : "dense";
    const Tensor& img = ds.split(synthset::Split::val).images[pair * 37];
    auto cap = netgraph::forward_capture(m, img, {li});
    const Tensor& a = cap.capture.at(li);
    auto lib = cla::attribution_single(m, li, lj, a);
    const std::size_t wj = m.width(lj);
    Rng rng(derive_seed({pair, 9}));
    for (int e = 0; e < 3; ++e) {
      const std::size_t mi = rng.below(m.width(li)), n = rng.below(wj);
      const double fd = conv_pair ? oracles::relu2_relu3_fd(m, a, mi, n) : oracles::relu3_dense_fd(m, a, mi, n);
      const double got = lib[mi * wj + n];
      worst = std::max(worst, std::abs(got - fd) / std::max(std::abs(fd), 1e-3));
      ++entries;
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = analytic <= 1e-5 && worst <= 1e-3 && secs < 60;
  o.summary = "analytic diag(3,4) and (6,-4) max err " + fmt(analytic, 8) + "; FD on 10 layer pairs (" +
              std::to_string(entries) + " entries) max rel err " + fmt(worst, 6) + "; " + fmt(secs, 1) + " s";
  o.details = {{"analytic_max_err", analytic}, {"fd_max_rel_err", worst}, {"seconds", secs}};
  return o;
}

// ---------------------------------------------------------------------------
// 3. Brute-force circuit oracle

// input [4] -> dense -> r0 -> dense -> r1 -> dense "out"; analyzed r0, r1, out.
ModelGraph random_three_layer(Rng& rng, const std::vector<std::size_t>& widths) {
  std::vector<netgraph::LayerSpec> layers;
  std::size_t in = 4;
  const char* names[] = {"d0", "d1", "out"};
  for (std::size_t i = 0; i < 3; ++i) {
    layers.push_back(planted::dense(names[i], reference::random_tensor(rng, {in, widths[i]}),
                                    reference::random_tensor(rng, {widths[i]}, -0.2, 0.2)));
    if (i < 2) layers.push_back(planted::relu("r" + std::to_string(i)));
    in = widths[i];
  }
  std::vector<std::string> classes;
  for (std::size_t c = 0; c < widths[2]; ++c) classes.push_back("c" + std::to_string(c));
  return ModelGraph({4}, std::move(layers), classes);
}

Outcome circuit_oracle(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> layers{"r0", "r1", "out"};
  std::size_t local_ok = 0, bounded = 0;
  const std::size_t models = 50;
  for (std::uint64_t seed = 0; seed < models; ++seed) {
    Rng rng(derive_seed({seed, 3}));
    std::vector<std::size_t> widths{3 + rng.below(4), 3 + rng.below(4), 3 + rng.below(4)};
    ModelGraph m = random_three_layer(rng, widths);
    std::vector<Tensor> images;
    for (int i = 0; i < 8; ++i) images.push_back(reference::random_tensor(rng, {4}));
    Circuit c = cla::build_circuit(m, layers, {2, 2, 2}, images);
    auto mats = cla::attribution_matrices(m, layers, images);
    auto sets = oracles::sets_of(c);
    local_ok += oracles::locally_optimal(mats, sets, widths);
    bounded += oracles::objective(mats, sets) <= oracles::global_best(mats, widths, 2) + 1e-12;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = local_ok == models && bounded == models && secs < 120;
  o.summary = std::to_string(local_ok) + "/" + std::to_string(models) +
              " models locally optimal under exhaustive single swaps (widths 3-6, k = 2); " + fmt(secs, 1) + " s";
  o.details = {{"models", models}, {"locally_optimal", local_ok}, {"within_global_bound", bounded}, {"seconds", secs}};
  return o;
}

// ---------------------------------------------------------------------------
// 4. Planted-pathway recovery

Outcome planted_recovery(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t p = 4;
  auto net = planted::TwoPathway::make(p, 21);
  const std::vector<std::size_t> k{p, p, 1};
  Circuit c = cla::build_circuit(net.model, planted::TwoPathway::analyzed(), k, net.probes(true, 20, 5));
  const double f1 = oracles::f1(oracles::sets_of(c), net.pathway(true));
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    cla::BaselineInputs in;
    in.seed = seed;
    Circuit r = cla::baseline_circuit(Method::random, net.model, planted::TwoPathway::analyzed(), k, in);
    total += oracles::f1(oracles::sets_of(r), net.pathway(true));
  }
  const double random_f1 = total / 100.0;
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = f1 == 1.0 && random_f1 <= 0.6 && secs < 60;
  o.summary = "CLA F1 " + fmt(f1) + " (= 1.0); random F1 mean over 100 seeds " + fmt(random_f1) + " (<= 0.6)";
  o.details = {{"cla_f1", f1}, {"random_f1_mean", random_f1}, {"seconds", secs}};
  return o;
}

// ---------------------------------------------------------------------------
// 5. Training

Outcome training(Context& ctx) {
  Outcome o;
  o.pass = true;
  json per_seed = json::array();
  std::string summary;
  for (std::uint64_t seed : ctx.seeds()) {
    const auto& rec = ctx.trained(seed).record;
    const double acc = rec.at("test_accuracy").get<double>();
    const double wall = rec.at("wall_seconds").get<double>();
    const std::size_t epochs = rec.at("epochs_run").get<std::size_t>();
    o.pass &= acc >= 0.95 && epochs <= 30 && wall < 900;
    per_seed.push_back(rec);
    summary += "seed " + std::to_string(seed) + ": test acc " + fmt(acc) + ", " + std::to_string(epochs) +
               " epochs, " + fmt(wall / 60, 1) + " min; ";
  }
  // Determinism: two runs from the same seed on a small dataset give
  // bit-identical parameters.
  synthset::DatasetConfig small;
  small.per_class = {8, 4, 4};
  auto ds = synthset::materialize(small);
  trainer::TrainConfig tc;
  tc.seed = 11;
  tc.max_epochs = 2;
  tc.batch_size = 16;
  auto run = [&] {
    auto init = netgraph::make_tiny_compose(synthset::class_names(ds.classes()), small.canvas_size, tc.seed);
    return trainer::train(init, ds, tc).model;
  };
  const ModelGraph a = run(), b = run();
  bool identical = true;
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) identical &= pa[i].bit_equal(pb[i]);
  o.pass &= identical;
  o.summary = summary + "repeat run bit-identical: " + (identical ? "yes" : "no");
  o.details = {{"seeds", per_seed}, {"repeat_bit_identical", identical}};
  return o;
}

// ---------------------------------------------------------------------------
// 6. Knockout

struct KnockoutSeed {
  std::map<Method, std::vector<evalkit::KnockoutReport>> reports;
};

std::map<std::uint64_t, KnockoutSeed> g_knockout;

const KnockoutSeed& knockout_for(Context& ctx, std::uint64_t seed) {
  if (auto it = g_knockout.find(seed); it != g_knockout.end()) return it->second;
  KnockoutSeed ks;
  const auto k = ctx.k_fraction(seed, 0.25);
  for (std::size_t c = 0; c < synthset::kNumConcepts; ++c) {
    progress("knockout seed " + std::to_string(seed) + " concept " + std::to_string(c));
    for (Method method : kKnockoutMethods) {
      Circuit circuit = ctx.concept_circuit(seed, c, method, k);
      ks.reports[method].push_back(evalkit::knockout_eval(ctx.model(seed), ctx.dataset(), synthset::Split::test, c,
                                                          circuit, intervene::Kind::edge_prune));
    }
  }
  return g_knockout.emplace(seed, std::move(ks)).first->second;
}

Outcome knockout(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, std::vector<double>> per_seed;
  json seeds = json::array();
  for (std::uint64_t seed : ctx.seeds()) {
    const auto& ks = knockout_for(ctx, seed);
    auto avg = [&](Method m, const std::function<double(const evalkit::KnockoutReport&)>& f) {
      std::vector<double> v;
      for (const auto& r : ks.reports.at(m)) v.push_back(f(r));
      return mean(v);
    };
    auto pos = [](const evalkit::KnockoutReport& r) { return r.positive_accuracy; };
    auto effect = [](const evalkit::KnockoutReport& r) { return r.clean_positive_accuracy - r.positive_accuracy; };
    auto abs_shift = [](const evalkit::KnockoutReport& r) {
      return std::abs(r.clean_positive_accuracy - r.positive_accuracy);
    };
    auto neg_ratio = [](const evalkit::KnockoutReport& r) { return r.negative_accuracy / r.clean_negative_accuracy; };
    json s = {{"seed", seed},
              {"cla_positive_accuracy", avg(Method::cla, pos)},
              {"cla_negative_ratio", avg(Method::cla, neg_ratio)},
              {"clean_positive_accuracy", avg(Method::cla, [](const auto& r) { return r.clean_positive_accuracy; })},
              {"random_abs_shift", avg(Method::random, abs_shift)},
              {"weight_magnitude_abs_shift", avg(Method::weight_magnitude, abs_shift)},
              {"effect_cla", avg(Method::cla, effect)},
              {"effect_max_activation", avg(Method::max_activation, effect)},
              {"effect_random", avg(Method::random, effect)}};
    for (const auto& [key, v] : s.items())
      if (key != "seed") per_seed[key].push_back(v.get<double>());
    json concepts = json::array();
    for (Method m : kKnockoutMethods)
      for (const auto& r : ks.reports.at(m)) concepts.push_back(r.to_json());
    s["reports"] = concepts;
    seeds.push_back(s);
  }
  std::map<std::string, double> med;
  for (auto& [key, v] : per_seed) med[key] = evalkit::median(v);
  const bool cla_pos = med["cla_positive_accuracy"] <= 0.20;
  const bool cla_neg = med["cla_negative_ratio"] >= 0.9;
  const bool rand_ok = med["random_abs_shift"] < 0.10;
  const bool wm_ok = med["weight_magnitude_abs_shift"] < 0.10;
  const bool between = med["effect_random"] < med["effect_max_activation"] &&
                       med["effect_max_activation"] < med["effect_cla"];
  Outcome o;
  o.pass = cla_pos && cla_neg && rand_ok && wm_ok && between;
  auto mark = [](bool ok) { return ok ? "" : " [miss]"; };
  o.summary = "median over seeds, mean over 10 concepts, k = 25%: CLA pos acc " + fmt(med["cla_positive_accuracy"]) +
              " (<= 0.20)" + mark(cla_pos) + ", CLA neg/clean " + fmt(med["cla_negative_ratio"]) + " (>= 0.9)" +
              mark(cla_neg) + ", random |dpos| " + fmt(med["random_abs_shift"]) + " (< 0.10)" + mark(rand_ok) +
              ", weight-magnitude |dpos| " + fmt(med["weight_magnitude_abs_shift"]) + " (< 0.10)" + mark(wm_ok) +
              ", effect random " + fmt(med["effect_random"]) + " < max-activation " +
              fmt(med["effect_max_activation"]) + " < CLA " + fmt(med["effect_cla"]) + mark(between) + "; " +
              fmt(seconds_since(t0) / 60, 1) + " min";
  o.details = {{"medians", med}, {"seeds", seeds}};
  return o;
}

// ---------------------------------------------------------------------------
// 7. Redistribution

Outcome redistribution(Context& ctx) {
  std::vector<double> masses, ratios, clean_true;
  json seeds = json::array();
  for (std::uint64_t seed : ctx.seeds()) {
    progress("redistribution seed " + std::to_string(seed));
    const auto k = ctx.k_fraction(seed, 0.25);
    std::vector<double> mass, ratio, clean;
    for (std::size_t cls = 0; cls < ctx.dataset().classes().size(); ++cls) {
      const auto inputs = ctx.class_images(cls, 50, synthset::Split::test);
      const auto& pair = ctx.dataset().classes()[cls].concepts;
      for (std::size_t concept_id : {pair.first, pair.second}) {
        Circuit circuit = ctx.concept_circuit(seed, concept_id, Method::cla, k);
        auto r = evalkit::redistribution(ctx.model(seed), ctx.dataset().classes(), cls, inputs, concept_id, circuit);
        mass.push_back(r.complement_mass);
        ratio.push_back(r.complement_entropy / r.uniform_entropy);
        clean.push_back(r.clean_true_mass);
      }
    }
    masses.push_back(mean(mass));
    ratios.push_back(mean(ratio));
    clean_true.push_back(mean(clean));
    seeds.push_back({{"seed", seed},
                     {"complement_mass", masses.back()},
                     {"entropy_ratio", ratios.back()},
                     {"clean_true_mass", clean_true.back()}});
  }
  const double m = evalkit::median(masses), r = evalkit::median(ratios);
  Outcome o;
  o.pass = m >= 0.7 && r >= 0.8;
  o.summary = "median over seeds, mean over 40 (class, pruned concept) cases: complement mass " + fmt(m) +
              " (>= 0.7), entropy / uniform " + fmt(r) + " (>= 0.8); clean true-class mass " +
              fmt(evalkit::median(clean_true));
  o.details = {{"complement_mass", m}, {"entropy_ratio", r}, {"seeds", seeds}};
  return o;
}

// ---------------------------------------------------------------------------
// 8. Composition

Outcome composition(Context& ctx) {
  const auto& ds = ctx.dataset();
  std::vector<std::vector<double>> per_class(ds.classes().size());
  json seeds = json::array();
  double baseline = 0.0;
  std::vector<std::size_t> k;
  for (std::uint64_t seed : ctx.seeds()) {
    progress("composition seed " + std::to_string(seed));
    const auto& model = ctx.model(seed);
    k = ctx.k_fraction(seed, 0.10);
    std::vector<std::size_t> k2, widths;
    for (std::size_t i = 0; i < k.size(); ++i) {
      widths.push_back(model.width(ctx.layers()[i]));
      k2.push_back(std::min(2 * k[i], widths.back()));
    }
    baseline = evalkit::random_composition_baseline(widths, k, 10000, 2024);
    json row = json::array();
    for (std::size_t cls = 0; cls < ds.classes().size(); ++cls) {
      const auto probes = ctx.class_images(cls, kProbes, synthset::Split::train);
      Circuit class_circuit = cla::build_circuit(model, ctx.layers(), k2, probes);
      const auto& pair = ds.classes()[cls].concepts;
      const double v = evalkit::composition_overlap(class_circuit, ctx.concept_circuit(seed, pair.first, Method::cla, k),
                                                    ctx.concept_circuit(seed, pair.second, Method::cla, k));
      per_class[cls].push_back(v);
      row.push_back(v);
    }
    seeds.push_back({{"seed", seed}, {"iou", row}});
  }
  std::size_t passing = 0;
  double worst = 1.0;
  json medians = json::array();
  for (const auto& v : per_class) {
    const double m = evalkit::median(v);
    medians.push_back(m);
    worst = std::min(worst, m);
    passing += m >= 3 * baseline;
  }
  Outcome o;
  o.pass = passing == per_class.size();
  o.summary = "k = 10% (" + std::to_string(k[0]) + "," + std::to_string(k[1]) + "," + std::to_string(k[2]) +
              "), class circuit at 2k: " + std::to_string(passing) + "/" + std::to_string(per_class.size()) +
              " classes reach 3x the random baseline " + fmt(baseline) + " (= " + fmt(3 * baseline) +
              "); worst class median IoU " + fmt(worst);
  o.details = {{"baseline", baseline}, {"class_medians", medians}, {"seeds", seeds}};
  return o;
}

// ---------------------------------------------------------------------------
// 9. Stability

Outcome stability(Context& ctx) {
  std::vector<double> worst_per_seed, mean_per_seed;
  json seeds = json::array();
  std::size_t k_lo = 0, k_hi = 0;
  for (std::uint64_t seed : ctx.seeds()) {
    const auto& model = ctx.model(seed);
    std::size_t widest = 0, narrowest = SIZE_MAX;
    for (const auto& l : ctx.layers()) {
      widest = std::max(widest, model.width(l));
      narrowest = std::min(narrowest, model.width(l));
    }
    k_lo = static_cast<std::size_t>(std::ceil(0.10 * static_cast<double>(widest)));
    k_hi = widest;
    std::vector<std::size_t> ks;
    for (std::size_t k = k_lo; k <= k_hi; ++k) ks.push_back(k);
    double worst = INFINITY;
    std::vector<double> ratios;
    for (std::size_t c = 0; c < synthset::kNumConcepts; ++c) {
      auto r = evalkit::stability_sweep(ctx.concept_matrices(seed, c), ks);
      for (const auto& p : r.points) {
        ratios.push_back(p.iou / p.containment);
        worst = std::min(worst, ratios.back());
      }
    }
    worst_per_seed.push_back(worst);
    mean_per_seed.push_back(mean(ratios));
    seeds.push_back({{"seed", seed}, {"min_ratio", worst}, {"mean_ratio", mean_per_seed.back()}});
  }
  const double w = evalkit::median(worst_per_seed);
  Outcome o;
  o.pass = w >= 0.8;
  o.summary = "k = " + std::to_string(k_lo) + ".." + std::to_string(k_hi) +
              " step 1, 10 concepts: median over seeds of the minimum IoU / containment " + fmt(w) +
              " (>= 0.8); mean ratio " + fmt(evalkit::median(mean_per_seed));
  o.details = {{"median_min_ratio", w}, {"seeds", seeds}};
  return o;
}

// ---------------------------------------------------------------------------
// 10. Partial ablation

Outcome partial_ablation(Context& ctx) {
  std::vector<double> rho_per_seed, full_per_seed;
  json seeds = json::array();
  const double chance = 1.0 / static_cast<double>(ctx.dataset().classes().size());
  for (std::uint64_t seed : ctx.seeds()) {
    progress("partial ablation seed " + std::to_string(seed));
    const auto& model = ctx.model(seed);
    std::size_t widest = 0;
    for (const auto& l : ctx.layers()) widest = std::max(widest, model.width(l));
    std::vector<std::size_t> ks;
    for (std::size_t k = 0; k <= widest; k += 2) ks.push_back(k);
    if (ks.back() != widest) ks.push_back(widest);
    std::vector<double> rhos, full;
    json curves = json::array();
    for (std::size_t c = 0; c < synthset::kNumConcepts; ++c) {
      evalkit::LabeledSet inputs;
      for (std::size_t cls : ctx.dataset().positive_classes(c)) {
        for (auto& img : ctx.class_images(cls, 15, synthset::Split::test)) {
          inputs.images.push_back(std::move(img));
          inputs.labels.push_back(cls);
        }
      }
      auto curve = evalkit::partial_ablation_curve(model, ctx.concept_matrices(seed, c), ks, inputs);
      std::vector<double> x, y;
      for (const auto& p : curve) x.push_back(static_cast<double>(p.k)), y.push_back(p.correct_probability);
      rhos.push_back(evalkit::spearman(x, y));
      full.push_back(y.back());
      curves.push_back(y);
    }
    rho_per_seed.push_back(mean(rhos));
    full_per_seed.push_back(mean(full));
    seeds.push_back({{"seed", seed}, {"k", ks}, {"spearman", rhos}, {"curves", curves}});
  }
  const double rho = evalkit::median(rho_per_seed);
  Outcome o;
  o.pass = rho <= -0.9;
  o.summary = "10 concepts, k = 0..32 step 2, circuit pruning: median over seeds of mean Spearman " + fmt(rho) +
              " (<= -0.9); full-width correct prob " + fmt(evalkit::median(full_per_seed)) + " (chance " +
              fmt(chance) + ")";
  o.details = {{"median_spearman", rho}, {"seeds", seeds}};
  return o;
}

// ---------------------------------------------------------------------------
// 11. KL ordering

Outcome kl_ordering(Context& ctx) {
  const auto& ds = ctx.dataset();
  std::map<Method, std::vector<double>> per_seed;
  json seeds = json::array();
  for (std::uint64_t seed : ctx.seeds()) {
    progress("path patching seed " + std::to_string(seed));
    const auto k = ctx.k_fraction(seed, 0.25);
    std::map<Method, std::vector<double>> kls;
    for (std::size_t cls = 0; cls < ds.classes().size(); ++cls) {
      const auto& pair = ds.classes()[cls].concepts;
      std::size_t donor_class = 0;
      while (ds.classes()[donor_class].contains(pair.first) || ds.classes()[donor_class].contains(pair.second))
        ++donor_class;
      const auto donor_pool = ctx.class_images(donor_class, SIZE_MAX, synthset::Split::test);
      Rng rng(derive_seed({seed, donor_class}));
      const Tensor donor = donor_pool[rng.below(donor_pool.size())];
      const auto inputs = ctx.class_images(cls, 25, synthset::Split::test);
      for (Method m : kKnockoutMethods) {
        kls[m].push_back(
            evalkit::mean_patch_kl(ctx.model(seed), inputs, ctx.concept_circuit(seed, pair.first, m, k), donor));
      }
    }
    json s = {{"seed", seed}};
    for (Method m : kKnockoutMethods) {
      per_seed[m].push_back(mean(kls[m]));
      s[std::string(cla::to_string(m))] = per_seed[m].back();
    }
    seeds.push_back(s);
  }
  std::map<Method, double> med;
  for (Method m : kKnockoutMethods) med[m] = evalkit::median(per_seed[m]);
  const bool order = med[Method::cla] > med[Method::max_activation] &&
                     med[Method::max_activation] > med[Method::weight_magnitude];
  const bool approx = std::abs(med[Method::weight_magnitude] - med[Method::random]) < 0.05;
  Outcome o;
  o.pass = order && approx;
  o.summary = "median over seeds of mean KL (nats), 20 classes: CLA " + fmt(med[Method::cla], 4) +
              " > max-activation " + fmt(med[Method::max_activation], 4) + " > weight-magnitude " +
              fmt(med[Method::weight_magnitude], 4) + " ~ random " + fmt(med[Method::random], 4) + " (|d| " +
              fmt(std::abs(med[Method::weight_magnitude] - med[Method::random]), 4) + " < 0.05)";
  json mj;
  for (Method m : kKnockoutMethods) mj[std::string(cla::to_string(m))] = med[m];
  o.details = {{"medians", mj}, {"seeds", seeds}};
  return o;
}

// ---------------------------------------------------------------------------
// 12. Determinism and round-trips

Outcome determinism(Context& ctx) {
  const std::uint64_t seed = ctx.seeds().front();
  const auto& ds = ctx.dataset();
  const std::string hash_again = synthset::materialize(synthset::DatasetConfig{}).content_hash;
  const bool hash_ok = hash_again == ds.content_hash;

  const auto& model = ctx.model(seed);
  const auto k = ctx.k_fraction(seed, 0.25);
  cla::BuildOptions opt;
  opt.seed = seed;
  opt.image_set = ctx.concept_image_set(3);
  const std::string json_a = cli::export_circuit_json(ctx.concept_circuit(seed, 3, Method::cla, k));
  const std::string json_b =
      cli::export_circuit_json(cla::build_circuit(model, ctx.layers(), k, ctx.concept_probes(3), opt));
  const bool circuit_ok = json_a == json_b;

  const fs::path scratch = fs::temp_directory_path() / ("circuitlens_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(scratch);
  const auto& mats = ctx.concept_matrices(seed, 3);
  std::vector<fs::path> files;
  for (std::size_t i = 0; i < mats.size(); ++i) {
    files.push_back(scratch / ("pair_" + std::to_string(i) + ".trace"));
    cla::write_trace(mats[i], files.back());
  }
  const Circuit from_trace = cla::circuit_from_trace(files, k, opt);
  const Circuit in_memory = cla::build_circuit_from_matrices(mats, k, opt);
  bool trace_ok = from_trace == in_memory;
  for (std::size_t i = 0; i < mats.size(); ++i) trace_ok &= cla::read_trace(files[i]).values == mats[i].values;

  netgraph::save_checkpoint(model, {seed, 0}, scratch / "model");
  const auto reloaded = netgraph::load_checkpoint(scratch / "model", model.class_names()).model;
  bool logits_ok = true;
  const auto& test = ds.split(synthset::Split::test);
  for (std::size_t i = 0; i < test.images.size(); i += 50)
    logits_ok &= netgraph::forward(model, test.images[i]).bit_equal(netgraph::forward(reloaded, test.images[i]));
  fs::remove_all(scratch);

  Outcome o;
  o.pass = hash_ok && circuit_ok && trace_ok && logits_ok;
  auto yn = [](bool b) { return b ? "yes" : "no"; };
  o.summary = std::string("dataset hash repeatable: ") + yn(hash_ok) + "; circuit JSON byte-identical: " +
              yn(circuit_ok) + "; trace export->ingest->build bit-exact: " + yn(trace_ok) +
              "; checkpoint logits bit-exact: " + yn(logits_ok);
  o.details = {{"content_hash", ds.content_hash}};
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Runs the acceptance criteria and prints one line per criterion"};
  std::string cache = "acceptance_cache";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<int> only;
  std::string report;
  bool strict = false;
  app.add_option("--cache", cache, "Directory for trained models")->capture_default_str();
  app.add_option("--seeds", seeds, "Training seeds")->capture_default_str();
  app.add_option("--only", only, "Run only these criterion numbers");
  app.add_option("--report", report, "Write a JSON report here");
  app.add_flag("--strict", strict, "Exit non-zero when any criterion fails");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},   {2, "attribution oracle", attribution_oracle},
      {3, "circuit oracle", circuit_oracle},   {4, "planted recovery", planted_recovery},
      {5, "training", training},               {6, "knockout", knockout},
      {7, "redistribution", redistribution},   {8, "composition", composition},
      {9, "stability", stability},             {10, "partial ablation", partial_ablation},
      {11, "kl ordering", kl_ordering},        {12, "determinism", determinism},
  };

  Context ctx(cache, seeds);
  json results = json::array();
  std::size_t failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const circuitlens::Error& e) {
      o.pass = false;
      o.summary = std::string("error: ") + e.what();
      o.details = e.to_json();
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.summary.c_str());
    std::fflush(stdout);
    results.push_back({{"id", c.id},
                       {"name", c.name},
                       {"pass", o.pass},
                       {"summary", o.summary},
                       {"seconds", seconds_since(t0)},
                       {"details", o.details}});
  }
  std::printf("%zu of %zu criteria passed\n", results.size() - failed, results.size());
  if (!report.empty()) write_file_atomic(report, results.dump(2) + "\n");
  return strict && failed > 0 ? 1 : 0;
}
