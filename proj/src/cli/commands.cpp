#include "circuitlens/cli/commands.hpp"

#include <filesystem>
#include <set>

#include "circuitlens/cla/baselines.hpp"
#include "circuitlens/cla/trace.hpp"
#include "circuitlens/cli/circuit_io.hpp"
#include "circuitlens/cli/config.hpp"
#include "circuitlens/common/canonical_json.hpp"
#include "circuitlens/common/error.hpp"
#include "circuitlens/common/files.hpp"
#include "circuitlens/common/rng.hpp"
#include "circuitlens/evalkit/evalkit.hpp"
#include "circuitlens/netgraph/checkpoint.hpp"
#include "circuitlens/netgraph/tiny_compose.hpp"
#include "circuitlens/trainer/trainer.hpp"

namespace circuitlens::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using numerics::Tensor;

namespace {

fs::path out_dir(const json& cfg) {
  fs::path dir = cfg.at("out").get<std::string>();
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, canonical_dump(j) + "\n"); }

synthset::DatasetConfig dataset_config(const fs::path& data_dir) {
  const std::string text = read_file(data_dir / "manifest.json");
  try {
    return synthset::DatasetManifest::from_json(json::parse(text)).config;
  } catch (const json::exception& e) {
    throw ParseError((data_dir / "manifest.json").string() + ": " + e.what());
  }
}

netgraph::ModelGraph load_model(const json& cfg, const std::vector<std::string>& class_names) {
  return netgraph::load_checkpoint(cfg.at("model").get<std::string>(), class_names).model;
}

std::vector<std::string> layers_of(const json& cfg, const netgraph::ModelGraph& model) {
  auto layers = cfg.at("layers").get<std::vector<std::string>>();
  if (layers.empty()) layers = netgraph::tiny_compose_analyzed_layers();
  for (const auto& l : layers) model.index_of(l);
  return layers;
}

std::vector<std::size_t> k_of(const json& cfg, const netgraph::ModelGraph& model,
                              const std::vector<std::string>& layers) {
  const json& k = cfg.at("k");
  if (k.is_null()) return cla::fractional_k(model, layers, cfg.at("k_fraction").get<double>());
  if (k.is_number_integer()) return std::vector<std::size_t>(layers.size(), k.get<std::size_t>());
  auto ks = k.get<std::vector<std::size_t>>();
  if (ks.size() != layers.size()) {
    throw ValidationError("k lists " + std::to_string(ks.size()) + " values for " + std::to_string(layers.size()) +
                              " layers",
                          {{"k", ks}, {"layers", layers}});
  }
  return ks;
}

std::optional<std::size_t> optional_index(const json& cfg, const char* key) {
  const json& v = cfg.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<std::size_t>();
}

std::vector<Tensor> normalized(const std::vector<Tensor>& raw) {
  std::vector<Tensor> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(synthset::normalize(r));
  return out;
}

struct ImageSelection {
  std::vector<Tensor> images;
  std::string id;
  std::set<std::size_t> targets;
};

// Probe images for circuit extraction: concept probes or a class's train images.
ImageSelection select_images(const json& cfg, const synthset::DatasetConfig& dc,
                             const std::function<const synthset::ConceptDataset&()>& dataset) {
  const auto concept_id = optional_index(cfg, "concept");
  const auto class_id = optional_index(cfg, "class");
  const std::size_t n = cfg.at("probes").get<std::size_t>();
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  if (concept_id.has_value() == class_id.has_value()) {
    throw ValidationError("set exactly one of 'concept' and 'class'", {{"concept", cfg.at("concept")},
                                                                       {"class", cfg.at("class")}});
  }
  ImageSelection sel;
  if (concept_id) {
    sel.images = normalized(synthset::concept_probe_set(*concept_id, n, dc, seed));
    sel.id = "concept:" + std::to_string(*concept_id) + "/probes:" + std::to_string(n) + "/seed:" + std::to_string(seed);
    for (std::size_t c = 0; c < dc.classes.size(); ++c)
      if (dc.classes[c].contains(*concept_id)) sel.targets.insert(c);
  } else {
    if (*class_id >= dc.classes.size()) throw ValidationError("class out of range", {{"class", *class_id}});
    const auto& train = dataset().split(synthset::Split::train);
    for (std::size_t i = 0; i < train.images.size() && sel.images.size() < n; ++i)
      if (train.labels[i] == *class_id) sel.images.push_back(train.images[i]);
    if (sel.images.empty()) throw ValidationError("class has no training images", {{"class", *class_id}});
    sel.id = "class:" + std::to_string(*class_id) + "/train:" + std::to_string(sel.images.size());
    sel.targets.insert(*class_id);
  }
  return sel;
}

cla::BuildOptions build_options(const json& cfg, const std::string& image_set) {
  cla::BuildOptions o;
  const std::string rule = cfg.at("rule").get<std::string>();
  if (rule == "both_neighbors") {
    o.rule = cla::SweepRule::both_neighbors;
  } else if (rule == "one_sided") {
    o.rule = cla::SweepRule::one_sided;
  } else {
    throw ValidationError("unknown rule '" + rule + "' (expected both_neighbors or one_sided)", {{"rule", rule}});
  }
  o.max_sweeps = cfg.at("max_sweeps").get<std::size_t>();
  o.seed = cfg.at("seed").get<std::uint64_t>();
  o.image_set = image_set;
  return o;
}

cla::Circuit make_circuit(cla::Method method, const netgraph::ModelGraph& model, const std::vector<std::string>& layers,
                          const std::vector<std::size_t>& k, const ImageSelection& sel, const cla::BuildOptions& opt,
                          const std::set<std::size_t>& targets,
                          std::vector<cla::AttributionMatrix>* matrices_out = nullptr) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (k[i] > model.width(layers[i])) {
      throw ValidationError("k = " + std::to_string(k[i]) + " exceeds the width " +
                                std::to_string(model.width(layers[i])) + " of layer '" + layers[i] + "'",
                            {{"layer", layers[i]}, {"k", k[i]}, {"width", model.width(layers[i])}});
    }
  }
  auto mats = cla::attribution_matrices(model, layers, sel.images);
  if (matrices_out) *matrices_out = mats;
  if (method == cla::Method::cla) return cla::build_circuit_from_matrices(mats, k, opt);
  cla::BaselineInputs in;
  in.images = sel.images;
  in.target_classes = targets;
  in.seed = opt.seed;
  in.image_set = opt.image_set;
  in.edge_matrices = std::move(mats);
  return cla::baseline_circuit(method, model, layers, k, in);
}

json run_gen_data(const json& cfg) {
  synthset::DatasetConfig dc;
  dc.seed = cfg.at("seed").get<std::uint64_t>();
  dc.canvas_size = cfg.at("canvas_size").get<std::size_t>();
  dc.patch_size = cfg.at("patch_size").get<std::size_t>();
  dc.background_value = cfg.at("background_value").get<double>();
  dc.per_class = {cfg.at("train_per_class").get<std::size_t>(), cfg.at("val_per_class").get<std::size_t>(),
                  cfg.at("test_per_class").get<std::size_t>()};
  dc.validate();
  const fs::path dir = out_dir(cfg);
  auto manifest = synthset::generate_dataset(dc, dir);
  const std::size_t pngs = cfg.at("png_samples").get<std::size_t>();
  if (pngs > 0) {
    for (std::size_t c = 0; c < dc.classes.size(); ++c) {
      auto images = synthset::render_split_class(dc, synthset::Split::train, c);
      for (std::size_t i = 0; i < std::min(pngs, images.size()); ++i) {
        synthset::export_png(images[i], dir / "png" / (dc.classes[c].name + "_" + std::to_string(i) + ".png"));
      }
    }
  }
  write_resolved_config(dir, "gen-data", cfg);
  return {{"content_hash", manifest.content_hash}, {"images", dc.classes.size() * (dc.count(synthset::Split::train) + dc.count(synthset::Split::val) + dc.count(synthset::Split::test))}, {"out", dir.string()}};
}

json run_train(const json& cfg) {
  auto ds = synthset::load_dataset(cfg.at("data").get<std::string>());
  trainer::TrainConfig tc;
  tc.seed = cfg.at("seed").get<std::uint64_t>();
  tc.learning_rate = cfg.at("learning_rate").get<double>();
  tc.momentum = cfg.at("momentum").get<double>();
  tc.batch_size = cfg.at("batch_size").get<std::size_t>();
  tc.lr_decay_per_epoch = cfg.at("lr_decay_per_epoch").get<double>();
  tc.max_epochs = cfg.at("max_epochs").get<std::size_t>();
  tc.early_stop_patience = cfg.at("early_stop_patience").get<std::size_t>();
  tc.validate();
  auto model = netgraph::make_tiny_compose(synthset::class_names(ds.classes()), ds.config.canvas_size, tc.seed);
  auto result = trainer::train(model, ds, tc);
  const fs::path dir = out_dir(cfg);
  netgraph::save_checkpoint(result.model, {tc.seed, result.best_epoch}, dir);
  write_file_atomic(dir / "history.csv", trainer::history_csv(result.history));
  const double test_acc = trainer::evaluate_accuracy(result.model, ds.split(synthset::Split::test));
  write_json(dir / "metrics.json", {{"best_epoch", result.best_epoch},
                                    {"epochs_run", result.history.size()},
                                    {"early_stopped", result.early_stopped},
                                    {"test_accuracy", test_acc},
                                    {"dataset_hash", ds.content_hash}});
  write_resolved_config(dir, "train", cfg);
  return {{"test_accuracy", test_acc}, {"best_epoch", result.best_epoch}, {"out", dir.string()}};
}

json run_extract(const json& cfg) {
  const fs::path data = cfg.at("data").get<std::string>();
  const auto dc = dataset_config(data);
  auto model = load_model(cfg, synthset::class_names(dc.classes));
  const auto layers = layers_of(cfg, model);
  const auto k = k_of(cfg, model, layers);
  std::optional<synthset::ConceptDataset> ds;
  auto sel = select_images(cfg, dc, [&]() -> const synthset::ConceptDataset& {
    if (!ds) ds = synthset::load_dataset(data);
    return *ds;
  });
  std::set<std::size_t> targets = sel.targets;
  if (!cfg.at("targets").empty()) {
    targets.clear();
    for (const auto& t : cfg.at("targets")) targets.insert(t.get<std::size_t>());
  }
  const auto method = cla::parse_method(cfg.at("method").get<std::string>());
  const auto opt = build_options(cfg, sel.id);
  std::vector<cla::AttributionMatrix> mats;
  cla::Circuit circuit = make_circuit(method, model, layers, k, sel, opt, targets, &mats);

  const fs::path dir = out_dir(cfg);
  save_circuit_json(circuit, dir / "circuit.json");
  write_file_atomic(dir / "circuit.dot", export_circuit_dot(circuit));
  if (cfg.at("write_traces").get<bool>()) {
    for (std::size_t i = 0; i < mats.size(); ++i) {
      cla::write_trace(mats[i], dir / "traces" / ("pair_" + std::to_string(i) + ".trace"));
    }
  }
  write_resolved_config(dir, "extract", cfg);
  return {{"method", cla::to_string(method)},
          {"k", k},
          {"sweeps", circuit.provenance.sweeps},
          {"termination", cla::to_string(circuit.provenance.termination)},
          {"out", dir.string()}};
}

json run_prune(const json& cfg) {
  auto ds = synthset::load_dataset(cfg.at("data").get<std::string>());
  auto model = load_model(cfg, synthset::class_names(ds.classes()));
  auto circuit = load_circuit_json(cfg.at("circuit").get<std::string>());
  const auto concept_id = optional_index(cfg, "concept");
  if (!concept_id) throw ValidationError("prune needs 'concept' to define positive and negative classes");
  const auto kind = intervene::parse_kind(cfg.at("intervention").get<std::string>());
  auto report = evalkit::knockout_eval(model, ds, synthset::parse_split(cfg.at("split").get<std::string>()),
                                       *concept_id, circuit, kind);
  const fs::path dir = out_dir(cfg);
  write_json(dir / "knockout.json", report.to_json());
  write_file_atomic(dir / "knockout.csv", evalkit::knockout_csv({report}));
  write_resolved_config(dir, "prune", cfg);
  return {{"positive_accuracy", report.positive_accuracy}, {"negative_accuracy", report.negative_accuracy},
          {"out", dir.string()}};
}

std::size_t default_donor_class(const std::vector<synthset::CompositeClass>& classes, std::size_t input_class) {
  const auto& in = classes.at(input_class);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (!classes[c].contains(in.concepts.first) && !classes[c].contains(in.concepts.second)) return c;
  }
  throw ValidationError("no class is disjoint from the input class's concepts");
}

json run_patch(const json& cfg) {
  auto ds = synthset::load_dataset(cfg.at("data").get<std::string>());
  auto model = load_model(cfg, synthset::class_names(ds.classes()));
  auto circuit = load_circuit_json(cfg.at("circuit").get<std::string>());
  const auto split = synthset::parse_split(cfg.at("split").get<std::string>());
  const auto& data = ds.split(split);
  std::optional<std::size_t> class_id = optional_index(cfg, "class");
  const auto concept_id = optional_index(cfg, "concept");
  if (!class_id && !concept_id) throw ValidationError("patch needs 'class' or 'concept' to choose its inputs");
  std::set<std::size_t> input_classes;
  if (class_id) {
    input_classes.insert(*class_id);
  } else {
    for (std::size_t c : ds.positive_classes(*concept_id)) input_classes.insert(c);
  }
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < data.images.size(); ++i)
    if (input_classes.count(data.labels[i])) inputs.push_back(data.images[i]);
  if (inputs.empty()) throw ValidationError("no inputs for the requested classes in this split");

  std::size_t donor_class;
  if (auto d = optional_index(cfg, "donor_class")) {
    donor_class = *d;
  } else if (class_id) {
    donor_class = default_donor_class(ds.classes(), *class_id);
  } else {
    donor_class = ds.negative_classes(*concept_id).front();
  }
  std::vector<std::size_t> donor_pool;
  for (std::size_t i = 0; i < data.images.size(); ++i)
    if (data.labels[i] == donor_class) donor_pool.push_back(i);
  if (donor_pool.empty()) throw ValidationError("donor class has no images", {{"donor_class", donor_class}});
  Rng rng(derive_seed({cfg.at("seed").get<std::uint64_t>(), donor_class}));
  const std::size_t donor_index = donor_pool[rng.below(donor_pool.size())];
  const double kl = evalkit::mean_patch_kl(model, inputs, circuit, data.images[donor_index]);

  const fs::path dir = out_dir(cfg);
  json summary = {{"mean_kl", kl},
                  {"inputs", inputs.size()},
                  {"donor_class", donor_class},
                  {"donor_index", donor_index},
                  {"method", cla::to_string(circuit.method)}};
  write_json(dir / "patch.json", summary);
  write_resolved_config(dir, "patch", cfg);
  summary["out"] = dir.string();
  return summary;
}

json run_eval(const json& cfg) {
  auto ds = synthset::load_dataset(cfg.at("data").get<std::string>());
  auto model = load_model(cfg, synthset::class_names(ds.classes()));
  const auto layers = layers_of(cfg, model);
  const auto k = k_of(cfg, model, layers);
  const auto kind = intervene::parse_kind(cfg.at("intervention").get<std::string>());
  const auto split = synthset::parse_split(cfg.at("split").get<std::string>());
  std::vector<std::size_t> concepts;
  if (auto c = optional_index(cfg, "concept")) {
    concepts.push_back(*c);
  } else {
    for (std::size_t c = 0; c < synthset::kNumConcepts; ++c) concepts.push_back(c);
  }
  std::vector<cla::Method> methods;
  for (const auto& m : cfg.at("methods")) methods.push_back(cla::parse_method(m.get<std::string>()));

  std::vector<evalkit::KnockoutReport> reports;
  for (std::size_t c : concepts) {
    json sub = cfg;
    sub["concept"] = c;
    sub["class"] = nullptr;
    sub["rule"] = "both_neighbors";
    sub["max_sweeps"] = 50;
    auto sel = select_images(sub, ds.config, [&]() -> const synthset::ConceptDataset& { return ds; });
    const auto opt = build_options(sub, sel.id);
    for (auto method : methods) {
      auto circuit = make_circuit(method, model, layers, k, sel, opt, sel.targets);
      reports.push_back(evalkit::knockout_eval(model, ds, split, c, circuit, kind));
    }
  }
  const fs::path dir = out_dir(cfg);
  write_file_atomic(dir / "eval.csv", evalkit::knockout_csv(reports));
  json all = json::array();
  for (const auto& r : reports) all.push_back(r.to_json());
  write_json(dir / "summary.json", {{"reports", all}, {"k", k}, {"layers", layers}});
  write_resolved_config(dir, "eval", cfg);
  return {{"reports", reports.size()}, {"out", dir.string()}};
}

json run_sweep(const json& cfg) {
  auto ds = synthset::load_dataset(cfg.at("data").get<std::string>());
  auto model = load_model(cfg, synthset::class_names(ds.classes()));
  const auto layers = layers_of(cfg, model);
  const std::size_t concept_id = cfg.at("concept").get<std::size_t>();
  json sub = cfg;
  sub["class"] = nullptr;
  sub["rule"] = "both_neighbors";
  sub["max_sweeps"] = 50;
  auto sel = select_images(sub, ds.config, [&]() -> const synthset::ConceptDataset& { return ds; });
  const auto opt = build_options(sub, sel.id);
  auto mats = cla::attribution_matrices(model, layers, sel.images);

  std::size_t widest = 0;
  for (const auto& l : layers) widest = std::max(widest, model.width(l));
  const std::size_t k_min = cfg.at("k_min").get<std::size_t>();
  const std::size_t k_max = cfg.at("k_max").is_null() ? widest : cfg.at("k_max").get<std::size_t>();
  if (k_min > k_max) throw ValidationError("k_min exceeds k_max", {{"k_min", k_min}, {"k_max", k_max}});
  std::vector<std::size_t> ks;
  for (std::size_t k = k_min; k <= k_max; ++k) ks.push_back(k);

  const auto split = synthset::parse_split(cfg.at("split").get<std::string>());
  const auto& data = ds.split(split);
  const auto positive = ds.positive_classes(concept_id);
  evalkit::LabeledSet inputs;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    if (std::find(positive.begin(), positive.end(), data.labels[i]) == positive.end()) continue;
    inputs.images.push_back(data.images[i]);
    inputs.labels.push_back(data.labels[i]);
  }
  std::vector<std::size_t> nonzero;
  for (std::size_t k : ks)
    if (k > 0) nonzero.push_back(k);
  auto stability = evalkit::stability_sweep(mats, nonzero, opt);
  auto curve = evalkit::partial_ablation_curve(model, mats, ks, inputs, opt);
  std::vector<double> kx, py;
  for (const auto& p : curve) kx.push_back(static_cast<double>(p.k)), py.push_back(p.correct_probability);
  const double rho = curve.size() >= 2 ? evalkit::spearman(kx, py) : 0.0;

  const fs::path dir = out_dir(cfg);
  write_file_atomic(dir / "stability.csv", evalkit::stability_csv(stability));
  write_file_atomic(dir / "ablation.csv", evalkit::ablation_csv(curve));
  write_json(dir / "summary.json", {{"concept", concept_id}, {"spearman", rho}, {"stability", stability.to_json()}});
  write_resolved_config(dir, "sweep", cfg);
  return {{"spearman", rho}, {"out", dir.string()}};
}

json run_export(const json& cfg) {
  auto circuit = load_circuit_json(cfg.at("circuit").get<std::string>());
  const std::string format = cfg.at("format").get<std::string>();
  const fs::path dir = out_dir(cfg);
  fs::path file;
  if (format == "json") {
    file = dir / "circuit.json";
    save_circuit_json(circuit, file);
  } else if (format == "dot") {
    file = dir / "circuit.dot";
    write_file_atomic(file, export_circuit_dot(circuit));
  } else {
    throw ValidationError("unknown export format '" + format + "' (expected json or dot)", {{"format", format}});
  }
  write_resolved_config(dir, "export", cfg);
  return {{"file", file.string()}};
}

json run_ingest(const json& cfg) {
  std::vector<fs::path> files;
  for (const auto& t : cfg.at("traces")) files.push_back(t.get<std::string>());
  if (files.empty()) throw ValidationError("ingest needs at least one trace file in 'traces'");
  const json& kj = cfg.at("k");
  std::vector<std::size_t> k;
  if (kj.is_null()) throw ValidationError("ingest needs 'k'");
  if (kj.is_number_integer()) {
    k.assign(files.size() + 1, kj.get<std::size_t>());
  } else {
    k = kj.get<std::vector<std::size_t>>();
  }
  auto circuit = cla::circuit_from_trace(files, k, build_options(cfg, cfg.at("image_set").get<std::string>()));
  const fs::path dir = out_dir(cfg);
  save_circuit_json(circuit, dir / "circuit.json");
  write_resolved_config(dir, "ingest", cfg);
  return {{"sweeps", circuit.provenance.sweeps}, {"out", dir.string()}};
}

}  // namespace

json run_command(std::string_view command, const json& config) {
  if (command == "gen-data") return run_gen_data(config);
  if (command == "train") return run_train(config);
  if (command == "extract") return run_extract(config);
  if (command == "prune") return run_prune(config);
  if (command == "patch") return run_patch(config);
  if (command == "eval") return run_eval(config);
  if (command == "sweep") return run_sweep(config);
  if (command == "export") return run_export(config);
  if (command == "ingest") return run_ingest(config);
  throw ValidationError("unknown command '" + std::string(command) + "'", {{"command", command}});
}

}  // namespace circuitlens::cli
