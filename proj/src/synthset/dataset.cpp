#include "circuitlens/synthset/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "circuitlens/common/canonical_json.hpp"
#include "circuitlens/common/error.hpp"
#include "circuitlens/common/files.hpp"
#include "circuitlens/common/parallel.hpp"
#include "circuitlens/common/rng.hpp"
#include "circuitlens/numerics/serialize.hpp"

namespace circuitlens::synthset {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kPlacementAttempts = 100;
constexpr std::uint64_t kProbeTag = 3;

void hash_image(Sha256& h, const Tensor& image) {
  std::string bytes;
  bytes.reserve(image.numel() * 4);
  for (float v : image.data()) numerics::append_le_f32(bytes, v);
  h.update(bytes);
}

Tensor stack(const std::vector<Tensor>& images) {
  if (images.empty()) return Tensor::zeros({0});
  numerics::Shape shape = images.front().shape();
  std::vector<float> data;
  data.reserve(images.size() * images.front().numel());
  for (const auto& im : images) data.insert(data.end(), im.data().begin(), im.data().end());
  shape.insert(shape.begin(), images.size());
  return Tensor(std::move(shape), std::move(data));
}

std::vector<Tensor> unstack(const Tensor& batch) {
  if (batch.rank() != 4) throw ParseError("image file must hold a [N, 3, S, S] tensor");
  numerics::Shape shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = numerics::shape_numel(shape);
  std::vector<Tensor> out;
  auto data = batch.data();
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    out.emplace_back(shape, std::vector<float>(data.begin() + static_cast<std::ptrdiff_t>(i * n),
                                               data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  }
  return out;
}

std::string file_name(Split s, std::size_t class_id) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s/class_%02zu.tensor", std::string(to_string(s)).c_str(), class_id);
  return buf;
}

json config_json(const DatasetConfig& c) {
  json classes = json::array();
  for (const auto& cls : c.classes) classes.push_back({{"name", cls.name}, {"concepts", {cls.concepts.first, cls.concepts.second}}});
  return {{"seed", c.seed},
          {"canvas_size", c.canvas_size},
          {"patch_size", c.patch_size},
          {"background_value", c.background_value},
          {"splits", {{"train", c.per_class[0]}, {"val", c.per_class[1]}, {"test", c.per_class[2]}}},
          {"classes", classes}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.canvas_size = j.at("canvas_size").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.background_value = j.at("background_value").get<float>();
  const auto& s = j.at("splits");
  c.per_class = {s.at("train").get<std::size_t>(), s.at("val").get<std::size_t>(), s.at("test").get<std::size_t>()};
  c.classes.clear();
  for (const auto& cls : j.at("classes")) {
    c.classes.push_back({cls.at("name").get<std::string>(),
                         {cls.at("concepts").at(0).get<std::size_t>(), cls.at("concepts").at(1).get<std::size_t>()}});
  }
  return c;
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : kSplits)
    if (to_string(s) == name) return s;
  throw ValidationError("unknown split '" + std::string(name) + "'", {{"split", name}});
}

std::vector<CompositeClass> default_classes() {
  std::vector<CompositeClass> out;
  for (std::size_t i = 0; i < kNumConcepts; ++i) {
    for (std::size_t step : {1, 2}) {
      const std::size_t j = (i + step) % kNumConcepts;
      out.push_back({std::string(concepts()[i].name) + "-" + std::string(concepts()[j].name), {i, j}});
    }
  }
  return out;
}

std::vector<std::string> class_names(const std::vector<CompositeClass>& classes) {
  std::vector<std::string> out;
  for (const auto& c : classes) out.push_back(c.name);
  return out;
}

void DatasetConfig::validate() const {
  json problems = json::array();
  if (classes.size() != 20) problems.push_back("classes: expected 20 classes, got " + std::to_string(classes.size()));
  for (std::size_t s = 0; s < 3; ++s) {
    if (per_class[s] == 0) problems.push_back("splits." + std::string(to_string(kSplits[s])) + ": count must be > 0");
  }
  if (patch_size < 4) problems.push_back("patch_size: must be at least 4");
  if (canvas_size < 3 * patch_size) problems.push_back("canvas_size: must be at least 3 * patch_size");
  if (!(background_value >= 0.0f && background_value <= 1.0f)) problems.push_back("background_value: must be in [0, 1]");
  std::vector<std::string> seen;
  for (const auto& c : classes) {
    if (c.concepts.first >= kNumConcepts || c.concepts.second >= kNumConcepts) {
      problems.push_back("classes." + c.name + ": concept id out of range");
    } else if (c.concepts.first == c.concepts.second) {
      problems.push_back("classes." + c.name + ": concepts must differ");
    }
    if (std::find(seen.begin(), seen.end(), c.name) != seen.end()) problems.push_back("classes." + c.name + ": duplicate");
    seen.push_back(c.name);
  }
  if (!problems.empty()) {
    std::string msg = "invalid dataset config:";
    for (const auto& p : problems) msg += " " + p.get<std::string>() + ";";
    throw ValidationError(msg, {{"problems", problems}});
  }
}

json DatasetManifest::to_json() const {
  json splits = json::object();
  for (Split s : kSplits) splits[std::string(to_string(s))] = files[static_cast<std::size_t>(s)];
  return {{"format", "circuitlens-dataset"},
          {"version", 1},
          {"config", config_json(config)},
          {"content_hash", content_hash},
          {"files", splits}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  try {
    if (j.at("format") != "circuitlens-dataset") throw ParseError("not a dataset manifest");
    DatasetManifest m;
    m.config = config_from_json(j.at("config"));
    m.content_hash = j.at("content_hash").get<std::string>();
    for (Split s : kSplits) m.files.push_back(j.at("files").at(std::string(to_string(s))).get<std::vector<std::string>>());
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset manifest: ") + e.what());
  }
}

ImageSeeds image_seeds(std::uint64_t global_seed, std::size_t class_id, Split split, std::size_t index) {
  const std::uint64_t base = derive_seed({global_seed, class_id, static_cast<std::uint64_t>(split), index});
  return {derive_seed({base, 1}), derive_seed({base, 2}), derive_seed({base, 3})};
}

std::array<std::pair<std::size_t, std::size_t>, 2> place_patches(std::uint64_t placement_seed,
                                                                  const DatasetConfig& config) {
  const std::size_t S = config.canvas_size, P = config.patch_size;
  if (P > S) throw ValidationError("patch larger than canvas", {{"patch_size", P}, {"canvas_size", S}});
  Rng rng(placement_seed);
  const std::size_t span = S - P + 1;
  for (std::size_t attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    const std::size_t ax = rng.below(span), ay = rng.below(span);
    const std::size_t bx = rng.below(span), by = rng.below(span);
    const bool overlap = (ax < bx + P && bx < ax + P) && (ay < by + P && by < ay + P);
    if (!overlap) return {{{ax, ay}, {bx, by}}};
  }
  throw ValidationError("could not place two non-overlapping patches in " + std::to_string(kPlacementAttempts) +
                            " attempts",
                        {{"canvas_size", S}, {"patch_size", P}, {"attempts", kPlacementAttempts}});
}

Tensor compose_image(const CompositeClass& cls, std::uint64_t seed_a, std::uint64_t seed_b,
                     std::uint64_t placement_seed, const DatasetConfig& config) {
  const std::size_t S = config.canvas_size, P = config.patch_size;
  const auto boxes = place_patches(placement_seed, config);
  std::vector<float> canvas(3 * S * S, config.background_value);
  const Tensor patches[2] = {render_glyph(concept_by_id(cls.concepts.first), seed_a, P, static_cast<float>(config.background_value)),
                             render_glyph(concept_by_id(cls.concepts.second), seed_b, P, static_cast<float>(config.background_value))};
  for (std::size_t k = 0; k < 2; ++k) {
    auto src = patches[k].data();
    const auto [x0, y0] = boxes[k];
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t y = 0; y < P; ++y)
        for (std::size_t x = 0; x < P; ++x) canvas[(ch * S + y0 + y) * S + x0 + x] = src[(ch * P + y) * P + x];
  }
  return Tensor({3, S, S}, std::move(canvas));
}

Tensor normalize(const Tensor& image) {
  std::vector<float> v = image.to_vector();
  for (float& x : v) x = (x - 0.5f) / 0.25f;
  return Tensor(image.shape(), std::move(v));
}

std::vector<std::size_t> ConceptDataset::positive_classes(std::size_t concept_id) const {
  concept_by_id(concept_id);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < classes().size(); ++i)
    if (classes()[i].contains(concept_id)) out.push_back(i);
  return out;
}

std::vector<std::size_t> ConceptDataset::negative_classes(std::size_t concept_id) const {
  concept_by_id(concept_id);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < classes().size(); ++i)
    if (!classes()[i].contains(concept_id)) out.push_back(i);
  return out;
}

std::vector<Tensor> render_split_class(const DatasetConfig& config, Split split, std::size_t class_id) {
  const auto& cls = config.classes.at(class_id);
  std::vector<Tensor> out(config.count(split));
  parallel_for(out.size(), [&](std::size_t i) {
    const ImageSeeds s = image_seeds(config.seed, class_id, split, i);
    out[i] = compose_image(cls, s.glyph_a, s.glyph_b, s.placement, config);
  });
  return out;
}

ConceptDataset materialize(const DatasetConfig& config) {
  config.validate();
  ConceptDataset ds;
  ds.config = config;
  Sha256 hash;
  for (Split s : kSplits) {
    SplitData& data = ds.splits[static_cast<std::size_t>(s)];
    for (std::size_t c = 0; c < config.classes.size(); ++c) {
      for (const Tensor& im : render_split_class(config, s, c)) {
        hash_image(hash, im);
        data.images.push_back(normalize(im));
        data.labels.push_back(c);
      }
    }
  }
  ds.content_hash = hash.hex_digest();
  return ds;
}

DatasetManifest generate_dataset(const DatasetConfig& config, const fs::path& dir) {
  config.validate();
  DatasetManifest manifest;
  manifest.config = config;
  Sha256 hash;
  for (Split s : kSplits) {
    std::vector<std::string> files;
    for (std::size_t c = 0; c < config.classes.size(); ++c) {
      auto images = render_split_class(config, s, c);
      for (const Tensor& im : images) hash_image(hash, im);
      const std::string name = file_name(s, c);
      try {
        numerics::save_tensor(dir / name, stack(images));
      } catch (const Error&) {
        throw;
      } catch (const std::exception& e) {
        throw IoError((dir / name).string() + ": " + e.what(), {{"path", (dir / name).string()}});
      }
      files.push_back(name);
    }
    manifest.files.push_back(std::move(files));
  }
  manifest.content_hash = hash.hex_digest();
  write_file_atomic(dir / "manifest.json", canonical_dump(manifest.to_json()));
  return manifest;
}

ConceptDataset load_dataset(const fs::path& dir) {
  json j;
  try {
    j = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what(), {{"path", (dir / "manifest.json").string()}});
  }
  DatasetManifest m = DatasetManifest::from_json(j);
  m.config.validate();
  ConceptDataset ds;
  ds.config = m.config;
  Sha256 hash;
  for (Split s : kSplits) {
    SplitData& data = ds.splits[static_cast<std::size_t>(s)];
    const auto& files = m.files.at(static_cast<std::size_t>(s));
    if (files.size() != m.config.classes.size()) throw ParseError("manifest lists the wrong number of class files");
    for (std::size_t c = 0; c < files.size(); ++c) {
      auto images = unstack(numerics::load_tensor(dir / files[c]));
      if (images.size() != m.config.count(s)) {
        throw ParseError((dir / files[c]).string() + ": image count does not match the manifest",
                         {{"path", (dir / files[c]).string()}});
      }
      for (const Tensor& im : images) {
        hash_image(hash, im);
        data.images.push_back(normalize(im));
        data.labels.push_back(c);
      }
    }
  }
  ds.content_hash = hash.hex_digest();
  if (ds.content_hash != m.content_hash) {
    throw ParseError("dataset content hash mismatch (files modified or corrupt)",
                     {{"path", dir.string()}, {"expected", m.content_hash}, {"actual", ds.content_hash}});
  }
  return ds;
}

std::vector<Tensor> concept_probe_set(std::size_t concept_id, std::size_t n, const DatasetConfig& config,
                                      std::uint64_t seed) {
  const Concept& c = concept_by_id(concept_id);
  if (n == 0) throw ValidationError("probe set size must be positive");
  const CompositeClass pair{std::string(c.name) + "-" + std::string(c.name), {concept_id, concept_id}};
  std::vector<Tensor> out(n);
  parallel_for(n, [&](std::size_t i) {
    const std::uint64_t base = derive_seed({seed, concept_id, kProbeTag, i});
    out[i] = compose_image(pair, derive_seed({base, 1}), derive_seed({base, 2}), derive_seed({base, 3}), config);
  });
  return out;
}

void export_png(const Tensor& image, const fs::path& path) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("export_png expects a [3, H, W] image");
  const std::size_t H = image.dim(1), W = image.dim(2);
  std::vector<png_byte> rgb(H * W * 3);
  auto d = image.data();
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const float v = std::clamp(d[(ch * H + y) * W + x], 0.0f, 1.0f);
        rgb[(y * W + x) * 3 + ch] = static_cast<png_byte>(std::lround(v * 255.0f));
      }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(W);
  img.height = static_cast<png_uint_32>(H);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw IoError("png encoding failed: " + std::string(img.message), {{"path", path.string()}});
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&img, bytes.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw IoError("png encoding failed: " + std::string(img.message), {{"path", path.string()}});
  }
  bytes.resize(size);
  write_file_atomic(path, bytes);
}

}  // namespace circuitlens::synthset
