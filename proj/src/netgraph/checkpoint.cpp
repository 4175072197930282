#include "circuitlens/netgraph/checkpoint.hpp"

#include "circuitlens/common/canonical_json.hpp"
#include "circuitlens/common/error.hpp"
#include "circuitlens/common/files.hpp"
#include "circuitlens/numerics/serialize.hpp"

namespace circuitlens::netgraph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr const char* kFormat = "circuitlens-checkpoint";
constexpr int kVersion = 1;
}  // namespace

void save_checkpoint(const ModelGraph& model, const CheckpointMeta& meta, const fs::path& dir) {
  json layers = json::array();
  for (const auto& l : model.layers()) {
    json entry = {{"name", l.name},       {"kind", std::string(to_string(l.kind))},
                  {"width", l.width},     {"stride", l.stride},
                  {"padding", l.padding}, {"pool_size", l.pool_size},
                  {"global_pool", l.global_pool}};
    auto write_param = [&](const std::optional<Tensor>& t, const char* role) {
      if (!t) return;
      const std::string file = l.name + "." + role + ".tensor";
      const std::string bytes = numerics::encode_tensor(*t);
      write_file_atomic(dir / file, bytes);
      entry[role] = {{"file", file}, {"sha256", sha256_hex(bytes)}};
    };
    write_param(l.weight, "weight");
    write_param(l.bias, "bias");
    layers.push_back(std::move(entry));
  }
  json manifest = {{"format", kFormat},
                   {"version", kVersion},
                   {"input_shape", model.input_shape()},
                   {"class_names", model.class_names()},
                   {"seed", meta.seed},
                   {"epoch", meta.epoch},
                   {"layers", std::move(layers)}};
  write_file_atomic(dir / "model.json", canonical_dump(manifest));
}

LoadedCheckpoint load_checkpoint(const fs::path& dir, const std::optional<std::vector<std::string>>& expected_classes) {
  const fs::path manifest_path = dir / "model.json";
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what(), {{"path", manifest_path.string()}});
  }
  try {
    if (manifest.at("format") != kFormat || manifest.at("version") != kVersion) {
      throw ParseError(manifest_path.string() + ": not a version-1 checkpoint manifest",
                       {{"path", manifest_path.string()}});
    }
    auto class_names = manifest.at("class_names").get<std::vector<std::string>>();
    if (expected_classes && *expected_classes != class_names) {
      throw ValidationError("checkpoint class names do not match the expected class list (names or order differ)",
                            {{"path", manifest_path.string()}, {"checkpoint", class_names},
                             {"expected", *expected_classes}});
    }
    std::vector<LayerSpec> layers;
    for (const auto& e : manifest.at("layers")) {
      LayerSpec l;
      l.name = e.at("name").get<std::string>();
      l.kind = parse_layer_kind(e.at("kind").get<std::string>());
      l.width = e.at("width").get<std::size_t>();
      l.stride = e.at("stride").get<std::size_t>();
      l.padding = e.at("padding").get<std::size_t>();
      l.pool_size = e.at("pool_size").get<std::size_t>();
      l.global_pool = e.at("global_pool").get<bool>();
      auto read_param = [&](const char* role) -> std::optional<Tensor> {
        if (!e.contains(role)) return std::nullopt;
        const fs::path file = dir / e[role].at("file").get<std::string>();
        const std::string bytes = read_file(file);
        if (sha256_hex(bytes) != e[role].at("sha256").get<std::string>()) {
          throw ParseError(file.string() + ": content hash mismatch (corrupt or truncated)", {{"path", file.string()}});
        }
        try {
          return numerics::decode_tensor(bytes);
        } catch (const ParseError& pe) {
          json d = pe.details();
          d["path"] = file.string();
          throw ParseError(file.string() + ": " + pe.what(), d);
        }
      };
      l.weight = read_param("weight");
      l.bias = read_param("bias");
      layers.push_back(std::move(l));
    }
    CheckpointMeta meta{manifest.at("seed").get<std::uint64_t>(), manifest.at("epoch").get<std::size_t>()};
    ModelGraph model(manifest.at("input_shape").get<Shape>(), std::move(layers), std::move(class_names));
    return {std::move(model), meta};
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": malformed manifest: " + e.what(), {{"path", manifest_path.string()}});
  }
}

}  // namespace circuitlens::netgraph
