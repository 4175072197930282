#include "circuitlens/cli/config.hpp"

#include "circuitlens/common/canonical_json.hpp"
#include "circuitlens/common/error.hpp"
#include "circuitlens/common/files.hpp"

#ifndef CIRCUITLENS_VERSION
#define CIRCUITLENS_VERSION "0.0.0"
#endif

namespace circuitlens::cli {

using nlohmann::json;

namespace {

const json& all_defaults() {
  static const json d = {
      {"gen-data",
       {{"seed", 0},
        {"out", "data"},
        {"canvas_size", 48},
        {"patch_size", 16},
        {"background_value", 0.5},
        {"train_per_class", 300},
        {"val_per_class", 50},
        {"test_per_class", 50},
        {"png_samples", 0}}},
      {"train",
       {{"seed", 0},
        {"data", "data"},
        {"out", "model"},
        {"learning_rate", 0.01},
        {"momentum", 0.9},
        {"batch_size", 64},
        {"lr_decay_per_epoch", 0.005},
        {"max_epochs", 30},
        {"early_stop_patience", 5}}},
      {"extract",
       {{"seed", 0},
        {"data", "data"},
        {"model", "model"},
        {"out", "circuit"},
        {"layers", json::array()},
        {"k", nullptr},
        {"k_fraction", 0.25},
        {"method", "cla"},
        {"concept", nullptr},
        {"class", nullptr},
        {"probes", 25},
        {"targets", json::array()},
        {"rule", "both_neighbors"},
        {"max_sweeps", 50},
        {"write_traces", false}}},
      {"prune",
       {{"seed", 0},
        {"data", "data"},
        {"model", "model"},
        {"circuit", "circuit/circuit.json"},
        {"out", "prune"},
        {"intervention", "edge"},
        {"concept", nullptr},
        {"split", "test"}}},
      {"patch",
       {{"seed", 0},
        {"data", "data"},
        {"model", "model"},
        {"circuit", "circuit/circuit.json"},
        {"out", "patch"},
        {"class", nullptr},
        {"concept", nullptr},
        {"donor_class", nullptr},
        {"split", "test"}}},
      {"eval",
       {{"seed", 0},
        {"data", "data"},
        {"model", "model"},
        {"out", "eval"},
        {"layers", json::array()},
        {"k", nullptr},
        {"k_fraction", 0.25},
        {"concept", nullptr},
        {"methods", {"cla", "random", "max_activation", "weight_magnitude"}},
        {"intervention", "edge"},
        {"probes", 25},
        {"split", "test"}}},
      {"sweep",
       {{"seed", 0},
        {"data", "data"},
        {"model", "model"},
        {"out", "sweep"},
        {"layers", json::array()},
        {"concept", 0},
        {"probes", 25},
        {"k_min", 0},
        {"k_max", nullptr},
        {"split", "test"}}},
      {"export", {{"seed", 0}, {"circuit", "circuit/circuit.json"}, {"out", "export"}, {"format", "dot"}}},
      {"ingest",
       {{"seed", 0},
        {"traces", json::array()},
        {"k", nullptr},
        {"out", "ingest"},
        {"image_set", ""},
        {"rule", "both_neighbors"},
        {"max_sweeps", 50}}},
  };
  return d;
}

// Keys whose default is null accept these types once set.
bool is_count(const json& v) { return v.is_number_integer() && v.get<std::int64_t>() >= 0; }

bool null_default_accepts(const std::string& key, const json& v) {
  if (key == "k") return is_count(v) || v.is_array();
  if (key == "concept" || key == "class" || key == "donor_class" || key == "k_max") return is_count(v);
  return false;
}

bool same_type(const json& def, const json& v) {
  if (def.is_number_float()) return v.is_number();
  if (def.is_number_integer()) return is_count(v);
  return def.type() == v.type();
}

}  // namespace

std::string_view tool_version() { return CIRCUITLENS_VERSION; }

json command_defaults(std::string_view command) {
  const json& all = all_defaults();
  auto it = all.find(std::string(command));
  if (it == all.end()) throw ValidationError("unknown command '" + std::string(command) + "'", {{"command", command}});
  return *it;
}

std::vector<std::string> command_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : all_defaults().items()) out.push_back(k);
  return out;
}

json resolve_config(std::string_view command, const json& file, const json& overrides) {
  json cfg = command_defaults(command);
  if (!file.is_null() && !file.is_object()) throw ValidationError("config must be a JSON object");
  std::vector<std::string> unknown;
  json bad_types = json::array();
  for (const json* layer : {&file, &overrides}) {
    if (layer->is_null()) continue;
    for (const auto& [key, value] : layer->items()) {
      if (!cfg.contains(key)) {
        unknown.push_back(key);
        continue;
      }
      const json def = command_defaults(command).at(key);
      const bool ok = value.is_null() ? def.is_null() : def.is_null() ? null_default_accepts(key, value)
                                                                      : same_type(def, value);
      if (!ok) {
        bad_types.push_back({{"key", key}, {"expected", def.is_null() ? "integer or list" : def.type_name()},
                             {"got", value.type_name()}});
        continue;
      }
      cfg[key] = value;
    }
  }
  if (!unknown.empty() || !bad_types.empty()) {
    std::string msg = "invalid configuration for '" + std::string(command) + "':";
    for (const auto& k : unknown) msg += " unknown key '" + k + "';";
    for (const auto& b : bad_types) {
      msg += " key '" + b["key"].get<std::string>() + "' expects " + b["expected"].get<std::string>() + ";";
    }
    msg.pop_back();
    throw ValidationError(msg, {{"command", command}, {"unknown_keys", unknown}, {"type_errors", bad_types}});
  }
  return cfg;
}

json read_config_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    json j = json::parse(text);
    // A resolved_config.json written by an earlier run replays its settings.
    if (j.is_object() && j.size() == 3 && j.contains("command") && j.contains("tool_version") && j.contains("config")) {
      return j.at("config");
    }
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), {{"path", path.string()}, {"byte_offset", e.byte}});
  }
}

void write_resolved_config(const std::filesystem::path& dir, std::string_view command, const json& config) {
  json j = {{"command", command}, {"tool_version", tool_version()}, {"config", config}};
  write_file_atomic(dir / "resolved_config.json", canonical_dump(j) + "\n");
}

}  // namespace circuitlens::cli
