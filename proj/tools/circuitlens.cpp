// circuitlens command-line entry point. Every config key of a command is also
// a flag (underscores become dashes); flags override the --config file.
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "circuitlens/cli/commands.hpp"
#include "circuitlens/cli/config.hpp"
#include "circuitlens/common/error.hpp"

using nlohmann::json;

namespace {

std::string flag_name(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

// Numbers, booleans and null parse as JSON; anything else is a string.
json parse_scalar(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded() || v.is_object() || v.is_array() || v.is_string()) return text;
  return v;
}

struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::vector<std::string>> values;
};

int fail(const circuitlens::Error& e) {
  std::cerr << json{{"error", e.to_json()}}.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Circuit discovery workbench for TinyCompose models", "circuitlens"};
  app.set_version_flag("--version", std::string(circuitlens::cli::tool_version()));
  app.require_subcommand(1);

  std::map<std::string, Subcommand> subs;
  for (const auto& name : circuitlens::cli::command_names()) {
    Subcommand& s = subs[name];
    s.app = app.add_subcommand(name);
    s.app->add_option("--config", s.config_path, "JSON config file")->check(CLI::ExistingFile);
    const json defaults = circuitlens::cli::command_defaults(name);
    for (const auto& [key, def] : defaults.items()) {
      auto* opt = s.app->add_option(flag_name(key), s.values[key]);
      if (def.is_array() || key == "k") {
        opt->expected(1, -1);
      } else {
        opt->expected(1);
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (auto& [name, s] : subs) {
    if (!s.app->parsed()) continue;
    try {
      const json defaults = circuitlens::cli::command_defaults(name);
      json overrides = json::object();
      for (const auto& [key, raw] : s.values) {
        if (raw.empty()) continue;
        const json& def = defaults.at(key);
        if (def.is_array() || (key == "k" && raw.size() > 1)) {
          json arr = json::array();
          for (const auto& r : raw) arr.push_back(parse_scalar(r));
          overrides[key] = arr;
        } else if (def.is_string()) {
          overrides[key] = raw.front();
        } else {
          overrides[key] = parse_scalar(raw.front());
        }
      }
      json file = s.config_path.empty() ? json::object() : circuitlens::cli::read_config_file(s.config_path);
      json config = circuitlens::cli::resolve_config(name, file, overrides);
      std::cout << circuitlens::cli::run_command(name, config).dump() << "\n";
      return 0;
    } catch (const circuitlens::Error& e) {
      return fail(e);
    } catch (const std::exception& e) {
      return fail(circuitlens::Error("internal_error", e.what()));
    }
  }
  return 2;
}
