#include "circuitlens/common/canonical_json.hpp"

#include <cmath>
#include <cstdio>

#include "circuitlens/common/error.hpp"

namespace circuitlens {
namespace {

void append_double(std::string& out, double v) {
  if (!std::isfinite(v)) throw ValidationError("non-finite number cannot be written as JSON");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  // Keep a decimal marker so the value reads back as floating point.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  out += s;
}

void dump(std::string& out, const nlohmann::json& v, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (v.type()) {
    case nlohmann::json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      // nlohmann::json objects are std::map-backed, so iteration is sorted.
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner;
        out += nlohmann::json(it.key()).dump();
        out += ": ";
        dump(out, it.value(), indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      bool scalars = true;
      for (const auto& e : v) scalars = scalars && !e.is_structured();
      if (scalars) {
        out += "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) out += ", ";
          dump(out, v[i], indent + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",\n";
        out += inner;
        dump(out, v[i], indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case nlohmann::json::value_t::number_float:
      append_double(out, v.get<double>());
      return;
    default:
      out += v.dump();
      return;
  }
}

}  // namespace

std::string canonical_dump(const nlohmann::json& value) {
  std::string out;
  dump(out, value, 0);
  out += "\n";
  return out;
}

}  // namespace circuitlens
