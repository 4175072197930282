#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "json.hpp"

namespace circuitlens {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag; `details()` carries the structured fields the CLI
/// serializes into its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message,
        nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message),
        kind_(std::move(kind)),
        details_(std::move(details)) {}

  const std::string& kind() const noexcept { return kind_; }
  const nlohmann::json& details() const noexcept { return details_; }

  nlohmann::json to_json() const {
    return {{"kind", kind_}, {"message", what()}, {"details", details_}};
  }

 private:
  std::string kind_;
  nlohmann::json details_;
};

class ShapeError : public Error {
 public:
  ShapeError(const std::string& message, nlohmann::json details = nlohmann::json::object())
      : Error("shape_error", message, std::move(details)) {}
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& message, nlohmann::json details = nlohmann::json::object())
      : Error("validation_error", message, std::move(details)) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, nlohmann::json details = nlohmann::json::object())
      : Error("parse_error", message, std::move(details)) {}
};

class IoError : public Error {
 public:
  IoError(const std::string& message, nlohmann::json details = nlohmann::json::object())
      : Error("io_error", message, std::move(details)) {}
};

class NumericError : public Error {
 public:
  NumericError(const std::string& message, nlohmann::json details = nlohmann::json::object())
      : Error("numeric_error", message, std::move(details)) {}
};

}  // namespace circuitlens
