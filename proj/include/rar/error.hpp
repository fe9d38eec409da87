#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rar {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(std::string message) : std::runtime_error(std::move(message)) {}
};

// A caller broke a documented precondition (duplicate verdict index, k < 2, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data failed a schema or range check.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Model output could not be parsed. Keeps the raw text for audit.
class ParseError : public Error {
 public:
  ParseError(std::string message, std::string raw)
      : Error(std::move(message)), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// A template placeholder was missing or unknown, or a template precondition failed.
class TemplateError : public Error {
 public:
  using Error::Error;
};

// A judge backend exhausted its attempts (transport or parse failures).
class JudgeFailure : public Error {
 public:
  using Error::Error;
};

// Bad run configuration. Collects all violations before surfacing.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rar
