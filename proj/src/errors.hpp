#pragma once

#include <stdexcept>
#include <string>

namespace tmld {

// Error taxonomy mirrors the CLI exit codes: invalid parameters / config
// problems are distinct from runtime numerics failures.

struct InvalidParameterError : std::runtime_error {
  explicit InvalidParameterError(const std::string& what) : std::runtime_error(what) {}
};

struct SchemaError : InvalidParameterError {
  explicit SchemaError(const std::string& what) : InvalidParameterError(what) {}
};

struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

// Triangular inversion failure; carries the component index that failed.
struct InversionError : NumericsError {
  int component;
  InversionError(int comp, const std::string& what) : NumericsError(what), component(comp) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tmld
