#pragma once

#include <stdexcept>
#include <string>

namespace lnd {

// Error taxonomy. Every failure mode surfaced by the library throws one of
// these; callers that need process exit codes catch at the CLI boundary.

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
  // line is 1-based; 0 when the location is not line-oriented.
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what
                                : what),
        line(line) {}
  std::size_t line = 0;
};

struct InputError : std::runtime_error {
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

struct SamplingError : std::runtime_error {
  explicit SamplingError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss or gradient during an optimization step.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what)
      : std::runtime_error(what) {}
};

// Iterative solver failed to reach tolerance within its budget.
struct ConvergenceError : std::runtime_error {
  explicit ConvergenceError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace lnd
