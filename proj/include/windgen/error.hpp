#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace windgen {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violation.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration; carries every violation found.
class ConfigError : public InputError {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : InputError(join(issues)), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string s = "invalid config:";
    for (const auto& i : issues) s += " " + i + ";";
    return s;
  }
  std::vector<std::string> issues_;
};

/// Malformed or incomplete file contents (missing column, bad header, ...).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A row of a data file could not be parsed.
class RowError : public Error {
 public:
  RowError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// A file was empty.
class EmptyFileError : public Error {
 public:
  using Error::Error;
};

/// A value became NaN or infinite during a computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling found no sample matching the requested condition.
class NoMassError : public Error {
 public:
  using Error::Error;
};

}  // namespace windgen
