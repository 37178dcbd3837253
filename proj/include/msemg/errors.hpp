#pragma once

#include <stdexcept>
#include <string>

namespace msemg {

/// Input failed validation (bad shapes, out-of-range settings, corrupt manifests).
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// File could not be read or written.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// A computation produced a non-finite value. `op` names the stage that failed.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& op, const std::string& what)
      : std::runtime_error(op + ": " + what), op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

/// Checkpoint or canonical file with wrong magic or unsupported version.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

void require(bool condition, const std::string& message);

}  // namespace msemg
