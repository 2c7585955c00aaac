#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace convctl {

/// Invalid model or scenario parameters (singular networks, bad ranges, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed to reach its tolerance or hit an ill-posed input.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Every problem found in a scenario or case file, each prefixed with its position.
class ValidationError : public ConfigError {
 public:
  explicit ValidationError(std::vector<std::string> errors)
      : ConfigError(join(errors)), errors_(std::move(errors)) {}

  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string out;
    for (const auto& e : errors) out += (out.empty() ? "" : "\n") + e;
    return out;
  }

  std::vector<std::string> errors_;
};

}  // namespace convctl
