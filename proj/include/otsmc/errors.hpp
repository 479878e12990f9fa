#pragma once

#include <stdexcept>
#include <string>

namespace otsmc {

/// All weights vanished (every log-weight is -inf or NaN).
class WeightCollapse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transport marginals do not carry the same total mass.
class MarginalMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A returned coupling failed its optimality certificate. Always a bug.
class CertificateFailure : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NoProposals : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InvalidPotential : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad run configuration; `key` names the offending setting.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument(message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace otsmc
