#pragma once

#include <stdexcept>
#include <string>

namespace lorenz {

// Every failure the toolkit reports maps onto one CLI exit code.
enum class ExitCode : int {
  ok = 0,
  config = 2,
  precondition = 3,
  resource = 4,
  certificate = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(kind) {}
  ExitCode code() const noexcept { return code_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ExitCode code_;
  std::string kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ExitCode::config, "config", w) {}
};

// Domain errors (sqrt of negatives, roof on D, ...) are precondition violations.
struct PreconditionError : Error {
  explicit PreconditionError(const std::string& w) : Error(ExitCode::precondition, "precondition", w) {}
  PreconditionError(const std::string& kind, const std::string& w) : Error(ExitCode::precondition, kind, w) {}
};

struct ResourceError : Error {
  explicit ResourceError(const std::string& w) : Error(ExitCode::resource, "resource", w) {}
};

struct CertificateError : Error {
  explicit CertificateError(const std::string& w) : Error(ExitCode::certificate, "certificate", w) {}
};

}  // namespace lorenz
