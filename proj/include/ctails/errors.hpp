#pragma once

#include <stdexcept>
#include <string>

namespace ctails {

// Invalid user-facing configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A memory/cost guard tripped (CLI exit code 3). `guard()` names the limit.
class ResourceGuardError : public std::runtime_error {
 public:
  ResourceGuardError(std::string guard, const std::string& msg)
      : std::runtime_error(guard + ": " + msg), guard_(std::move(guard)) {}
  const std::string& guard() const { return guard_; }

 private:
  std::string guard_;
};

}  // namespace ctails
