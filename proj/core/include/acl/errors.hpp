#pragma once

#include <stdexcept>
#include <string>

namespace acl {

// Invalid tensor or layer geometry; messages name the offending axis.
class ShapeError : public std::runtime_error {
public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration (unknown key, invalid value). Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated runtime contract (frozen parameter changed, memory over budget,
// missing gradient, ...). Maps to CLI exit code 2.
class ContractError : public std::runtime_error {
public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable, truncated or wrong-version checkpoint/dataset file.
class CheckpointError : public std::runtime_error {
public:
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace acl
