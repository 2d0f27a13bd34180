#pragma once

#include <stdexcept>
#include <string>

namespace proseco {

/// Violated precondition, shape mismatch, invalid configuration. CLI exit code 1.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : ContractError {
    explicit ShapeError(const std::string& msg) : ContractError(msg) {}
};

/// A softmax row with no unmasked entry, or a batch too small to form relations.
struct DegenerateError : ContractError {
    explicit DegenerateError(const std::string& msg) : ContractError(msg) {}
};

struct ConfigError : ContractError {
    explicit ConfigError(const std::string& msg) : ContractError(msg) {}
};

/// Filesystem / serialization failures. CLI exit code 2.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : IoError {
    explicit FormatError(const std::string& msg) : IoError(msg) {}
};

}  // namespace proseco
