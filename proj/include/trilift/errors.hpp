// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace trilift {

// Raised when a numeric computation produces non-finite values; carries enough
// context (step, ray, object) to locate the failure.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Raised for malformed configuration (dimension mismatches, bad files).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace trilift
