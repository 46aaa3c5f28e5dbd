// SPDX-License-Identifier: Apache-2.0
/**
 * @file   errors.hpp
 * @brief  Exception hierarchy shared by every vqa module.
 *
 * The CLI maps these onto exit codes: ConfigError -> 1, FormatError /
 * ValidationError / IoError -> 2, NumericError -> 3.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace vqa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or parameter shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary feature file or checkpoint.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Semantically invalid data (manifest records, splits, batches).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, degenerate statistics, empty sequences.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable files.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vqa
