// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hanet {

// Every exception raised by the library derives from Error. The category
// maps one-to-one onto the status codes of the C API and the CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes, bad configuration, bad input data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Missing or unwritable files, malformed containers.
class IoError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite loss during training.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::int64_t iteration)
      : Error(what), iteration_(iteration) {}
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

}  // namespace hanet
