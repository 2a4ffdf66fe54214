/*
 * Copyright 2026 The rlface Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace rlface {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A network operation failed in a way that may succeed on retry
// (connection failure, HTTP 429, HTTP 5xx).
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0)
      : Error(what), status_(status) {}
  int status() const { return status_; }
  bool retriable() const { return true; }

 private:
  int status_;
};

// An upstream payload could not be interpreted. The raw payload is kept for
// diagnosis.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string payload)
      : Error(what), payload_(std::move(payload)) {}
  const std::string& payload() const { return payload_; }

 private:
  std::string payload_;
};

// A precondition that the caller controls was violated (wrong shape, missing
// field, filter applied in the wrong order).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A single record or image was rejected; `reason` is machine readable.
class Rejection : public Error {
 public:
  explicit Rejection(std::string reason)
      : Error(reason), reason_(std::move(reason)) {}
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

// Bad configuration value, detected before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A stage input produced by an earlier stage is missing.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

// A computed report failed one of its own consistency checks.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace rlface
