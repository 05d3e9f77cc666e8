/*
 * Copyright 2026 The stainvar Authors.
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

namespace stainvar {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes (see tools/stainvar.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ScheduleError : public Error {
 public:
  using Error::Error;
};

// A token pyramid or checkpoint was paired with a codebook/model it was not
// produced by.
class HashMismatchError : public Error {
 public:
  using Error::Error;
};

// Non-finite activations or a diverging loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class MissingPrerequisiteError : public Error {
 public:
  using Error::Error;
};

// Parameters that must stay frozen during a training stage changed.
class FrozenDriftError : public Error {
 public:
  using Error::Error;
};

// A statistic is undefined for the given input (zero variance, one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kTrailingBytes,
  kIndexOutOfRange,
  kInvalidSchedule,
  kChecksumMismatch,
  kMalformed,
};

const char* to_string(FormatErrorKind kind) noexcept;

// Raised by every binary decoder (token pyramids, checkpoints, images).
class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

}  // namespace stainvar
