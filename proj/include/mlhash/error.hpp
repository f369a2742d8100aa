// Copyright 2026 The mlhash Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mlhash {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents (bad magic, truncated payload, bad header).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Inputs that violate a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Configuration that cannot be satisfied by the data (e.g. class too small).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced or consumed during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad command-line usage; the CLI maps this to exit status 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace mlhash
