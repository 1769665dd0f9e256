// Copyright 2026 The SPI-GAN Authors.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spigan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an op's broadcasting/contraction rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class AutodiffError : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of a mathematical function (e.g. time not in [0,1]).
class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, std::size_t line, const std::string& what)
      : Error(line > 0 ? "config line " + std::to_string(line) + ": key '" + key + "': " + what
                       : "config key '" + key + "': " + what),
        key_(key),
        line_(line),
        detail_(what) {}

  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string key_;
  std::size_t line_;
  std::string detail_;
};

// Malformed binary input; carries the byte offset where decoding failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace spigan
