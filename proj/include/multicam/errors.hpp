// Copyright 2026 The multicam Authors
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

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace multicam {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << shape[i];
    if (shape.size() == 1 || i + 1 < shape.size()) os << ',';
  }
  os << ')';
  return os.str();
}

/// Raised when array shapes are incompatible.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a camera or its parameters violate the model contract.
class CameraError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for numerically degenerate inputs (singular Jacobian, zero baseline, ...).
class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by the file readers and writers.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace multicam
