/*
   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#ifndef GRIDOCK_ERRORS_HPP
#define GRIDOCK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace gridock {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke a documented precondition (dimension mismatch, bad range...).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Unparseable or inconsistent file content.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// An atom name that the active type table does not know.
struct TypingError : FormatError {
  explicit TypingError(const std::string& msg) : FormatError(msg) {}
};

// Torsion tree or molecule topology violates its invariants.
struct StructureError : FormatError {
  explicit StructureError(const std::string& msg) : FormatError(msg) {}
};

// Bad run configuration (single-class training set, odd batch size...).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Result sets that should describe the same poses do not line up.
struct AlignmentError : Error {
  explicit AlignmentError(const std::string& msg) : Error(msg) {}
};

}  // namespace gridock

#endif
