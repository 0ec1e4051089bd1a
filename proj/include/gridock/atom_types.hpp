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

#ifndef GRIDOCK_ATOM_TYPES_HPP
#define GRIDOCK_ATOM_TYPES_HPP

#include <string>
#include <unordered_map>
#include <vector>

namespace gridock {

// Immutable registry of atom type names and their Van der Waals radii.
// One grid channel per entry.
class AtomTypeTable {
 public:
  AtomTypeTable(std::vector<std::pair<std::string, double>> entries);

  int size() const { return static_cast<int>(radii_.size()); }
  const std::string& name(int index) const { return names_.at(index); }
  double radius(int index) const { return radii_.at(index); }
  // -1 when unknown.
  int index_of(const std::string& name) const;

  std::string to_json() const;
  static AtomTypeTable from_json(const std::string& text);
  static AtomTypeTable load(const std::string& path);

 private:
  std::vector<std::string> names_;
  std::vector<double> radii_;
  std::unordered_map<std::string, int> by_name_;
};

// Heavy-atom defaults. Radii follow common docking practice; the table is
// configuration, not a fixed scheme, so callers can load their own.
const AtomTypeTable& default_atom_types();

}  // namespace gridock

#endif
