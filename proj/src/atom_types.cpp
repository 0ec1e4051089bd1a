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

#include "gridock/atom_types.hpp"

#include <json.hpp>

#include "gridock/errors.hpp"
#include "gridock/textio.hpp"

namespace gridock {

using nlohmann::json;

AtomTypeTable::AtomTypeTable(std::vector<std::pair<std::string, double>> entries) {
  if (entries.empty()) throw FormatError("atom type table is empty");
  for (auto& [name, radius] : entries) {
    if (name.empty()) throw FormatError("atom type with empty name");
    if (!(radius > 0.0)) throw FormatError("atom type '" + name + "' has non-positive radius");
    if (by_name_.count(name)) throw FormatError("duplicate atom type '" + name + "'");
    by_name_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    radii_.push_back(radius);
  }
}

int AtomTypeTable::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

std::string AtomTypeTable::to_json() const {
  json types = json::array();
  for (int i = 0; i < size(); ++i) types.push_back({{"name", names_[i]}, {"vdw_radius", radii_[i]}});
  json doc = {{"format_version", 1}, {"types", types}};
  return doc.dump(2) + "\n";
}

AtomTypeTable AtomTypeTable::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("atom type table: invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version") || !doc.contains("types"))
    throw FormatError("atom type table: expected object with format_version and types");
  for (auto& [key, _] : doc.items())
    if (key != "format_version" && key != "types")
      throw FormatError("atom type table: unknown key '" + key + "'");
  if (doc["format_version"].get<int>() != 1)
    throw FormatError("atom type table: unsupported format_version");
  std::vector<std::pair<std::string, double>> entries;
  for (const auto& t : doc["types"]) {
    if (!t.is_object() || !t.contains("name") || !t.contains("vdw_radius"))
      throw FormatError("atom type table: each type needs name and vdw_radius");
    entries.emplace_back(t["name"].get<std::string>(), t["vdw_radius"].get<double>());
  }
  return AtomTypeTable(std::move(entries));
}

AtomTypeTable AtomTypeTable::load(const std::string& path) {
  return from_json(read_file(path));
}

const AtomTypeTable& default_atom_types() {
  static const AtomTypeTable table({
      {"C", 1.90},
      {"N", 1.80},
      {"O", 1.70},
      {"S", 2.00},
      {"P", 2.10},
      {"F", 1.50},
      {"Cl", 1.80},
      {"Br", 2.00},
      {"I", 2.20},
      {"B", 1.92},
  });
  return table;
}

}  // namespace gridock
