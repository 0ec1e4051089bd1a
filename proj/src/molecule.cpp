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

#include "gridock/molecule.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <json.hpp>

#include "gridock/errors.hpp"
#include "gridock/textio.hpp"

namespace gridock {

using nlohmann::json;

void Ligand::finalize() {
  const int n = static_cast<int>(atoms.size());
  if (n == 0) throw StructureError("ligand has no atoms");
  if (root_atom < 0 || root_atom >= n) throw StructureError("root_atom out of bounds");

  for (std::size_t b = 0; b < bonds.size(); ++b) {
    RotatableBond& bond = bonds[b];
    const std::string where = "rotatable bond " + std::to_string(b);
    if (bond.axis_from < 0 || bond.axis_from >= n || bond.axis_to < 0 || bond.axis_to >= n)
      throw StructureError(where + ": axis atom out of bounds");
    if (bond.axis_from == bond.axis_to) throw StructureError(where + ": degenerate axis");
    std::sort(bond.downstream.begin(), bond.downstream.end());
    if (std::adjacent_find(bond.downstream.begin(), bond.downstream.end()) !=
        bond.downstream.end())
      throw StructureError(where + ": duplicate downstream index");
    for (int i : bond.downstream) {
      if (i < 0 || i >= n) throw StructureError(where + ": downstream index out of bounds");
      if (i == bond.axis_from || i == bond.axis_to)
        throw StructureError(where + ": downstream set contains an axis atom");
    }
  }

  // Tree check: any two downstream sets are either disjoint or strictly nested.
  for (std::size_t a = 0; a < bonds.size(); ++a) {
    for (std::size_t b = a + 1; b < bonds.size(); ++b) {
      const auto& da = bonds[a].downstream;
      const auto& db = bonds[b].downstream;
      std::vector<int> inter;
      std::set_intersection(da.begin(), da.end(), db.begin(), db.end(),
                            std::back_inserter(inter));
      if (inter.empty()) continue;
      const bool a_in_b = inter.size() == da.size() && da.size() < db.size();
      const bool b_in_a = inter.size() == db.size() && db.size() < da.size();
      if (!a_in_b && !b_in_a)
        throw StructureError("rotatable bonds " + std::to_string(a) + " and " +
                             std::to_string(b) +
                             ": downstream sets overlap without nesting");
    }
  }

  // Leaf-to-root: children are strict subsets of their ancestors, so sorting
  // by downstream size (ascending, index-stable) puts leaves first.
  apply_order.resize(bonds.size());
  std::iota(apply_order.begin(), apply_order.end(), 0);
  std::stable_sort(apply_order.begin(), apply_order.end(), [this](int a, int b) {
    return bonds[a].downstream.size() < bonds[b].downstream.size();
  });

  Vec3 sum;
  for (const Atom& a : atoms) sum += a.pos;
  reference_centroid = sum / static_cast<double>(n);
}

std::vector<Vec3> Ligand::positions() const {
  std::vector<Vec3> p;
  p.reserve(atoms.size());
  for (const Atom& a : atoms) p.push_back(a.pos);
  return p;
}

std::vector<int> Ligand::type_indices() const {
  std::vector<int> t;
  t.reserve(atoms.size());
  for (const Atom& a : atoms) t.push_back(a.type);
  return t;
}

bool ConformationDOF::finite() const {
  if (!translation.finite() || !rotation.finite()) return false;
  for (double v : torsions)
    if (!std::isfinite(v)) return false;
  return true;
}

ConformationDOF zero_dof(const Ligand& ligand) {
  ConformationDOF dof;
  dof.torsions.assign(ligand.bonds.size(), 0.0);
  return dof;
}

std::vector<Vec3> apply_dof(const Ligand& ligand, const ConformationDOF& dof) {
  if (static_cast<int>(dof.torsions.size()) != ligand.torsion_count())
    throw ContractError("apply_dof: torsion count mismatch (dof has " +
                        std::to_string(dof.torsions.size()) + ", ligand has " +
                        std::to_string(ligand.torsion_count()) + ")");
  if (!dof.finite()) throw ContractError("apply_dof: non-finite DOF component");

  std::vector<Vec3> coords = ligand.positions();

  // Leaf-to-root means every bond still sees its axis atoms at reference
  // positions when it is applied.
  for (int bi : ligand.apply_order) {
    const double angle = dof.torsions[bi];
    if (angle == 0.0) continue;
    const RotatableBond& bond = ligand.bonds[bi];
    const Vec3 origin = coords[bond.axis_from];
    Vec3 axis = coords[bond.axis_to] - origin;
    const double len = axis.norm();
    if (len == 0.0) throw ContractError("apply_dof: zero-length bond axis");
    axis = axis / len;
    const Mat3 r = rotation_from_vector(axis * angle);
    for (int i : bond.downstream) coords[i] = r.apply(coords[i] - origin) + origin;
  }

  if (!(dof.rotation == Vec3{})) {
    const Mat3 r = rotation_from_vector(dof.rotation);
    const Vec3 c = ligand.reference_centroid;
    for (Vec3& p : coords) p = r.apply(p - c) + c;
  }

  if (!(dof.translation == Vec3{}))
    for (Vec3& p : coords) p += dof.translation;

  return coords;
}

double rmsd(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.size() != b.size())
    throw ContractError("rmsd: length mismatch (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  if (a.empty()) throw ContractError("rmsd: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm_sq();
  return std::sqrt(sum / static_cast<double>(a.size()));
}

Box bounding_box(const std::vector<Vec3>& coords, double padding) {
  if (coords.empty()) throw ContractError("bounding_box: empty input");
  if (padding < 0.0) throw ContractError("bounding_box: negative padding");
  Box box{coords[0], coords[0]};
  for (const Vec3& p : coords) {
    box.lo.x = std::min(box.lo.x, p.x);
    box.lo.y = std::min(box.lo.y, p.y);
    box.lo.z = std::min(box.lo.z, p.z);
    box.hi.x = std::max(box.hi.x, p.x);
    box.hi.y = std::max(box.hi.y, p.y);
    box.hi.z = std::max(box.hi.z, p.z);
  }
  const Vec3 pad{padding, padding, padding};
  box.lo -= pad;
  box.hi += pad;
  return box;
}

Vec3 centroid(const std::vector<Vec3>& coords) {
  if (coords.empty()) throw ContractError("centroid: empty input");
  Vec3 sum;
  for (const Vec3& p : coords) sum += p;
  return sum / static_cast<double>(coords.size());
}

namespace {

json parse_doc(const std::string& text, const char* what) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw FormatError(std::string(what) + ": expected a JSON object");
  if (!doc.contains("format_version") || doc["format_version"].get<int>() != 1)
    throw FormatError(std::string(what) + ": missing or unsupported format_version");
  return doc;
}

void reject_unknown_keys(const json& doc, std::initializer_list<const char*> known,
                         const char* what) {
  for (auto& [key, _] : doc.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw FormatError(std::string(what) + ": unknown key '" + key + "'");
  }
}

std::vector<Atom> parse_atoms(const json& doc, const AtomTypeTable& table, const char* what) {
  if (!doc.contains("atoms") || !doc["atoms"].is_array())
    throw FormatError(std::string(what) + ": missing atoms array");
  std::vector<Atom> atoms;
  for (const auto& a : doc["atoms"]) {
    if (!a.is_object() || !a.contains("x") || !a.contains("y") || !a.contains("z") ||
        !a.contains("type"))
      throw FormatError(std::string(what) + ": each atom needs x, y, z, type");
    reject_unknown_keys(a, {"x", "y", "z", "type"}, what);
    Atom atom;
    atom.pos = {a["x"].get<double>(), a["y"].get<double>(), a["z"].get<double>()};
    if (!atom.pos.finite()) throw FormatError(std::string(what) + ": non-finite coordinate");
    const std::string type_name = a["type"].get<std::string>();
    atom.type = table.index_of(type_name);
    if (atom.type < 0)
      throw TypingError(std::string(what) + ": unknown atom type '" + type_name + "'");
    atoms.push_back(atom);
  }
  return atoms;
}

}  // namespace

Ligand parse_ligand(const std::string& text, const AtomTypeTable& table) {
  const json doc = parse_doc(text, "ligand");
  reject_unknown_keys(doc, {"format_version", "atoms", "root_atom", "rotatable_bonds"}, "ligand");
  Ligand lig;
  lig.atoms = parse_atoms(doc, table, "ligand");
  if (doc.contains("root_atom")) lig.root_atom = doc["root_atom"].get<int>();
  if (doc.contains("rotatable_bonds")) {
    for (const auto& b : doc["rotatable_bonds"]) {
      if (!b.is_object() || !b.contains("axis") || !b.contains("downstream"))
        throw FormatError("ligand: each rotatable bond needs axis and downstream");
      reject_unknown_keys(b, {"axis", "downstream"}, "ligand rotatable bond");
      if (!b["axis"].is_array() || b["axis"].size() != 2)
        throw FormatError("ligand: bond axis must be [from, to]");
      RotatableBond bond;
      bond.axis_from = b["axis"][0].get<int>();
      bond.axis_to = b["axis"][1].get<int>();
      bond.downstream = b["downstream"].get<std::vector<int>>();
      lig.bonds.push_back(std::move(bond));
    }
  }
  lig.finalize();
  return lig;
}

Receptor parse_receptor(const std::string& text, const AtomTypeTable& table) {
  const json doc = parse_doc(text, "receptor");
  reject_unknown_keys(doc, {"format_version", "atoms"}, "receptor");
  Receptor rec;
  rec.atoms = parse_atoms(doc, table, "receptor");
  return rec;
}

Ligand load_ligand(const std::string& path, const AtomTypeTable& table) {
  return parse_ligand(read_file(path), table);
}

Receptor load_receptor(const std::string& path, const AtomTypeTable& table) {
  return parse_receptor(read_file(path), table);
}

namespace {

json atoms_to_json(const std::vector<Atom>& atoms, const AtomTypeTable& table) {
  json arr = json::array();
  for (const Atom& a : atoms)
    arr.push_back(
        {{"x", a.pos.x}, {"y", a.pos.y}, {"z", a.pos.z}, {"type", table.name(a.type)}});
  return arr;
}

}  // namespace

std::string ligand_to_json(const Ligand& ligand, const AtomTypeTable& table) {
  json bonds = json::array();
  for (const RotatableBond& b : ligand.bonds)
    bonds.push_back({{"axis", {b.axis_from, b.axis_to}}, {"downstream", b.downstream}});
  json doc = {{"format_version", 1},
              {"atoms", atoms_to_json(ligand.atoms, table)},
              {"root_atom", ligand.root_atom},
              {"rotatable_bonds", bonds}};
  return doc.dump(2) + "\n";
}

std::string receptor_to_json(const Receptor& receptor, const AtomTypeTable& table) {
  json doc = {{"format_version", 1}, {"atoms", atoms_to_json(receptor.atoms, table)}};
  return doc.dump(2) + "\n";
}

}  // namespace gridock
