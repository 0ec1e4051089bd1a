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

#ifndef GRIDOCK_MOLECULE_HPP
#define GRIDOCK_MOLECULE_HPP

#include <string>
#include <vector>

#include "gridock/atom_types.hpp"
#include "gridock/vec3.hpp"

namespace gridock {

struct Atom {
  Vec3 pos;       // Angstroms
  int type = -1;  // index into the active AtomTypeTable
};

// Receptor atoms never move during scoring or optimization.
struct Receptor {
  std::vector<Atom> atoms;
};

// One rotatable bond: rotating about the axis_from->axis_to axis moves
// exactly the atoms in `downstream`.
struct RotatableBond {
  int axis_from = -1;
  int axis_to = -1;
  std::vector<int> downstream;  // sorted, unique; never contains the axis atoms
};

// Reference conformation plus the torsion tree over it. Treated as immutable
// after finalize(); poses are realized into fresh coordinate arrays.
struct Ligand {
  std::vector<Atom> atoms;  // reference (crystal) conformation
  int root_atom = 0;
  std::vector<RotatableBond> bonds;

  // Derived by finalize().
  Vec3 reference_centroid;
  std::vector<int> apply_order;  // bond indices, leaf-to-root

  // Validates the torsion tree invariants and computes derived fields.
  // Throws StructureError on a malformed tree.
  void finalize();

  int torsion_count() const { return static_cast<int>(bonds.size()); }
  std::vector<Vec3> positions() const;
  std::vector<int> type_indices() const;
};

// Translation, orientation (rotation vector about the reference centroid)
// and one torsion angle per rotatable bond. Radians and Angstroms.
struct ConformationDOF {
  Vec3 translation;
  Vec3 rotation;
  std::vector<double> torsions;

  bool finite() const;
};

ConformationDOF zero_dof(const Ligand& ligand);

// Realizes a conformation: torsions leaf-to-root, then the global rotation
// about the reference centroid, then the translation. The reference is
// untouched; an all-zero DOF returns bitwise-identical coordinates.
std::vector<Vec3> apply_dof(const Ligand& ligand, const ConformationDOF& dof);

// Plain index-correspondence RMSD in Angstroms. No symmetry correction.
double rmsd(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

struct Box {
  Vec3 lo, hi;
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
};

Box bounding_box(const std::vector<Vec3>& coords, double padding);

Vec3 centroid(const std::vector<Vec3>& coords);

// Molecule document parsing (JSON, format_version 1). Atom type names are
// resolved against `table`; unknown names raise TypingError, malformed
// torsion trees raise StructureError.
Ligand parse_ligand(const std::string& text, const AtomTypeTable& table);
Receptor parse_receptor(const std::string& text, const AtomTypeTable& table);
Ligand load_ligand(const std::string& path, const AtomTypeTable& table);
Receptor load_receptor(const std::string& path, const AtomTypeTable& table);

std::string ligand_to_json(const Ligand& ligand, const AtomTypeTable& table);
std::string receptor_to_json(const Receptor& receptor, const AtomTypeTable& table);

}  // namespace gridock

#endif
