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

#ifndef GRIDOCK_GRID_HPP
#define GRIDOCK_GRID_HPP

#include <span>
#include <string>
#include <vector>

#include "gridock/atom_types.hpp"
#include "gridock/molecule.hpp"
#include "gridock/tensor.hpp"
#include "gridock/vec3.hpp"

namespace gridock {

// Atom density kernels lose support at KERNEL_SUPPORT * vdw_radius.
inline constexpr double KERNEL_SUPPORT = 1.5;

// Cubic lattice description. A 24 A edge at 0.5 A resolution yields
// round(24/0.5)+1 = 49 points per side (both faces included).
struct GridSpec {
  Vec3 center;
  double edge_length = 24.0;
  double resolution = 0.5;
  int channel_count = 0;

  int points_per_side() const;
  Vec3 min_corner() const { return center - Vec3{edge_length, edge_length, edge_length} * 0.5; }
  Vec3 point(int ix, int iy, int iz) const {
    const Vec3 lo = min_corner();
    return {lo.x + resolution * ix, lo.y + resolution * iy, lo.z + resolution * iz};
  }
  void validate() const;
  bool operator==(const GridSpec& o) const = default;
};

// Per-type voxel density channels; the network input tensor.
struct AtomGrid {
  GridSpec spec;
  Tensor4 values;  // (channel, z, y, x), x fastest

  AtomGrid() = default;
  explicit AtomGrid(const GridSpec& s)
      : spec(s),
        values(s.channel_count, s.points_per_side(), s.points_per_side(), s.points_per_side()) {
    spec.validate();
  }
};

// Density of an atom of radius r at distance d: a Gaussian out to r, then a
// quadratic tail that reaches zero with zero slope at 1.5 r. C1 everywhere.
double atom_density(double d, double r);

// d(atom_density)/dd; zero at d = 0 and for d >= 1.5 r.
double atom_density_deriv(double d, double r);

// Accumulates receptor and ligand densities into per-type channels. Each atom
// touches only lattice points within 1.5 r (identical result to exhaustive
// iteration). Deterministic for any OpenMP thread count: every lattice point
// accumulates its atoms in index order (receptor first, then ligand).
AtomGrid rasterize(const GridSpec& spec, std::span<const Vec3> receptor_coords,
                   std::span<const int> receptor_types, std::span<const Vec3> ligand_coords,
                   std::span<const int> ligand_types, const AtomTypeTable& table);

AtomGrid rasterize(const Receptor& receptor, std::span<const Vec3> ligand_coords,
                   std::span<const int> ligand_types, const GridSpec& spec,
                   const AtomTypeTable& table);

// Chains an upstream dL/dgrid through the density kernel to per-atom
// coordinate gradients. Ligand atoms only; receptor atoms are fixed.
std::vector<Vec3> grid_backward(const Tensor4& upstream, std::span<const Vec3> ligand_coords,
                                std::span<const int> ligand_types, const GridSpec& spec,
                                const AtomTypeTable& table);

// Grid dump: a small text header followed by the raw little-endian float64
// payload in (channel, z, y, x) order, x fastest.
void save_grid(const std::string& path, const AtomGrid& grid);
AtomGrid load_grid(const std::string& path);

}  // namespace gridock

#endif
