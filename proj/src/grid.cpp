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

#include "gridock/grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gridock/errors.hpp"
#include "gridock/textio.hpp"

namespace gridock {

int GridSpec::points_per_side() const {
  return static_cast<int>(std::lround(edge_length / resolution)) + 1;
}

void GridSpec::validate() const {
  if (!(edge_length > 0.0)) throw ContractError("grid spec: edge_length must be positive");
  if (!(resolution > 0.0)) throw ContractError("grid spec: resolution must be positive");
  if (channel_count <= 0) throw ContractError("grid spec: channel_count must be positive");
  if (!center.finite()) throw ContractError("grid spec: non-finite center");
}

double atom_density(double d, double r) {
  if (!(r > 0.0)) throw ContractError("atom_density: radius must be positive");
  if (d < 0.0) throw ContractError("atom_density: negative distance");
  if (d < r) return std::exp(-2.0 * d * d / (r * r));
  if (d < KERNEL_SUPPORT * r) {
    const double e2 = std::exp(2.0);
    return 4.0 / (e2 * r * r) * d * d - 12.0 / (e2 * r) * d + 9.0 / e2;
  }
  return 0.0;
}

double atom_density_deriv(double d, double r) {
  if (!(r > 0.0)) throw ContractError("atom_density_deriv: radius must be positive");
  if (d < 0.0) throw ContractError("atom_density_deriv: negative distance");
  if (d <= r) return -4.0 * d / (r * r) * std::exp(-2.0 * d * d / (r * r));
  if (d < KERNEL_SUPPORT * r) {
    const double e2 = std::exp(2.0);
    return 8.0 / (e2 * r * r) * d - 12.0 / (e2 * r);
  }
  return 0.0;
}

namespace {

struct ChannelAtoms {
  // Atom positions of one type, in global accumulation order.
  std::vector<Vec3> pos;
};

std::vector<ChannelAtoms> bucket_by_type(const GridSpec& spec,
                                         std::span<const Vec3> receptor_coords,
                                         std::span<const int> receptor_types,
                                         std::span<const Vec3> ligand_coords,
                                         std::span<const int> ligand_types,
                                         const AtomTypeTable& table) {
  if (receptor_coords.size() != receptor_types.size() ||
      ligand_coords.size() != ligand_types.size())
    throw ContractError("rasterize: coordinate/type list length mismatch");
  if (table.size() != spec.channel_count)
    throw ContractError("rasterize: grid channel_count (" +
                        std::to_string(spec.channel_count) + ") != type table size (" +
                        std::to_string(table.size()) + ")");
  std::vector<ChannelAtoms> channels(spec.channel_count);
  auto add = [&](std::span<const Vec3> coords, std::span<const int> types) {
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const int t = types[i];
      if (t < 0 || t >= spec.channel_count)
        throw ContractError("rasterize: atom type index out of range");
      channels[t].pos.push_back(coords[i]);
    }
  };
  add(receptor_coords, receptor_types);
  add(ligand_coords, ligand_types);
  return channels;
}

struct AxisRange {
  int lo = 0, hi = -1;  // inclusive; empty when lo > hi
};

AxisRange support_range(double coord, double reach, double origin, double res, int n) {
  AxisRange r;
  r.lo = static_cast<int>(std::ceil((coord - reach - origin) / res));
  r.hi = static_cast<int>(std::floor((coord + reach - origin) / res));
  if (r.lo < 0) r.lo = 0;
  if (r.hi > n - 1) r.hi = n - 1;
  return r;
}

}  // namespace

AtomGrid rasterize(const GridSpec& spec, std::span<const Vec3> receptor_coords,
                   std::span<const int> receptor_types, std::span<const Vec3> ligand_coords,
                   std::span<const int> ligand_types, const AtomTypeTable& table) {
  spec.validate();
  const auto channels =
      bucket_by_type(spec, receptor_coords, receptor_types, ligand_coords, ligand_types, table);

  AtomGrid grid(spec);
  const int n = spec.points_per_side();
  const Vec3 lo = spec.min_corner();
  const double res = spec.resolution;
  const int planes = spec.channel_count * n;

  // Work is partitioned over (channel, z-plane) tiles. Within a tile the
  // atoms are walked in index order, so every lattice point sees the same
  // summation order no matter how tiles map to threads.
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    const int ci = plane / n;
    const int zi = plane % n;
    const double pz = lo.z + res * zi;
    const double r = table.radius(ci);
    const double reach = KERNEL_SUPPORT * r;
    for (const Vec3& a : channels[ci].pos) {
      if (std::abs(a.z - pz) > reach) continue;
      const AxisRange ry = support_range(a.y, reach, lo.y, res, n);
      const AxisRange rx = support_range(a.x, reach, lo.x, res, n);
      const double dz2 = (a.z - pz) * (a.z - pz);
      for (int yi = ry.lo; yi <= ry.hi; ++yi) {
        const double dy = a.y - (lo.y + res * yi);
        const double dyz2 = dz2 + dy * dy;
        double* row = &grid.values.at(ci, zi, yi, rx.lo);
        for (int xi = rx.lo; xi <= rx.hi; ++xi, ++row) {
          const double dx = a.x - (lo.x + res * xi);
          const double d = std::sqrt(dyz2 + dx * dx);
          if (d < reach) *row += atom_density(d, r);
        }
      }
    }
  }
  return grid;
}

AtomGrid rasterize(const Receptor& receptor, std::span<const Vec3> ligand_coords,
                   std::span<const int> ligand_types, const GridSpec& spec,
                   const AtomTypeTable& table) {
  std::vector<Vec3> rc;
  std::vector<int> rt;
  rc.reserve(receptor.atoms.size());
  rt.reserve(receptor.atoms.size());
  for (const Atom& a : receptor.atoms) {
    rc.push_back(a.pos);
    rt.push_back(a.type);
  }
  return rasterize(spec, rc, rt, ligand_coords, ligand_types, table);
}

std::vector<Vec3> grid_backward(const Tensor4& upstream, std::span<const Vec3> ligand_coords,
                                std::span<const int> ligand_types, const GridSpec& spec,
                                const AtomTypeTable& table) {
  spec.validate();
  const int n = spec.points_per_side();
  if (upstream.c != spec.channel_count || upstream.d != n || upstream.h != n || upstream.w != n)
    throw ContractError("grid_backward: upstream dimensions do not match the grid spec");
  if (ligand_coords.size() != ligand_types.size())
    throw ContractError("grid_backward: coordinate/type list length mismatch");
  if (table.size() != spec.channel_count)
    throw ContractError("grid_backward: type table size does not match channel_count");

  for (int t : ligand_types)
    if (t < 0 || t >= spec.channel_count)
      throw ContractError("grid_backward: atom type index out of range");

  const Vec3 lo = spec.min_corner();
  const double res = spec.resolution;
  std::vector<Vec3> grads(ligand_coords.size());
  const long atom_count = static_cast<long>(ligand_coords.size());

  // One thread owns one atom's full sum; lattice points are visited in a
  // fixed z, y, x order, so results are thread-count invariant.
#pragma omp parallel for schedule(static)
  for (long ai = 0; ai < atom_count; ++ai) {
    const Vec3 a = ligand_coords[ai];
    const int ci = ligand_types[ai];
    const double r = table.radius(ci);
    const double reach = KERNEL_SUPPORT * r;
    const AxisRange rz = support_range(a.z, reach, lo.z, res, n);
    const AxisRange ry = support_range(a.y, reach, lo.y, res, n);
    const AxisRange rx = support_range(a.x, reach, lo.x, res, n);
    Vec3 g;
    for (int zi = rz.lo; zi <= rz.hi; ++zi) {
      const double dz = a.z - (lo.z + res * zi);
      for (int yi = ry.lo; yi <= ry.hi; ++yi) {
        const double dy = a.y - (lo.y + res * yi);
        const double dyz2 = dz * dz + dy * dy;
        const double* up = &upstream.at(ci, zi, yi, rx.lo);
        for (int xi = rx.lo; xi <= rx.hi; ++xi, ++up) {
          const double dx = a.x - (lo.x + res * xi);
          const double d = std::sqrt(dyz2 + dx * dx);
          // d == 0 contributes nothing (the kernel derivative vanishes there).
          if (d == 0.0 || d >= reach) continue;
          const double s = *up * atom_density_deriv(d, r) / d;
          g += Vec3{dx, dy, dz} * s;
        }
      }
    }
    grads[ai] = g;
  }
  return grads;
}

void save_grid(const std::string& path, const AtomGrid& grid) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write grid file: " + path);
  out << "gridock-grid 1\n";
  out << "center " << fmt_double(grid.spec.center.x) << ' ' << fmt_double(grid.spec.center.y)
      << ' ' << fmt_double(grid.spec.center.z) << '\n';
  out << "edge " << fmt_double(grid.spec.edge_length) << " resolution "
      << fmt_double(grid.spec.resolution) << '\n';
  out << "channels " << grid.spec.channel_count << " points " << grid.spec.points_per_side()
      << '\n';
  out.write(reinterpret_cast<const char*>(grid.values.v.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  if (!out) throw FormatError("short write: " + path);
}

AtomGrid load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open grid file: " + path);
  std::string line, tag;
  if (!std::getline(in, line) || line != "gridock-grid 1")
    throw FormatError("grid file: bad magic/version line");
  GridSpec spec;
  {
    if (!std::getline(in, line)) throw FormatError("grid file: truncated header");
    std::istringstream ss(line);
    if (!(ss >> tag >> spec.center.x >> spec.center.y >> spec.center.z) || tag != "center")
      throw FormatError("grid file: bad center line");
  }
  {
    if (!std::getline(in, line)) throw FormatError("grid file: truncated header");
    std::istringstream ss(line);
    std::string tag2;
    if (!(ss >> tag >> spec.edge_length >> tag2 >> spec.resolution) || tag != "edge" ||
        tag2 != "resolution")
      throw FormatError("grid file: bad edge/resolution line");
  }
  int points = 0;
  {
    if (!std::getline(in, line)) throw FormatError("grid file: truncated header");
    std::istringstream ss(line);
    std::string tag2;
    if (!(ss >> tag >> spec.channel_count >> tag2 >> points) || tag != "channels" ||
        tag2 != "points")
      throw FormatError("grid file: bad channels/points line");
  }
  if (points != spec.points_per_side())
    throw FormatError("grid file: points per side inconsistent with edge/resolution");
  AtomGrid grid(spec);
  in.read(reinterpret_cast<char*>(grid.values.v.data()),
          static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(grid.values.size() * sizeof(double)))
    throw FormatError("grid file: truncated payload");
  return grid;
}

}  // namespace gridock
