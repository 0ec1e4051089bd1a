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

#include "gridock/reference_kernels.hpp"

#include <cmath>

#include "gridock/errors.hpp"

namespace gridock::reference {

AtomGrid rasterize(const GridSpec& spec, std::span<const Vec3> receptor_coords,
                   std::span<const int> receptor_types, std::span<const Vec3> ligand_coords,
                   std::span<const int> ligand_types, const AtomTypeTable& table) {
  spec.validate();
  if (receptor_coords.size() != receptor_types.size() ||
      ligand_coords.size() != ligand_types.size())
    throw ContractError("reference rasterize: coordinate/type length mismatch");
  if (table.size() != spec.channel_count)
    throw ContractError("reference rasterize: table size != channel_count");

  // Accumulation order per point: receptor atoms in order, then ligand atoms.
  std::vector<Vec3> coords(receptor_coords.begin(), receptor_coords.end());
  coords.insert(coords.end(), ligand_coords.begin(), ligand_coords.end());
  std::vector<int> types(receptor_types.begin(), receptor_types.end());
  types.insert(types.end(), ligand_types.begin(), ligand_types.end());

  AtomGrid grid(spec);
  const int n = spec.points_per_side();
  for (int ci = 0; ci < spec.channel_count; ++ci) {
    const double r = table.radius(ci);
    for (int zi = 0; zi < n; ++zi) {
      for (int yi = 0; yi < n; ++yi) {
        for (int xi = 0; xi < n; ++xi) {
          const Vec3 p = spec.point(xi, yi, zi);
          double acc = 0.0;
          for (std::size_t ai = 0; ai < coords.size(); ++ai) {
            if (types[ai] != ci) continue;
            const Vec3 a = coords[ai];
            // Same summation association as the fast kernel (z, y, then x);
            // IEEE addition is not associative and bit-identity is promised.
            const double d =
                std::sqrt(((a.z - p.z) * (a.z - p.z) + (a.y - p.y) * (a.y - p.y)) +
                          (a.x - p.x) * (a.x - p.x));
            acc += atom_density(d, r);
          }
          grid.values.at(ci, zi, yi, xi) = acc;
        }
      }
    }
  }
  return grid;
}

std::vector<Vec3> grid_backward(const Tensor4& upstream, std::span<const Vec3> ligand_coords,
                                std::span<const int> ligand_types, const GridSpec& spec,
                                const AtomTypeTable& table) {
  spec.validate();
  const int n = spec.points_per_side();
  if (upstream.c != spec.channel_count || upstream.d != n || upstream.h != n || upstream.w != n)
    throw ContractError("reference grid_backward: upstream shape mismatch");

  std::vector<Vec3> grads(ligand_coords.size());
  for (std::size_t ai = 0; ai < ligand_coords.size(); ++ai) {
    const Vec3 a = ligand_coords[ai];
    const int ci = ligand_types[ai];
    const double r = table.radius(ci);
    Vec3 g;
    for (int zi = 0; zi < n; ++zi) {
      for (int yi = 0; yi < n; ++yi) {
        for (int xi = 0; xi < n; ++xi) {
          const Vec3 p = spec.point(xi, yi, zi);
          const Vec3 diff = a - p;
          const double d =
              std::sqrt((diff.z * diff.z + diff.y * diff.y) + diff.x * diff.x);
          if (d == 0.0 || d >= KERNEL_SUPPORT * r) continue;
          const double s = upstream.at(ci, zi, yi, xi) * atom_density_deriv(d, r) / d;
          g += diff * s;
        }
      }
    }
    grads[ai] = g;
  }
  return grads;
}

Tensor4 conv3d_forward(const Conv3d& conv, const Tensor4& x) {
  const int k = conv.kernel, s = conv.stride, p = conv.pad;
  const int od = (x.d + 2 * p - k) / s + 1;
  const int oh = (x.h + 2 * p - k) / s + 1;
  const int ow = (x.w + 2 * p - k) / s + 1;
  Tensor4 y(conv.out_c, od, oh, ow);
  for (int f = 0; f < conv.out_c; ++f) {
    for (int zo = 0; zo < od; ++zo) {
      for (int yo = 0; yo < oh; ++yo) {
        for (int xo = 0; xo < ow; ++xo) {
          double acc = conv.bias[f];
          for (int ci = 0; ci < conv.in_c; ++ci) {
            for (int kz = 0; kz < k; ++kz) {
              const int zi = zo * s - p + kz;
              if (zi < 0 || zi >= x.d) continue;
              for (int ky = 0; ky < k; ++ky) {
                const int yi = yo * s - p + ky;
                if (yi < 0 || yi >= x.h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int xi = xo * s - p + kx;
                  if (xi < 0 || xi >= x.w) continue;
                  acc += conv.weights[conv.weight_index(f, ci, kz, ky, kx)] *
                         x.at(ci, zi, yi, xi);
                }
              }
            }
          }
          y.at(f, zo, yo, xo) = acc;
        }
      }
    }
  }
  return y;
}

Tensor4 conv3d_backward_input(const Conv3d& conv, const Tensor4& dout, int in_d, int in_h,
                              int in_w) {
  const int k = conv.kernel, s = conv.stride, p = conv.pad;
  Tensor4 dx(conv.in_c, in_d, in_h, in_w);
  for (int ci = 0; ci < conv.in_c; ++ci) {
    for (int zi = 0; zi < in_d; ++zi) {
      for (int yi = 0; yi < in_h; ++yi) {
        for (int xi = 0; xi < in_w; ++xi) {
          double acc = 0.0;
          for (int f = 0; f < conv.out_c; ++f) {
            for (int kz = 0; kz < k; ++kz) {
              const int zn = zi + p - kz;
              if (zn < 0 || zn % s != 0 || zn / s >= dout.d) continue;
              for (int ky = 0; ky < k; ++ky) {
                const int yn = yi + p - ky;
                if (yn < 0 || yn % s != 0 || yn / s >= dout.h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int xn = xi + p - kx;
                  if (xn < 0 || xn % s != 0 || xn / s >= dout.w) continue;
                  acc += conv.weights[conv.weight_index(f, ci, kz, ky, kx)] *
                         dout.at(f, zn / s, yn / s, xn / s);
                }
              }
            }
          }
          dx.at(ci, zi, yi, xi) = acc;
        }
      }
    }
  }
  return dx;
}

void conv3d_backward_params(const Conv3d& conv, const Tensor4& x, const Tensor4& dout,
                            std::vector<double>& dw, std::vector<double>& db) {
  const int k = conv.kernel, s = conv.stride, p = conv.pad;
  dw.assign(conv.weights.size(), 0.0);
  db.assign(conv.bias.size(), 0.0);
  for (int f = 0; f < conv.out_c; ++f) {
    double bias_acc = 0.0;
    for (int zo = 0; zo < dout.d; ++zo)
      for (int yo = 0; yo < dout.h; ++yo)
        for (int xo = 0; xo < dout.w; ++xo) bias_acc += dout.at(f, zo, yo, xo);
    db[f] = bias_acc;
    for (int ci = 0; ci < conv.in_c; ++ci) {
      for (int kz = 0; kz < k; ++kz) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            for (int zo = 0; zo < dout.d; ++zo) {
              const int zi = zo * s - p + kz;
              if (zi < 0 || zi >= x.d) continue;
              for (int yo = 0; yo < dout.h; ++yo) {
                const int yi = yo * s - p + ky;
                if (yi < 0 || yi >= x.h) continue;
                for (int xo = 0; xo < dout.w; ++xo) {
                  const int xi = xo * s - p + kx;
                  if (xi < 0 || xi >= x.w) continue;
                  acc += dout.at(f, zo, yo, xo) * x.at(ci, zi, yi, xi);
                }
              }
            }
            dw[conv.weight_index(f, ci, kz, ky, kx)] = acc;
          }
        }
      }
    }
  }
}

}  // namespace gridock::reference
