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

#ifndef GRIDOCK_REFERENCE_KERNELS_HPP
#define GRIDOCK_REFERENCE_KERNELS_HPP

#include <span>
#include <vector>

#include "gridock/grid.hpp"
#include "gridock/network.hpp"
#include "gridock/tensor.hpp"

// Serial, exhaustive-iteration versions of the hot kernels. No compact
// support shortcuts, no OpenMP: every lattice point visits every atom and
// every convolution output walks its full receptive field. The parallel
// kernels must reproduce these bit for bit; the bench tool times both.
namespace gridock::reference {

AtomGrid rasterize(const GridSpec& spec, std::span<const Vec3> receptor_coords,
                   std::span<const int> receptor_types, std::span<const Vec3> ligand_coords,
                   std::span<const int> ligand_types, const AtomTypeTable& table);

std::vector<Vec3> grid_backward(const Tensor4& upstream, std::span<const Vec3> ligand_coords,
                                std::span<const int> ligand_types, const GridSpec& spec,
                                const AtomTypeTable& table);

Tensor4 conv3d_forward(const Conv3d& conv, const Tensor4& x);
Tensor4 conv3d_backward_input(const Conv3d& conv, const Tensor4& dout, int in_d, int in_h,
                              int in_w);
void conv3d_backward_params(const Conv3d& conv, const Tensor4& x, const Tensor4& dout,
                            std::vector<double>& dw, std::vector<double>& db);

}  // namespace gridock::reference

#endif
