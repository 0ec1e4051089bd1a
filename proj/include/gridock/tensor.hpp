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

#ifndef GRIDOCK_TENSOR_HPP
#define GRIDOCK_TENSOR_HPP

#include <cstddef>
#include <vector>

namespace gridock {

// Dense (channel, z, y, x) tensor of doubles, x fastest. Flat vectors are
// used for weights; this covers the spatial activations and grids.
struct Tensor4 {
  int c = 0, d = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor4() = default;
  Tensor4(int c_, int d_, int h_, int w_)
      : c(c_), d(d_), h(h_), w(w_),
        v(static_cast<std::size_t>(c_) * d_ * h_ * w_, 0.0) {}

  std::size_t size() const { return v.size(); }

  std::size_t index(int ci, int zi, int yi, int xi) const {
    return ((static_cast<std::size_t>(ci) * d + zi) * h + yi) * w + xi;
  }
  double& at(int ci, int zi, int yi, int xi) { return v[index(ci, zi, yi, xi)]; }
  double at(int ci, int zi, int yi, int xi) const { return v[index(ci, zi, yi, xi)]; }

  bool same_shape(const Tensor4& o) const {
    return c == o.c && d == o.d && h == o.h && w == o.w;
  }

  void fill(double value) { v.assign(v.size(), value); }
};

}  // namespace gridock

#endif
