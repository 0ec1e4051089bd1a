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

// Times the OpenMP kernels against the serial exhaustive reference and checks
// that both produce bit-identical results.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "gridock/grid.hpp"
#include "gridock/network.hpp"
#include "gridock/reference_kernels.hpp"
#include "gridock/rng.hpp"

using namespace gridock;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_ms(int reps, F&& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const char* name, double serial_ms, double omp_ms, bool identical) {
  std::printf("%-28s serial %9.2f ms   omp %9.2f ms   speedup %5.2fx   %s\n", name, serial_ms,
              omp_ms, serial_ms / omp_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  std::printf("threads: %d, reps: %d (best of)\n\n", omp_get_max_threads(), reps);

  Rng rng(17);
  const AtomTypeTable& table = default_atom_types();

  GridSpec spec;
  spec.center = {0, 0, 0};
  spec.edge_length = 24.0;
  spec.resolution = 0.5;
  spec.channel_count = table.size();

  // A receptor shell plus a ligand-sized blob, roughly pocket-like numbers.
  std::vector<Vec3> rec_coords;
  std::vector<int> rec_types;
  for (int i = 0; i < 300; ++i) {
    rec_coords.push_back(
        {rng.uniform(-12.0, 12.0), rng.uniform(-12.0, 12.0), rng.uniform(-12.0, 12.0)});
    rec_types.push_back(static_cast<int>(rng.below(table.size())));
  }
  std::vector<Vec3> lig_coords;
  std::vector<int> lig_types;
  for (int i = 0; i < 30; ++i) {
    lig_coords.push_back({rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)});
    lig_types.push_back(static_cast<int>(rng.below(table.size())));
  }

  {
    AtomGrid fast, slow;
    const double t_omp = time_ms(
        reps, [&] { fast = rasterize(spec, rec_coords, rec_types, lig_coords, lig_types, table); });
    const double t_ser = time_ms(reps, [&] {
      slow = reference::rasterize(spec, rec_coords, rec_types, lig_coords, lig_types, table);
    });
    report("rasterize 49^3 x10ch", t_ser, t_omp, bits_equal(fast.values.v, slow.values.v));

    const int n = spec.points_per_side();
    Tensor4 upstream(spec.channel_count, n, n, n);
    for (double& v : upstream.v) v = rng.uniform(-1.0, 1.0);
    std::vector<Vec3> gfast, gslow;
    const double b_omp = time_ms(
        reps, [&] { gfast = grid_backward(upstream, lig_coords, lig_types, spec, table); });
    const double b_ser = time_ms(reps, [&] {
      gslow = reference::grid_backward(upstream, lig_coords, lig_types, spec, table);
    });
    bool same = gfast.size() == gslow.size();
    for (std::size_t i = 0; same && i < gfast.size(); ++i)
      same = std::memcmp(&gfast[i], &gslow[i], sizeof(Vec3)) == 0;
    report("grid_backward 30 atoms", b_ser, b_omp, same);
  }

  {
    Conv3d conv(16, 32, 3, 1, 1);
    Rng wrng(5);
    for (double& w : conv.weights) w = wrng.uniform(-0.1, 0.1);
    for (double& b : conv.bias) b = wrng.uniform(-0.1, 0.1);
    Tensor4 x(16, 12, 12, 12);
    for (double& v : x.v) v = wrng.uniform(-1.0, 1.0);

    Tensor4 ref_y, fast_y;
    const double c_ser = time_ms(reps, [&] { ref_y = reference::conv3d_forward(conv, x); });
    const double c_omp = time_ms(reps, [&] { fast_y = conv3d_forward(conv, x); });
    report("conv3d fwd 16->32 on 12^3", c_ser, c_omp, bits_equal(fast_y.v, ref_y.v));

    Tensor4 dout(32, 12, 12, 12);
    for (double& v : dout.v) v = wrng.uniform(-1.0, 1.0);

    Tensor4 ref_dx, fast_dx;
    const double i_ser =
        time_ms(reps, [&] { ref_dx = reference::conv3d_backward_input(conv, dout, 12, 12, 12); });
    const double i_omp =
        time_ms(reps, [&] { fast_dx = conv3d_backward_input(conv, dout, 12, 12, 12); });
    report("conv3d bwd input 12^3", i_ser, i_omp, bits_equal(fast_dx.v, ref_dx.v));

    std::vector<double> ref_dw, ref_db, fast_dw, fast_db;
    const double w_ser = time_ms(
        reps, [&] { reference::conv3d_backward_params(conv, x, dout, ref_dw, ref_db); });
    const double w_omp =
        time_ms(reps, [&] { conv3d_backward_params(conv, x, dout, fast_dw, fast_db); });
    report("conv3d bwd weights 12^3", w_ser, w_omp,
           bits_equal(fast_dw, ref_dw) && bits_equal(fast_db, ref_db));
  }

  std::printf("\n");
  return 0;
}
