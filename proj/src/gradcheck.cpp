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

#include "gridock/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "gridock/grid.hpp"
#include "gridock/network.hpp"
#include "gridock/optimizer.hpp"
#include "gridock/rng.hpp"

namespace gridock {

namespace {

double rel_error(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return diff / scale;
}

struct Checker {
  GradCheckReport report;
  void observe(double analytic, double numeric) {
    report.max_rel_error = std::max(report.max_rel_error, rel_error(analytic, numeric));
    ++report.comparisons;
  }
  GradCheckReport finish(const std::string& name, double tolerance) {
    report.name = name;
    report.tolerance = tolerance;
    report.passed = report.max_rel_error < tolerance;
    return report;
  }
};

double central_diff(const std::function<double(double)>& f, double x, double step) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

AtomTypeTable small_table() {
  return AtomTypeTable({{"A", 1.4}, {"B", 1.8}});
}

GridSpec small_spec(int channels) {
  GridSpec spec;
  spec.center = {0.5, -0.25, 0.75};
  spec.edge_length = 3.5;  // 8 points at 0.5 A
  spec.resolution = 0.5;
  spec.channel_count = channels;
  return spec;
}

GradCheckReport check_density_kernel() {
  Checker chk;
  for (double r : {0.9, 1.4, 1.9}) {
    for (double frac : {0.1, 0.45, 0.8, 0.95, 1.05, 1.2, 1.45}) {
      const double d = frac * r;
      const double analytic = atom_density_deriv(d, r);
      const double numeric =
          central_diff([&](double x) { return atom_density(x, r); }, d, 1e-6);
      chk.observe(analytic, numeric);
    }
  }
  return chk.finish("density kernel derivative", 1e-6);
}

GradCheckReport check_grid_backward(std::uint64_t seed) {
  Checker chk;
  const AtomTypeTable table = small_table();
  const GridSpec spec = small_spec(table.size());
  Rng rng(seed);
  const std::vector<Vec3> no_rec;
  const std::vector<int> no_rec_t;

  for (int trial = 0; trial < 25; ++trial) {
    const int atoms = 1 + static_cast<int>(rng.below(5));
    std::vector<Vec3> coords;
    std::vector<int> types;
    for (int i = 0; i < atoms; ++i) {
      coords.push_back({rng.uniform(-2.0, 3.0), rng.uniform(-2.5, 2.0), rng.uniform(-1.5, 3.0)});
      types.push_back(static_cast<int>(rng.below(table.size())));
    }
    const int n = spec.points_per_side();
    Tensor4 upstream(spec.channel_count, n, n, n);
    for (double& v : upstream.v) v = rng.uniform(-1.0, 1.0);

    const auto loss = [&](const std::vector<Vec3>& c) {
      const AtomGrid grid = rasterize(spec, no_rec, no_rec_t, c, types, table);
      double acc = 0.0;
      for (std::size_t i = 0; i < grid.values.size(); ++i) acc += upstream.v[i] * grid.values.v[i];
      return acc;
    };

    const std::vector<Vec3> analytic = grid_backward(upstream, coords, types, spec, table);
    for (int ai = 0; ai < atoms; ++ai) {
      for (int axis = 0; axis < 3; ++axis) {
        const double numeric = central_diff(
            [&](double x) {
              std::vector<Vec3> c = coords;
              (axis == 0 ? c[ai].x : axis == 1 ? c[ai].y : c[ai].z) = x;
              return loss(c);
            },
            axis == 0 ? coords[ai].x : axis == 1 ? coords[ai].y : coords[ai].z, 1e-5);
        const double a = axis == 0 ? analytic[ai].x : axis == 1 ? analytic[ai].y : analytic[ai].z;
        chk.observe(a, numeric);
      }
    }
  }
  return chk.finish("grid backward", 1e-5);
}

NetworkModel tiny_model(Rng& rng, int channels, int points) {
  NetworkModel m;
  m.in_channels = channels;
  m.in_points = points;
  int c = channels, side = points;
  if (points % 2 == 0 && rng.below(2) == 0) {
    m.layers.emplace_back(MaxPool3d{});
    side /= 2;
  }
  const int filters = 2 + static_cast<int>(rng.below(3));
  m.layers.emplace_back(Conv3d(c, filters, 3, 1, 1));
  m.layers.emplace_back(Relu{});
  c = filters;
  m.layers.emplace_back(Dense(c * side * side * side, 2));
  m.validate();
  initialize_weights(m, rng.next_u64());
  return m;
}

GradCheckReport check_network_gradients(std::uint64_t seed) {
  Checker chk;
  Rng rng(seed);
  for (int trial = 0; trial < 8; ++trial) {
    const int channels = 1 + static_cast<int>(rng.below(2));
    const int points = 4 + 2 * static_cast<int>(rng.below(3));  // 4, 6, 8
    NetworkModel model = tiny_model(rng, channels, points);
    Tensor4 input(channels, points, points, points);
    for (double& v : input.v) v = rng.uniform(-1.0, 1.0);
    const int label = static_cast<int>(rng.below(2));

    ForwardTrace trace;
    forward_trace(model, input, trace);
    const Gradients grads = backward(model, trace, loss_backward_seed(trace, label), true);

    const auto loss_at = [&](NetworkModel& m, const Tensor4& x) {
      ForwardTrace t;
      forward_trace(m, x, t);
      return cross_entropy_loss(t, label);
    };

    // Every weight and bias of every parameterized layer.
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      auto check_param = [&](std::vector<double>& params, const std::vector<double>& analytic) {
        for (std::size_t j = 0; j < params.size(); ++j) {
          const double saved = params[j];
          const double numeric = central_diff(
              [&](double x) {
                params[j] = x;
                const double value = loss_at(model, input);
                params[j] = saved;
                return value;
              },
              saved, 1e-6);
          chk.observe(analytic[j], numeric);
        }
      };
      if (Conv3d* conv = std::get_if<Conv3d>(&model.layers[li])) {
        check_param(conv->weights, grads.layers[li].weights);
        check_param(conv->bias, grads.layers[li].bias);
      } else if (Dense* fc = std::get_if<Dense>(&model.layers[li])) {
        check_param(fc->weights, grads.layers[li].weights);
        check_param(fc->bias, grads.layers[li].bias);
      }
    }

    // Input gradient, all voxels.
    for (std::size_t j = 0; j < input.v.size(); ++j) {
      const double saved = input.v[j];
      const double numeric = central_diff(
          [&](double x) {
            Tensor4 perturbed = input;
            perturbed.v[j] = x;
            return loss_at(model, perturbed);
          },
          saved, 1e-6);
      chk.observe(grads.input.v[j], numeric);
    }
  }
  return chk.finish("network weight and input gradients", 1e-5);
}

Ligand random_chain_ligand(Rng& rng, int atoms, int torsions) {
  Ligand lig;
  Vec3 p{0, 0, 0};
  for (int i = 0; i < atoms; ++i) {
    Atom a;
    a.pos = p;
    a.type = static_cast<int>(rng.below(2));
    lig.atoms.push_back(a);
    Vec3 step{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    if (step.norm() < 0.3) step = {1.0, 0.2, -0.1};
    p += step * (1.4 / step.norm());
  }
  for (int t = 0; t < torsions; ++t) {
    // Bond along the chain: axis (t, t+1), everything past t+1 downstream.
    RotatableBond bond;
    bond.axis_from = t;
    bond.axis_to = t + 1;
    for (int i = t + 2; i < atoms; ++i) bond.downstream.push_back(i);
    lig.bonds.push_back(bond);
  }
  lig.finalize();
  return lig;
}

GradCheckReport check_dof_chain(std::uint64_t seed) {
  Checker chk;
  Rng rng(seed);
  const AtomTypeTable table = small_table();
  const GridSpec spec = small_spec(table.size());

  for (int trial = 0; trial < 6; ++trial) {
    const int torsions = static_cast<int>(rng.below(6));  // up to 5
    const int atoms = torsions + 2 + static_cast<int>(rng.below(3));
    const Ligand lig = random_chain_ligand(rng, atoms, torsions);
    NetworkModel model = tiny_model(rng, table.size(), spec.points_per_side());

    ConformationDOF dof;
    dof.translation = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    dof.rotation = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    dof.torsions.resize(torsions);
    for (double& t : dof.torsions) t = rng.uniform(-2.0, 2.0);

    Receptor receptor;  // ligand-only grid keeps the check cheap
    const std::vector<int> types = lig.type_indices();

    const auto score_at = [&](const std::vector<double>& x) {
      const ConformationDOF d = unflatten_dof(x, torsions);
      const AtomGrid grid = rasterize(receptor, apply_dof(lig, d), types, spec, table);
      return forward(model, grid).probs[BINDING_CLASS];
    };

    const std::vector<double> x0 = flatten_dof(dof);
    const std::vector<Vec3> coords = apply_dof(lig, dof);
    const AtomGrid grid = rasterize(receptor, coords, types, spec, table);
    const ScoredGradient sg =
        score_with_gradient(model, grid, BINDING_CLASS, ObjectiveMode::probability);
    const std::vector<Vec3> atom_grads = grid_backward(sg.grid_grad, coords, types, spec, table);
    const std::vector<double> analytic =
        assemble_dof_gradient(atom_grads, lig, dof, coords).flatten();

    for (std::size_t j = 0; j < x0.size(); ++j) {
      const double numeric = central_diff(
          [&](double v) {
            std::vector<double> x = x0;
            x[j] = v;
            return score_at(x);
          },
          x0[j], 1e-5);
      chk.observe(analytic[j], numeric);
    }
  }
  return chk.finish("dof chain (translation/rotation/torsion)", 1e-4);
}

}  // namespace

std::vector<GradCheckReport> run_gradient_checks(std::uint64_t seed) {
  std::vector<GradCheckReport> reports;
  reports.push_back(check_density_kernel());
  reports.push_back(check_grid_backward(mix_seed(seed, 1)));
  reports.push_back(check_network_gradients(mix_seed(seed, 2)));
  reports.push_back(check_dof_chain(mix_seed(seed, 3)));
  return reports;
}

}  // namespace gridock
