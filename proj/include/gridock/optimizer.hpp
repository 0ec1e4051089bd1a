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

#ifndef GRIDOCK_OPTIMIZER_HPP
#define GRIDOCK_OPTIMIZER_HPP

#include <functional>
#include <string>
#include <vector>

#include "gridock/grid.hpp"
#include "gridock/molecule.hpp"
#include "gridock/network.hpp"

namespace gridock {

// Score gradient in conformation space: same layout as ConformationDOF.
struct DofGradient {
  Vec3 translation;
  Vec3 rotation;
  std::vector<double> torsions;

  std::vector<double> flatten() const;
};

std::vector<double> flatten_dof(const ConformationDOF& dof);
ConformationDOF unflatten_dof(const std::vector<double>& x, int torsion_count);

// Per-atom score gradients -> DOF-space gradient, exact for the apply_dof
// parameterization:
//   translation: sum of forces
//   rotation:    world torque about the posed reference centroid, chained
//                through the rotation-vector Jacobian
//   torsion:     axis moment of the downstream forces, in the posed frame
// `posed_coords` must be apply_dof(ligand, dof).
DofGradient assemble_dof_gradient(const std::vector<Vec3>& atom_grads, const Ligand& ligand,
                                  const ConformationDOF& dof,
                                  const std::vector<Vec3>& posed_coords);
DofGradient assemble_dof_gradient(const std::vector<Vec3>& atom_grads, const Ligand& ligand,
                                  const ConformationDOF& dof);

struct BfgsOptions {
  double improvement_tolerance = 1e-5;
  int max_iterations = 100;
  double backtrack_factor = 0.5;
  double sufficient_increase = 1e-4;
  int max_backtracks = 20;
  // Optional initial inverse-Hessian diagonal (per-variable pre-scaling);
  // empty means identity.
  std::vector<double> initial_diagonal;

  void validate() const;
};

enum class Termination {
  improvement_below_tolerance,
  line_search_failed,
  max_iterations,
  non_finite,
};

std::string to_string(Termination t);
Termination termination_from_string(const std::string& s);

struct BfgsResult {
  std::vector<double> x;
  double value = 0.0;
  int steps = 0;
  Termination reason = Termination::max_iterations;
  std::vector<double> value_trace;  // value after each accepted step
};

// Value and gradient of the objective at x.
using ScoreAndGradient = std::function<double(const std::vector<double>&, std::vector<double>&)>;

// Maximizes the objective with BFGS (inverse-Hessian form) and a backtracking
// line search with a sufficient-increase condition. The inverse-Hessian
// update is skipped when the curvature condition fails and reset to the
// initial diagonal after three consecutive failures. Accepted steps never
// decrease the value; the run stops once a step improves by less than
// improvement_tolerance.
BfgsResult bfgs_maximize(const ScoreAndGradient& objective, const std::vector<double>& start,
                         const BfgsOptions& opts);

struct OptimizationResult {
  std::string target_id;
  long pose_index = -1;
  ConformationDOF initial_dof, final_dof;
  double initial_score = 0.0, final_score = 0.0;
  double initial_rmsd = 0.0, final_rmsd = 0.0;
  double delta_rmsd = 0.0;
  int steps = 0;
  Termination reason = Termination::max_iterations;
  bool left_grid = false;  // final pose has atoms outside the grid box
};

// Full chain: apply_dof -> rasterize -> network class output -> grid
// backward -> DOF gradient, driven to a local maximum by BFGS. The grid
// stays fixed at spec.center throughout.
OptimizationResult optimize_pose(const NetworkModel& model, const Receptor& receptor,
                                 const Ligand& ligand, const std::vector<Vec3>& crystal_coords,
                                 const ConformationDOF& start_dof, const GridSpec& spec,
                                 const AtomTypeTable& table, const BfgsOptions& opts,
                                 ObjectiveMode mode);

// Same loop against a caller-supplied per-atom score (used by tests and the
// analytic recovery oracle): scorer returns the score and fills d(score)/datom.
using AtomScore =
    std::function<double(const std::vector<Vec3>&, std::vector<Vec3>&)>;
OptimizationResult optimize_pose_with_score(const AtomScore& scorer, const Ligand& ligand,
                                            const std::vector<Vec3>& crystal_coords,
                                            const ConformationDOF& start_dof,
                                            const BfgsOptions& opts);

// Result record streams: JSONL with a header line.
void save_results(const std::string& path, const std::vector<OptimizationResult>& results);
std::vector<OptimizationResult> load_results(const std::string& path);

}  // namespace gridock

#endif
