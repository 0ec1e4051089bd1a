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

#include "gridock/optimizer.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gridock/errors.hpp"
#include "gridock/textio.hpp"

namespace gridock {

using nlohmann::json;

std::vector<double> DofGradient::flatten() const {
  std::vector<double> x{translation.x, translation.y, translation.z,
                        rotation.x,    rotation.y,    rotation.z};
  x.insert(x.end(), torsions.begin(), torsions.end());
  return x;
}

std::vector<double> flatten_dof(const ConformationDOF& dof) {
  std::vector<double> x{dof.translation.x, dof.translation.y, dof.translation.z,
                        dof.rotation.x,    dof.rotation.y,    dof.rotation.z};
  x.insert(x.end(), dof.torsions.begin(), dof.torsions.end());
  return x;
}

ConformationDOF unflatten_dof(const std::vector<double>& x, int torsion_count) {
  if (static_cast<int>(x.size()) != 6 + torsion_count)
    throw ContractError("unflatten_dof: wrong vector length");
  ConformationDOF dof;
  dof.translation = {x[0], x[1], x[2]};
  dof.rotation = {x[3], x[4], x[5]};
  dof.torsions.assign(x.begin() + 6, x.end());
  return dof;
}

DofGradient assemble_dof_gradient(const std::vector<Vec3>& atom_grads, const Ligand& ligand,
                                  const ConformationDOF& dof,
                                  const std::vector<Vec3>& posed_coords) {
  if (atom_grads.size() != ligand.atoms.size())
    throw ContractError("assemble_dof_gradient: gradient count != atom count");
  if (posed_coords.size() != ligand.atoms.size())
    throw ContractError("assemble_dof_gradient: posed coordinate count != atom count");
  if (static_cast<int>(dof.torsions.size()) != ligand.torsion_count())
    throw ContractError("assemble_dof_gradient: torsion count mismatch");

  DofGradient g;
  for (const Vec3& f : atom_grads) g.translation += f;

  // The rotation center is where the pose maps the reference centroid.
  const Vec3 center = ligand.reference_centroid + dof.translation;
  Vec3 torque;
  for (std::size_t i = 0; i < atom_grads.size(); ++i)
    torque += (posed_coords[i] - center).cross(atom_grads[i]);
  // Torque lives in the world frame; the optimizer differentiates the
  // rotation-vector parameters, so chain through the exp-map Jacobian.
  g.rotation = so3_left_jacobian(dof.rotation).apply_transposed(torque);

  g.torsions.resize(ligand.bonds.size());
  for (std::size_t b = 0; b < ligand.bonds.size(); ++b) {
    const RotatableBond& bond = ligand.bonds[b];
    const Vec3 origin = posed_coords[bond.axis_from];
    Vec3 axis = posed_coords[bond.axis_to] - origin;
    const double len = axis.norm();
    if (len == 0.0) throw ContractError("assemble_dof_gradient: zero-length bond axis");
    axis = axis / len;
    double acc = 0.0;
    for (int i : bond.downstream)
      acc += axis.dot((posed_coords[i] - origin).cross(atom_grads[i]));
    g.torsions[b] = acc;
  }
  return g;
}

DofGradient assemble_dof_gradient(const std::vector<Vec3>& atom_grads, const Ligand& ligand,
                                  const ConformationDOF& dof) {
  return assemble_dof_gradient(atom_grads, ligand, dof, apply_dof(ligand, dof));
}

void BfgsOptions::validate() const {
  if (!(improvement_tolerance > 0)) throw ContractError("bfgs: tolerance must be positive");
  if (max_iterations < 1) throw ContractError("bfgs: max_iterations must be >= 1");
  if (!(backtrack_factor > 0 && backtrack_factor < 1))
    throw ContractError("bfgs: backtrack factor must be in (0,1)");
  if (!(sufficient_increase > 0 && sufficient_increase < 1))
    throw ContractError("bfgs: sufficient-increase coefficient must be in (0,1)");
  if (max_backtracks < 1) throw ContractError("bfgs: max_backtracks must be >= 1");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::improvement_below_tolerance:
      return "improvement_below_tolerance";
    case Termination::line_search_failed:
      return "line_search_failed";
    case Termination::max_iterations:
      return "max_iterations";
    case Termination::non_finite:
      return "non_finite";
  }
  return "unknown";
}

Termination termination_from_string(const std::string& s) {
  if (s == "improvement_below_tolerance") return Termination::improvement_below_tolerance;
  if (s == "line_search_failed") return Termination::line_search_failed;
  if (s == "max_iterations") return Termination::max_iterations;
  if (s == "non_finite") return Termination::non_finite;
  throw FormatError("unknown termination reason '" + s + "'");
}

namespace {

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Dense inverse-Hessian BFGS state over a handful of variables.
struct InverseHessian {
  int n;
  std::vector<double> h;  // row-major n x n

  explicit InverseHessian(const std::vector<double>& diag, int n_) : n(n_), h(n_ * n_, 0.0) {
    for (int i = 0; i < n; ++i) h[i * n + i] = diag.empty() ? 1.0 : diag[i];
  }

  void reset(const std::vector<double>& diag) {
    std::fill(h.begin(), h.end(), 0.0);
    for (int i = 0; i < n; ++i) h[i * n + i] = diag.empty() ? 1.0 : diag[i];
  }

  std::vector<double> apply(const std::vector<double>& v) const {
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += h[i * n + j] * v[j];
      out[i] = acc;
    }
    return out;
  }

  // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
  void update(const std::vector<double>& s, const std::vector<double>& y, double rho) {
    const std::vector<double> hy = apply(y);
    double yhy = 0.0;
    for (int i = 0; i < n; ++i) yhy += y[i] * hy[i];
    const double c = (1.0 + rho * yhy) * rho;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        h[i * n + j] += c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
  }
};

}  // namespace

BfgsResult bfgs_maximize(const ScoreAndGradient& objective, const std::vector<double>& start,
                         const BfgsOptions& opts) {
  opts.validate();
  const int n = static_cast<int>(start.size());
  if (!opts.initial_diagonal.empty() && static_cast<int>(opts.initial_diagonal.size()) != n)
    throw ContractError("bfgs: initial diagonal has wrong length");

  BfgsResult res;
  res.x = start;
  std::vector<double> grad(n, 0.0);
  res.value = objective(res.x, grad);
  if (!std::isfinite(res.value) || !all_finite(grad))
    throw ContractError("bfgs: non-finite score or gradient at the start point");

  InverseHessian hess(opts.initial_diagonal, n);
  int curvature_failures = 0;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const std::vector<double> dir = hess.apply(grad);
    double slope = 0.0;  // directional derivative along the ascent direction
    for (int i = 0; i < n; ++i) slope += grad[i] * dir[i];

    // Backtracking with a sufficient-increase requirement.
    double alpha = 1.0;
    double trial_value = 0.0;
    std::vector<double> trial(n), trial_grad(n, 0.0);
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      for (int i = 0; i < n; ++i) trial[i] = res.x[i] + alpha * dir[i];
      trial_value = objective(trial, trial_grad);
      if (std::isfinite(trial_value) &&
          trial_value >= res.value + opts.sufficient_increase * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= opts.backtrack_factor;
    }
    if (!accepted) {
      res.reason = Termination::line_search_failed;
      return res;
    }
    if (!all_finite(trial_grad)) {
      res.reason = Termination::non_finite;
      return res;
    }

    const double improvement = trial_value - res.value;
    std::vector<double> s(n), y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = trial[i] - res.x[i];
      // Gradient difference of the negated objective.
      y[i] = grad[i] - trial_grad[i];
    }
    res.x = trial;
    res.value = trial_value;
    grad = trial_grad;
    ++res.steps;
    res.value_trace.push_back(res.value);

    if (improvement < opts.improvement_tolerance) {
      res.reason = Termination::improvement_below_tolerance;
      return res;
    }

    double sy = 0.0;
    for (int i = 0; i < n; ++i) sy += s[i] * y[i];
    if (sy > 1e-12) {
      hess.update(s, y, 1.0 / sy);
      curvature_failures = 0;
    } else if (++curvature_failures >= 3) {
      hess.reset(opts.initial_diagonal);
      curvature_failures = 0;
    }
  }
  res.reason = Termination::max_iterations;
  return res;
}

namespace {

OptimizationResult run_dof_optimization(const AtomScore& scorer, const Ligand& ligand,
                                        const std::vector<Vec3>& crystal_coords,
                                        const ConformationDOF& start_dof,
                                        const BfgsOptions& opts) {
  if (crystal_coords.size() != ligand.atoms.size())
    throw ContractError("optimize_pose: crystal coordinate count != ligand atom count");

  const int torsions = ligand.torsion_count();
  std::vector<Vec3> atom_grads(ligand.atoms.size());

  const ScoreAndGradient objective = [&](const std::vector<double>& x,
                                         std::vector<double>& grad) {
    const ConformationDOF dof = unflatten_dof(x, torsions);
    const std::vector<Vec3> coords = apply_dof(ligand, dof);
    const double score = scorer(coords, atom_grads);
    grad = assemble_dof_gradient(atom_grads, ligand, dof, coords).flatten();
    return score;
  };

  OptimizationResult out;
  out.initial_dof = start_dof;
  out.initial_rmsd = rmsd(apply_dof(ligand, start_dof), crystal_coords);

  const BfgsResult bfgs = bfgs_maximize(objective, flatten_dof(start_dof), opts);

  out.final_dof = unflatten_dof(bfgs.x, torsions);
  out.steps = bfgs.steps;
  out.reason = bfgs.reason;
  out.final_rmsd = rmsd(apply_dof(ligand, out.final_dof), crystal_coords);
  out.delta_rmsd = out.final_rmsd - out.initial_rmsd;
  out.final_score = bfgs.value;
  return out;
}

}  // namespace

OptimizationResult optimize_pose(const NetworkModel& model, const Receptor& receptor,
                                 const Ligand& ligand, const std::vector<Vec3>& crystal_coords,
                                 const ConformationDOF& start_dof, const GridSpec& spec,
                                 const AtomTypeTable& table, const BfgsOptions& opts,
                                 ObjectiveMode mode) {
  const std::vector<int> types = ligand.type_indices();
  const AtomScore scorer = [&](const std::vector<Vec3>& coords, std::vector<Vec3>& grads) {
    const AtomGrid grid = rasterize(receptor, coords, types, spec, table);
    const ScoredGradient sg = score_with_gradient(model, grid, BINDING_CLASS, mode);
    grads = grid_backward(sg.grid_grad, coords, types, spec, table);
    return sg.score;
  };

  OptimizationResult out = run_dof_optimization(scorer, ligand, crystal_coords, start_dof, opts);

  // Scores at the endpoints (the BFGS trace only covers accepted steps).
  {
    std::vector<Vec3> tmp(ligand.atoms.size());
    const std::vector<Vec3> initial_coords = apply_dof(ligand, start_dof);
    out.initial_score = scorer(initial_coords, tmp);
    const std::vector<Vec3> final_coords = apply_dof(ligand, out.final_dof);
    const Box box{spec.min_corner(),
                  spec.min_corner() + Vec3{spec.edge_length, spec.edge_length, spec.edge_length}};
    for (const Vec3& p : final_coords)
      if (!box.contains(p)) {
        out.left_grid = true;
        break;
      }
  }
  return out;
}

OptimizationResult optimize_pose_with_score(const AtomScore& scorer, const Ligand& ligand,
                                            const std::vector<Vec3>& crystal_coords,
                                            const ConformationDOF& start_dof,
                                            const BfgsOptions& opts) {
  OptimizationResult out = run_dof_optimization(scorer, ligand, crystal_coords, start_dof, opts);
  std::vector<Vec3> tmp(ligand.atoms.size());
  out.initial_score = scorer(apply_dof(ligand, start_dof), tmp);
  return out;
}

// ---------------------------------------------------------------------------
// Result records

namespace {

json dof_to_json(const ConformationDOF& dof) {
  return {{"translation", {dof.translation.x, dof.translation.y, dof.translation.z}},
          {"rotation", {dof.rotation.x, dof.rotation.y, dof.rotation.z}},
          {"torsions", dof.torsions}};
}

ConformationDOF dof_from_json(const json& j) {
  if (!j.is_object() || !j.contains("translation") || !j.contains("rotation") ||
      !j.contains("torsions"))
    throw FormatError("dof record needs translation, rotation, torsions");
  ConformationDOF dof;
  auto vec = [](const json& a) -> Vec3 {
    if (!a.is_array() || a.size() != 3) throw FormatError("dof vector must have 3 entries");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
  };
  dof.translation = vec(j["translation"]);
  dof.rotation = vec(j["rotation"]);
  dof.torsions = j["torsions"].get<std::vector<double>>();
  return dof;
}

}  // namespace

void save_results(const std::string& path, const std::vector<OptimizationResult>& results) {
  std::string out;
  out += json{{"format_version", 1}, {"kind", "results"}}.dump();
  out += '\n';
  for (const OptimizationResult& r : results) {
    json rec = {{"target", r.target_id},
                {"pose", r.pose_index},
                {"initial_rmsd", r.initial_rmsd},
                {"final_rmsd", r.final_rmsd},
                {"delta_rmsd", r.delta_rmsd},
                {"initial_score", r.initial_score},
                {"final_score", r.final_score},
                {"steps", r.steps},
                {"termination", to_string(r.reason)},
                {"left_grid", r.left_grid},
                {"initial_dof", dof_to_json(r.initial_dof)},
                {"final_dof", dof_to_json(r.final_dof)}};
    out += rec.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<OptimizationResult> load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open results file: " + path);
  std::vector<OptimizationResult> results;
  std::string line;
  long line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("results file line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!saw_header) {
      if (!j.is_object() || !j.contains("format_version") || j.value("kind", "") != "results")
        throw FormatError("results file line 1: expected header record");
      if (j["format_version"].get<int>() != 1)
        throw FormatError("results file: unsupported format_version");
      saw_header = true;
      continue;
    }
    try {
      OptimizationResult r;
      r.target_id = j.at("target").get<std::string>();
      r.pose_index = j.at("pose").get<long>();
      r.initial_rmsd = j.at("initial_rmsd").get<double>();
      r.final_rmsd = j.at("final_rmsd").get<double>();
      r.delta_rmsd = j.at("delta_rmsd").get<double>();
      r.initial_score = j.at("initial_score").get<double>();
      r.final_score = j.at("final_score").get<double>();
      r.steps = j.at("steps").get<int>();
      r.reason = termination_from_string(j.at("termination").get<std::string>());
      r.left_grid = j.at("left_grid").get<bool>();
      r.initial_dof = dof_from_json(j.at("initial_dof"));
      r.final_dof = dof_from_json(j.at("final_dof"));
      results.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError("results file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return results;
}

}  // namespace gridock
