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

#ifndef GRIDOCK_PIPELINE_HPP
#define GRIDOCK_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridock/molecule.hpp"
#include "gridock/network.hpp"
#include "gridock/optimizer.hpp"
#include "gridock/sampling.hpp"

namespace gridock {

// One protein-ligand system. The ligand's reference conformation is the
// crystal pose; the grid sits at its centroid (the binding site).
struct TargetSystem {
  std::string id;
  Receptor receptor;
  Ligand ligand;
  Vec3 grid_center;
};

// Manifest: {"format_version":1, "targets":[{"id","receptor","ligand"},...]}
// with paths resolved relative to the manifest file.
std::vector<TargetSystem> load_targets(const std::string& manifest_path,
                                       const AtomTypeTable& table);

const TargetSystem& find_target(const std::vector<TargetSystem>& targets,
                                const std::string& id);

// Realizes dataset records into training examples. Ambiguous records are
// dropped here: they never enter training batches.
std::vector<TrainExample> examples_from_dataset(const std::vector<PoseRecord>& records,
                                                const std::vector<TargetSystem>& targets);

// Original records plus every optimized final pose, relabeled by its final
// RMSD. Ambiguous additions stay in the dataset; training exclusion happens
// in examples_from_dataset.
std::vector<PoseRecord> extend_training_set(const std::vector<PoseRecord>& original,
                                            const std::vector<OptimizationResult>& optimized,
                                            const LabelThresholds& thresholds);

// ---------------------------------------------------------------------------
// Statistics

struct StatRow {
  std::string category;  // all | binding | ambiguous | nonbinding
  long n = 0;
  std::optional<double> mean_delta_rmsd;
  std::optional<double> sem;    // sample sigma / sqrt(n); needs n >= 2
  std::optional<double> sigma;  // sample (n-1) standard deviation
};

struct IterationReport {
  std::string method;
  std::vector<StatRow> rows;  // all, binding, ambiguous, nonbinding
};

// Mean/SEM/sigma of delta RMSD over all poses and per initial-RMSD category.
// Empty categories report n = 0 with null statistics.
IterationReport delta_rmsd_stats(const std::vector<OptimizationResult>& results,
                                 const LabelThresholds& thresholds, const std::string& method);

struct MethodResults {
  std::string name;
  std::vector<OptimizationResult> results;
};

struct ComparisonReport {
  std::vector<IterationReport> reports;
};

// Validates that every method covers the same (target, pose) ids, then
// produces one report per method. Missing ids raise AlignmentError.
ComparisonReport compare_methods(const std::vector<MethodResults>& sets,
                                 const LabelThresholds& thresholds);

void write_report_csv(const std::string& path, const std::vector<IterationReport>& reports);
void write_method_histogram_csv(const std::string& path,
                                const std::vector<MethodResults>& sets, double bin_width);
void write_scatter_csv(const std::string& path, const std::vector<MethodResults>& sets);

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineConfig {
  std::uint64_t seed = 0;
  int rounds = 2;
  int workers = 0;  // 0 = all cores
  double edge_length = 24.0;
  double resolution = 0.5;
  TrainConfig train;
  BfgsOptions bfgs;
  LabelThresholds labels;
  ObjectiveMode objective = ObjectiveMode::probability;

  void validate() const;
};

struct RoundArtifacts {
  NetworkModel model;
  std::vector<OptimizationResult> results;
  IterationReport report;
  long training_set_size = 0;  // records eligible for training (non-ambiguous)
};

struct PipelineOutcome {
  std::vector<RoundArtifacts> rounds;
  std::uint64_t initial_dof_hash = 0;  // same random set re-optimized each round
};

// Round 1 trains on the initial set and optimizes every random pose; each
// later round retrains from scratch on the original set extended with the
// previous round's optimized poses, then re-optimizes the identical initial
// random poses. Per-round artifacts are written under out_dir when given.
PipelineOutcome run_pipeline(const PipelineConfig& config,
                             const std::vector<TargetSystem>& targets,
                             const std::vector<PoseRecord>& training_set,
                             const std::vector<PoseRecord>& random_set,
                             const AtomTypeTable& table, const std::string& out_dir = "");

// Optimizes every record against one model, fanning out over a worker pool;
// results land in record order regardless of scheduling.
std::vector<OptimizationResult> optimize_dataset(const NetworkModel& model,
                                                 const std::vector<TargetSystem>& targets,
                                                 const std::vector<PoseRecord>& records,
                                                 const GridSpec& geometry,
                                                 const AtomTypeTable& table,
                                                 const BfgsOptions& opts, ObjectiveMode mode,
                                                 int workers);

// FNV-1a over the canonical text form of the DOFs; used to assert that every
// round starts from the same random set.
std::uint64_t hash_initial_dofs(const std::vector<PoseRecord>& records);

}  // namespace gridock

#endif
