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

#ifndef GRIDOCK_SAMPLING_HPP
#define GRIDOCK_SAMPLING_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridock/molecule.hpp"
#include "gridock/rng.hpp"

namespace gridock {

enum class PoseLabel { binding, ambiguous, nonbinding };

std::string to_string(PoseLabel label);
PoseLabel pose_label_from_string(const std::string& s);

// RMSD cutoffs with strict inequalities: < binding_max is binding,
// > nonbinding_min is non-binding, anything else (boundaries included)
// is ambiguous.
struct LabelThresholds {
  double binding_max = 2.0;
  double nonbinding_min = 4.0;

  void validate() const;
};

PoseLabel label_pose(double rmsd_value, const LabelThresholds& thresholds);

struct PoseRecord {
  std::string target_id;
  long pose_index = -1;
  ConformationDOF dof;
  double rmsd_to_crystal = 0.0;
  PoseLabel label = PoseLabel::ambiguous;
  std::optional<double> score;
};

// Random conformation: orientation uniform over the rotation group, torsions
// uniform in [-pi, pi), and the translation chosen so the posed centroid
// lands uniformly inside the crystal pose's bounding box (zero padding).
ConformationDOF sample_random_pose(const Ligand& ligand, const std::vector<Vec3>& crystal_coords,
                                   Rng& rng);

struct SamplingTarget {
  std::string id;
  const Ligand* ligand = nullptr;  // borrowed
};

// per_target poses per target with RMSD and label filled in. Each target
// draws from its own seed substream, so results do not depend on scheduling.
std::vector<PoseRecord> generate_random_set(const std::vector<SamplingTarget>& targets,
                                            int per_target, std::uint64_t seed,
                                            const LabelThresholds& thresholds);

// JSONL: header record then one record per line. Loading revalidates the
// label against the stored RMSD.
void save_dataset(const std::string& path, const std::vector<PoseRecord>& records);
std::vector<PoseRecord> load_dataset(const std::string& path, const LabelThresholds& thresholds);

struct HistogramBin {
  double lo, hi;
  long count;
};

// Fixed-width bins anchored at multiples of the width; empty input gives no
// bins. Values on the upper edge of the last bin are included in it.
std::vector<HistogramBin> histogram(const std::vector<double>& values, double bin_width);

void write_histogram_csv(const std::string& path,
                         const std::vector<std::pair<std::string, std::vector<HistogramBin>>>&
                             named_histograms);

}  // namespace gridock

#endif
