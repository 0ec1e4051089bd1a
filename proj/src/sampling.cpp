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

#include "gridock/sampling.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gridock/errors.hpp"
#include "gridock/textio.hpp"

namespace gridock {

using nlohmann::json;

std::string to_string(PoseLabel label) {
  switch (label) {
    case PoseLabel::binding:
      return "binding";
    case PoseLabel::ambiguous:
      return "ambiguous";
    case PoseLabel::nonbinding:
      return "nonbinding";
  }
  return "unknown";
}

PoseLabel pose_label_from_string(const std::string& s) {
  if (s == "binding") return PoseLabel::binding;
  if (s == "ambiguous") return PoseLabel::ambiguous;
  if (s == "nonbinding") return PoseLabel::nonbinding;
  throw FormatError("unknown pose label '" + s + "'");
}

void LabelThresholds::validate() const {
  if (!(binding_max > 0) || !(nonbinding_min > 0) || !(binding_max < nonbinding_min))
    throw ContractError("label thresholds: need 0 < binding_max < nonbinding_min");
}

PoseLabel label_pose(double rmsd_value, const LabelThresholds& thresholds) {
  thresholds.validate();
  if (rmsd_value < 0.0 || !std::isfinite(rmsd_value))
    throw ContractError("label_pose: rmsd must be finite and non-negative");
  if (rmsd_value < thresholds.binding_max) return PoseLabel::binding;
  if (rmsd_value > thresholds.nonbinding_min) return PoseLabel::nonbinding;
  return PoseLabel::ambiguous;
}

ConformationDOF sample_random_pose(const Ligand& ligand, const std::vector<Vec3>& crystal_coords,
                                   Rng& rng) {
  if (crystal_coords.size() != ligand.atoms.size())
    throw ContractError("sample_random_pose: crystal coordinate count != ligand atom count");

  ConformationDOF dof;
  dof.rotation = uniform_quaternion(rng).to_rotation_vector();
  dof.torsions.resize(ligand.bonds.size());
  const double pi = 3.14159265358979323846;
  for (double& t : dof.torsions) t = rng.uniform(-pi, pi);

  const Box box = bounding_box(crystal_coords, 0.0);
  const Vec3 target{rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
                    rng.uniform(box.lo.z, box.hi.z)};

  // Solve for the translation that puts the posed centroid on `target`.
  dof.translation = {0, 0, 0};
  const Vec3 posed_centroid = centroid(apply_dof(ligand, dof));
  dof.translation = target - posed_centroid;
  return dof;
}

std::vector<PoseRecord> generate_random_set(const std::vector<SamplingTarget>& targets,
                                            int per_target, std::uint64_t seed,
                                            const LabelThresholds& thresholds) {
  if (per_target < 1) throw ContractError("generate_random_set: per_target must be >= 1");
  thresholds.validate();

  // Surface degenerate geometry here; the parallel loop must not throw.
  for (const SamplingTarget& t : targets) {
    if (!t.ligand) throw ContractError("generate_random_set: null ligand for '" + t.id + "'");
    for (const RotatableBond& b : t.ligand->bonds)
      if ((t.ligand->atoms[b.axis_to].pos - t.ligand->atoms[b.axis_from].pos).norm() == 0.0)
        throw ContractError("generate_random_set: zero-length bond axis in '" + t.id + "'");
  }

  std::vector<PoseRecord> records(targets.size() * static_cast<std::size_t>(per_target));
  const long target_count = static_cast<long>(targets.size());

#pragma omp parallel for schedule(dynamic)
  for (long ti = 0; ti < target_count; ++ti) {
    const SamplingTarget& target = targets[ti];
    const Ligand& ligand = *target.ligand;
    const std::vector<Vec3> crystal = ligand.positions();
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(ti)));
    for (int i = 0; i < per_target; ++i) {
      PoseRecord rec;
      rec.target_id = target.id;
      rec.pose_index = i;
      rec.dof = sample_random_pose(ligand, crystal, rng);
      rec.rmsd_to_crystal = rmsd(apply_dof(ligand, rec.dof), crystal);
      rec.label = label_pose(rec.rmsd_to_crystal, thresholds);
      records[static_cast<std::size_t>(ti) * per_target + i] = std::move(rec);
    }
  }
  return records;
}

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
  auto vec = [](const json& a) -> Vec3 {
    if (!a.is_array() || a.size() != 3) throw FormatError("dof vector must have 3 entries");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
  };
  ConformationDOF dof;
  dof.translation = vec(j["translation"]);
  dof.rotation = vec(j["rotation"]);
  dof.torsions = j["torsions"].get<std::vector<double>>();
  return dof;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<PoseRecord>& records) {
  std::string out;
  out += json{{"format_version", 1}, {"kind", "poses"}}.dump();
  out += '\n';
  for (const PoseRecord& rec : records) {
    json j = {{"target", rec.target_id},
              {"pose", rec.pose_index},
              {"dof", dof_to_json(rec.dof)},
              {"rmsd", rec.rmsd_to_crystal},
              {"label", to_string(rec.label)}};
    if (rec.score) j["score"] = *rec.score;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<PoseRecord> load_dataset(const std::string& path,
                                     const LabelThresholds& thresholds) {
  thresholds.validate();
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset file: " + path);
  std::vector<PoseRecord> records;
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
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!saw_header) {
      if (!j.is_object() || !j.contains("format_version") || j.value("kind", "") != "poses")
        throw FormatError("dataset line 1: expected header record");
      if (j["format_version"].get<int>() != 1)
        throw FormatError("dataset: unsupported format_version");
      saw_header = true;
      continue;
    }
    PoseRecord rec;
    try {
      rec.target_id = j.at("target").get<std::string>();
      rec.pose_index = j.at("pose").get<long>();
      rec.dof = dof_from_json(j.at("dof"));
      rec.rmsd_to_crystal = j.at("rmsd").get<double>();
      rec.label = pose_label_from_string(j.at("label").get<std::string>());
      if (j.contains("score")) rec.score = j["score"].get<double>();
    } catch (const json::exception& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    if (rec.label != label_pose(rec.rmsd_to_crystal, thresholds))
      throw FormatError("dataset line " + std::to_string(line_no) + ": label '" +
                        to_string(rec.label) + "' contradicts rmsd " +
                        fmt_double(rec.rmsd_to_crystal));
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<HistogramBin> histogram(const std::vector<double>& values, double bin_width) {
  if (!(bin_width > 0)) throw ContractError("histogram: bin width must be positive");
  if (values.empty()) return {};
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const long first = static_cast<long>(std::floor(lo / bin_width));
  const long last = static_cast<long>(std::floor(hi / bin_width));
  std::vector<HistogramBin> bins;
  for (long b = first; b <= last; ++b)
    bins.push_back({b * bin_width, (b + 1) * bin_width, 0});
  for (double v : values) {
    long b = static_cast<long>(std::floor(v / bin_width)) - first;
    if (b >= static_cast<long>(bins.size())) b = static_cast<long>(bins.size()) - 1;
    ++bins[static_cast<std::size_t>(b)].count;
  }
  return bins;
}

void write_histogram_csv(const std::string& path,
                         const std::vector<std::pair<std::string, std::vector<HistogramBin>>>&
                             named_histograms) {
  std::string out = "bin_lo,bin_hi,count,source_set\n";
  for (const auto& [name, bins] : named_histograms) {
    for (const HistogramBin& b : bins) {
      out += fmt_double(b.lo);
      out += ',';
      out += fmt_double(b.hi);
      out += ',';
      out += std::to_string(b.count);
      out += ',';
      out += name;
      out += '\n';
    }
  }
  write_file(path, out);
}

}  // namespace gridock
