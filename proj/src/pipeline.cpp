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

#include "gridock/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "gridock/errors.hpp"
#include "gridock/textio.hpp"

namespace gridock {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<TargetSystem> load_targets(const std::string& manifest_path,
                                       const AtomTypeTable& table) {
  json doc;
  try {
    doc = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError("targets manifest: invalid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || doc.value("format_version", 0) != 1 || !doc.contains("targets"))
    throw FormatError("targets manifest: expected format_version 1 and a targets array");
  for (auto& [key, _] : doc.items())
    if (key != "format_version" && key != "targets")
      throw FormatError("targets manifest: unknown key '" + key + "'");

  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<TargetSystem> targets;
  std::set<std::string> seen;
  for (const auto& t : doc["targets"]) {
    if (!t.is_object() || !t.contains("id") || !t.contains("receptor") || !t.contains("ligand"))
      throw FormatError("targets manifest: each target needs id, receptor, ligand");
    TargetSystem sys;
    sys.id = t["id"].get<std::string>();
    if (!seen.insert(sys.id).second)
      throw FormatError("targets manifest: duplicate target id '" + sys.id + "'");
    sys.receptor = load_receptor((base / t["receptor"].get<std::string>()).string(), table);
    sys.ligand = load_ligand((base / t["ligand"].get<std::string>()).string(), table);
    sys.grid_center = centroid(sys.ligand.positions());
    targets.push_back(std::move(sys));
  }
  if (targets.empty()) throw FormatError("targets manifest: no targets");
  return targets;
}

const TargetSystem& find_target(const std::vector<TargetSystem>& targets,
                                const std::string& id) {
  for (const TargetSystem& t : targets)
    if (t.id == id) return t;
  throw ContractError("unknown target id '" + id + "'");
}

namespace {

std::unordered_map<std::string, const TargetSystem*> index_targets(
    const std::vector<TargetSystem>& targets) {
  std::unordered_map<std::string, const TargetSystem*> map;
  for (const TargetSystem& t : targets) map[t.id] = &t;
  return map;
}

}  // namespace

std::vector<TrainExample> examples_from_dataset(const std::vector<PoseRecord>& records,
                                                const std::vector<TargetSystem>& targets) {
  const auto by_id = index_targets(targets);
  std::vector<TrainExample> examples;
  examples.reserve(records.size());
  for (const PoseRecord& rec : records) {
    if (rec.label == PoseLabel::ambiguous) continue;
    const auto it = by_id.find(rec.target_id);
    if (it == by_id.end())
      throw ContractError("dataset references unknown target '" + rec.target_id + "'");
    const TargetSystem& sys = *it->second;
    TrainExample ex;
    ex.receptor = &sys.receptor;
    ex.ligand_coords = apply_dof(sys.ligand, rec.dof);
    ex.ligand_types = sys.ligand.type_indices();
    ex.label = rec.label == PoseLabel::binding ? BINDING_CLASS : NONBINDING_CLASS;
    ex.grid_center = sys.grid_center;
    examples.push_back(std::move(ex));
  }
  return examples;
}

std::vector<PoseRecord> extend_training_set(const std::vector<PoseRecord>& original,
                                            const std::vector<OptimizationResult>& optimized,
                                            const LabelThresholds& thresholds) {
  std::vector<PoseRecord> extended = original;
  extended.reserve(original.size() + optimized.size());
  for (const OptimizationResult& r : optimized) {
    PoseRecord rec;
    rec.target_id = r.target_id;
    rec.pose_index = r.pose_index;
    rec.dof = r.final_dof;
    rec.rmsd_to_crystal = r.final_rmsd;
    rec.label = label_pose(r.final_rmsd, thresholds);
    rec.score = r.final_score;
    extended.push_back(std::move(rec));
  }
  return extended;
}

// ---------------------------------------------------------------------------
// Statistics

namespace {

StatRow stats_over(const std::string& category, const std::vector<double>& values) {
  StatRow row;
  row.category = category;
  row.n = static_cast<long>(values.size());
  if (row.n == 0) return row;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(row.n);
  row.mean_delta_rmsd = mean;
  if (row.n >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sigma = std::sqrt(ss / static_cast<double>(row.n - 1));
    row.sigma = sigma;
    row.sem = sigma / std::sqrt(static_cast<double>(row.n));
  }
  return row;
}

}  // namespace

IterationReport delta_rmsd_stats(const std::vector<OptimizationResult>& results,
                                 const LabelThresholds& thresholds, const std::string& method) {
  thresholds.validate();
  std::vector<double> all, binding, ambiguous, nonbinding;
  for (const OptimizationResult& r : results) {
    all.push_back(r.delta_rmsd);
    switch (label_pose(r.initial_rmsd, thresholds)) {
      case PoseLabel::binding:
        binding.push_back(r.delta_rmsd);
        break;
      case PoseLabel::ambiguous:
        ambiguous.push_back(r.delta_rmsd);
        break;
      case PoseLabel::nonbinding:
        nonbinding.push_back(r.delta_rmsd);
        break;
    }
  }
  IterationReport report;
  report.method = method;
  report.rows.push_back(stats_over("all", all));
  report.rows.push_back(stats_over("binding", binding));
  report.rows.push_back(stats_over("ambiguous", ambiguous));
  report.rows.push_back(stats_over("nonbinding", nonbinding));
  return report;
}

ComparisonReport compare_methods(const std::vector<MethodResults>& sets,
                                 const LabelThresholds& thresholds) {
  if (sets.empty()) throw ContractError("compare_methods: no result sets");

  auto keys_of = [](const MethodResults& m) {
    std::set<std::pair<std::string, long>> keys;
    for (const OptimizationResult& r : m.results) keys.insert({r.target_id, r.pose_index});
    return keys;
  };
  const auto reference_keys = keys_of(sets[0]);
  for (std::size_t i = 1; i < sets.size(); ++i) {
    const auto keys = keys_of(sets[i]);
    if (keys == reference_keys) continue;
    std::string missing;
    int listed = 0;
    auto list_diff = [&](const auto& a, const auto& b, const std::string& where) {
      for (const auto& k : a) {
        if (b.count(k)) continue;
        if (listed == 8) {
          missing += " ...";
          break;
        }
        missing += " " + k.first + "#" + std::to_string(k.second) + "(" + where + ")";
        ++listed;
      }
    };
    list_diff(reference_keys, keys, "missing from " + sets[i].name);
    list_diff(keys, reference_keys, "extra in " + sets[i].name);
    throw AlignmentError("result sets '" + sets[0].name + "' and '" + sets[i].name +
                         "' cover different poses:" + missing);
  }

  ComparisonReport report;
  for (const MethodResults& m : sets)
    report.reports.push_back(delta_rmsd_stats(m.results, thresholds, m.name));
  return report;
}

namespace {

std::string opt_cell(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

}  // namespace

void write_report_csv(const std::string& path, const std::vector<IterationReport>& reports) {
  std::string out = "method,category,n,mean_delta_rmsd,sem,sigma\n";
  for (const IterationReport& rep : reports) {
    for (const StatRow& row : rep.rows) {
      out += rep.method;
      out += ',';
      out += row.category;
      out += ',';
      out += std::to_string(row.n);
      out += ',';
      out += opt_cell(row.mean_delta_rmsd);
      out += ',';
      out += opt_cell(row.sem);
      out += ',';
      out += opt_cell(row.sigma);
      out += '\n';
    }
  }
  write_file(path, out);
}

void write_method_histogram_csv(const std::string& path,
                                const std::vector<MethodResults>& sets, double bin_width) {
  std::string out = "method,bin_lo,bin_hi,count\n";
  for (const MethodResults& m : sets) {
    std::vector<double> deltas;
    deltas.reserve(m.results.size());
    for (const OptimizationResult& r : m.results) deltas.push_back(r.delta_rmsd);
    for (const HistogramBin& b : histogram(deltas, bin_width)) {
      out += m.name;
      out += ',';
      out += fmt_double(b.lo);
      out += ',';
      out += fmt_double(b.hi);
      out += ',';
      out += std::to_string(b.count);
      out += '\n';
    }
  }
  write_file(path, out);
}

void write_scatter_csv(const std::string& path, const std::vector<MethodResults>& sets) {
  std::string out = "method,pose_id,initial_rmsd,delta_rmsd\n";
  for (const MethodResults& m : sets) {
    for (const OptimizationResult& r : m.results) {
      out += m.name;
      out += ',';
      out += r.target_id + "#" + std::to_string(r.pose_index);
      out += ',';
      out += fmt_double(r.initial_rmsd);
      out += ',';
      out += fmt_double(r.delta_rmsd);
      out += '\n';
    }
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// Pipeline

void PipelineConfig::validate() const {
  if (rounds < 1) throw ConfigError("pipeline: rounds must be >= 1");
  if (workers < 0) throw ConfigError("pipeline: workers must be >= 0");
  if (!(edge_length > 0) || !(resolution > 0))
    throw ConfigError("pipeline: grid edge/resolution must be positive");
  train.validate();
  bfgs.validate();
  labels.validate();
}

std::vector<OptimizationResult> optimize_dataset(const NetworkModel& model,
                                                 const std::vector<TargetSystem>& targets,
                                                 const std::vector<PoseRecord>& records,
                                                 const GridSpec& geometry,
                                                 const AtomTypeTable& table,
                                                 const BfgsOptions& opts, ObjectiveMode mode,
                                                 int workers) {
  model.validate();
  opts.validate();
  const auto by_id = index_targets(targets);
  for (const PoseRecord& rec : records)
    if (!by_id.count(rec.target_id))
      throw ContractError("dataset references unknown target '" + rec.target_id + "'");

  std::vector<OptimizationResult> results(records.size());
  std::vector<std::string> errors(records.size());
  const long n = static_cast<long>(records.size());

  auto run_one = [&](long i) {
    const PoseRecord& rec = records[static_cast<std::size_t>(i)];
    const TargetSystem& sys = *by_id.at(rec.target_id);
    GridSpec spec = geometry;
    spec.center = sys.grid_center;
    try {
      OptimizationResult r =
          optimize_pose(model, sys.receptor, sys.ligand, sys.ligand.positions(), rec.dof, spec,
                        table, opts, mode);
      r.target_id = rec.target_id;
      r.pose_index = rec.pose_index;
      results[static_cast<std::size_t>(i)] = std::move(r);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  };

  if (workers == 1) {
    // Sequential over poses; the kernels keep their inner parallelism.
    for (long i = 0; i < n; ++i) run_one(i);
  } else {
    const int nt = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (long i = 0; i < n; ++i) run_one(i);
  }

  for (long i = 0; i < n; ++i)
    if (!errors[static_cast<std::size_t>(i)].empty())
      throw Error("optimizing pose " + records[static_cast<std::size_t>(i)].target_id + "#" +
                  std::to_string(records[static_cast<std::size_t>(i)].pose_index) + ": " +
                  errors[static_cast<std::size_t>(i)]);
  return results;
}

std::uint64_t hash_initial_dofs(const std::vector<PoseRecord>& records) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto feed = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const PoseRecord& rec : records) {
    feed(rec.target_id);
    feed("#" + std::to_string(rec.pose_index));
    const std::vector<double> x = flatten_dof(rec.dof);
    for (double v : x) feed(fmt_double(v) + ",");
    feed(";");
  }
  return h;
}

PipelineOutcome run_pipeline(const PipelineConfig& config,
                             const std::vector<TargetSystem>& targets,
                             const std::vector<PoseRecord>& training_set,
                             const std::vector<PoseRecord>& random_set,
                             const AtomTypeTable& table, const std::string& out_dir) {
  config.validate();
  if (random_set.empty()) throw ConfigError("pipeline: empty random set");

  GridSpec geometry;
  geometry.edge_length = config.edge_length;
  geometry.resolution = config.resolution;
  geometry.channel_count = table.size();

  if (!out_dir.empty()) fs::create_directories(out_dir);
  auto out_path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

  PipelineOutcome outcome;
  outcome.initial_dof_hash = hash_initial_dofs(random_set);

  std::vector<PoseRecord> current_training = training_set;
  std::vector<MethodResults> method_sets;

  for (int round = 1; round <= config.rounds; ++round) {
    const std::string tag = "cnn" + std::to_string(round);

    NetworkModel model = make_standard_model(table.size(), geometry.points_per_side());
    initialize_weights(model, mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(round)));

    const std::vector<TrainExample> examples = examples_from_dataset(current_training, targets);
    TrainConfig tc = config.train;
    tc.seed = mix_seed(config.seed, 2000 + static_cast<std::uint64_t>(round));
    const TrainResult train_result = train(model, examples, geometry, table, tc);

    std::vector<OptimizationResult> results =
        optimize_dataset(model, targets, random_set, geometry, table, config.bfgs,
                         config.objective, config.workers);

    if (hash_initial_dofs(random_set) != outcome.initial_dof_hash)
      throw Error("pipeline: random set changed between rounds");

    RoundArtifacts art;
    art.report = delta_rmsd_stats(results, config.labels, tag);
    art.training_set_size = static_cast<long>(examples.size());

    if (!out_dir.empty()) {
      save_model(out_path("model_round" + std::to_string(round) + ".bin"), model,
                 geometry.edge_length, geometry.resolution);
      write_loss_trace_csv(out_path("loss_round" + std::to_string(round) + ".csv"),
                           train_result);
      save_results(out_path("results_round" + std::to_string(round) + ".jsonl"), results);
      save_dataset(out_path("training_set_round" + std::to_string(round) + ".jsonl"),
                   current_training);
    }

    if (round < config.rounds)
      current_training = extend_training_set(training_set, results, config.labels);

    method_sets.push_back({tag, results});
    art.model = std::move(model);
    art.results = std::move(results);
    outcome.rounds.push_back(std::move(art));
  }

  if (!out_dir.empty()) {
    std::vector<IterationReport> reports;
    for (const RoundArtifacts& art : outcome.rounds) reports.push_back(art.report);
    write_report_csv(out_path("report.csv"), reports);
    write_method_histogram_csv(out_path("hist.csv"), method_sets, 0.5);
    write_scatter_csv(out_path("scatter.csv"), method_sets);
  }
  return outcome;
}

}  // namespace gridock
