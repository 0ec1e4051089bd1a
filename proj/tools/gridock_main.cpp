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

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridock/errors.hpp"
#include "gridock/gradcheck.hpp"
#include "gridock/grid.hpp"
#include "gridock/molecule.hpp"
#include "gridock/network.hpp"
#include "gridock/optimizer.hpp"
#include "gridock/pipeline.hpp"
#include "gridock/sampling.hpp"
#include "gridock/textio.hpp"

namespace {

using namespace gridock;
using nlohmann::json;

AtomTypeTable load_table(const std::string& types_path) {
  if (types_path.empty()) return default_atom_types();
  return AtomTypeTable::load(types_path);
}

struct PipelinePaths {
  std::string targets, types, training_set, random_set, out_dir;
};

void expect_keys(const json& obj, std::initializer_list<const char*> known,
                 const std::string& where) {
  for (auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("config: unknown key '" + where + key + "'");
  }
}

void parse_pipeline_config(const std::string& path, PipelineConfig& cfg, PipelinePaths& paths) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config: invalid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || doc.value("format_version", 0) != 1)
    throw ConfigError("config: expected an object with format_version 1");
  expect_keys(doc,
              {"format_version", "seed", "rounds", "workers", "grid", "train", "bfgs", "labels",
               "objective", "paths"},
              "");
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.rounds = doc.value("rounds", cfg.rounds);
  cfg.workers = doc.value("workers", cfg.workers);
  if (doc.contains("grid")) {
    const json& g = doc["grid"];
    expect_keys(g, {"edge_length", "resolution"}, "grid.");
    cfg.edge_length = g.value("edge_length", cfg.edge_length);
    cfg.resolution = g.value("resolution", cfg.resolution);
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    expect_keys(t,
                {"base_lr", "momentum", "gamma", "power", "weight_decay", "batch_size",
                 "max_iterations", "augment", "augment_translation"},
                "train.");
    cfg.train.base_lr = t.value("base_lr", cfg.train.base_lr);
    cfg.train.momentum = t.value("momentum", cfg.train.momentum);
    cfg.train.gamma = t.value("gamma", cfg.train.gamma);
    cfg.train.power = t.value("power", cfg.train.power);
    cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.max_iterations = t.value("max_iterations", cfg.train.max_iterations);
    cfg.train.augment = t.value("augment", cfg.train.augment);
    cfg.train.augment_translation = t.value("augment_translation", cfg.train.augment_translation);
  }
  if (doc.contains("bfgs")) {
    const json& b = doc["bfgs"];
    expect_keys(b,
                {"improvement_tolerance", "max_iterations", "backtrack_factor",
                 "sufficient_increase", "max_backtracks"},
                "bfgs.");
    cfg.bfgs.improvement_tolerance = b.value("improvement_tolerance", cfg.bfgs.improvement_tolerance);
    cfg.bfgs.max_iterations = b.value("max_iterations", cfg.bfgs.max_iterations);
    cfg.bfgs.backtrack_factor = b.value("backtrack_factor", cfg.bfgs.backtrack_factor);
    cfg.bfgs.sufficient_increase = b.value("sufficient_increase", cfg.bfgs.sufficient_increase);
    cfg.bfgs.max_backtracks = b.value("max_backtracks", cfg.bfgs.max_backtracks);
  }
  if (doc.contains("labels")) {
    const json& l = doc["labels"];
    expect_keys(l, {"binding_max", "nonbinding_min"}, "labels.");
    cfg.labels.binding_max = l.value("binding_max", cfg.labels.binding_max);
    cfg.labels.nonbinding_min = l.value("nonbinding_min", cfg.labels.nonbinding_min);
  }
  if (doc.contains("objective"))
    cfg.objective = objective_mode_from_string(doc["objective"].get<std::string>());
  if (doc.contains("paths")) {
    const json& p = doc["paths"];
    expect_keys(p, {"targets", "types", "training_set", "random_set", "out_dir"}, "paths.");
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& rel) {
      return rel.empty() ? rel : (base / rel).string();
    };
    paths.targets = resolve(p.value("targets", ""));
    paths.types = resolve(p.value("types", ""));
    paths.training_set = resolve(p.value("training_set", ""));
    paths.random_set = resolve(p.value("random_set", ""));
    paths.out_dir = resolve(p.value("out_dir", ""));
  }
}

std::vector<SamplingTarget> sampling_targets(const std::vector<TargetSystem>& systems) {
  std::vector<SamplingTarget> out;
  out.reserve(systems.size());
  for (const TargetSystem& s : systems) out.push_back({s.id, &s.ligand});
  return out;
}

// "name=path" or bare path (name = filename stem).
std::pair<std::string, std::string> split_named_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos) return {arg.substr(0, eq), arg.substr(eq + 1)};
  return {std::filesystem::path(arg).stem().string(), arg};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grid-based CNN pose scoring and optimization toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  // --- rasterize ------------------------------------------------------------
  auto* cmd_raster = app.add_subcommand("rasterize", "molecule files -> grid dump");
  std::string r_ligand, r_receptor, r_types, r_out;
  double r_edge = 24.0, r_resolution = 0.5;
  std::vector<double> r_center;
  std::uint64_t r_seed = 0;
  cmd_raster->add_option("--ligand", r_ligand, "ligand molecule file")->required();
  cmd_raster->add_option("--receptor", r_receptor, "receptor molecule file");
  cmd_raster->add_option("--types", r_types, "atom type table (default: built-in)");
  cmd_raster->add_option("--out", r_out, "output grid file")->required();
  cmd_raster->add_option("--edge", r_edge, "grid edge length in Angstroms");
  cmd_raster->add_option("--resolution", r_resolution, "grid resolution in Angstroms");
  cmd_raster->add_option("--center", r_center, "grid center x,y,z (default: ligand centroid)")
      ->delimiter(',')
      ->expected(3);
  cmd_raster->add_option("--seed", r_seed, "seed (accepted for interface uniformity)");

  // --- sample ---------------------------------------------------------------
  auto* cmd_sample = app.add_subcommand("sample", "crystal poses -> random pose dataset");
  std::string s_targets, s_types, s_out, s_hist;
  int s_per_target = 500;
  std::uint64_t s_seed = 0;
  double s_binding_max = 2.0, s_nonbinding_min = 4.0;
  cmd_sample->add_option("--targets", s_targets, "targets manifest")->required();
  cmd_sample->add_option("--types", s_types, "atom type table (default: built-in)");
  cmd_sample->add_option("--out", s_out, "output dataset (jsonl)")->required();
  cmd_sample->add_option("--hist", s_hist, "also write an RMSD histogram CSV here");
  cmd_sample->add_option("--per-target", s_per_target, "poses per target");
  cmd_sample->add_option("--seed", s_seed, "random seed");
  cmd_sample->add_option("--binding-max", s_binding_max, "binding label cutoff (A)");
  cmd_sample->add_option("--nonbinding-min", s_nonbinding_min, "non-binding label cutoff (A)");

  // --- train ----------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "pose dataset -> model + loss trace");
  std::string t_targets, t_types, t_dataset, t_out, t_loss_csv;
  TrainConfig t_cfg;
  std::uint64_t t_seed = 0;
  double t_edge = 24.0, t_resolution = 0.5;
  double t_binding_max = 2.0, t_nonbinding_min = 4.0;
  cmd_train->add_option("--targets", t_targets, "targets manifest")->required();
  cmd_train->add_option("--types", t_types, "atom type table (default: built-in)");
  cmd_train->add_option("--dataset", t_dataset, "training pose dataset (jsonl)")->required();
  cmd_train->add_option("--out", t_out, "output model file")->required();
  cmd_train->add_option("--loss-csv", t_loss_csv, "loss trace CSV path");
  cmd_train->add_option("--seed", t_seed, "random seed");
  cmd_train->add_option("--iterations", t_cfg.max_iterations, "training iterations");
  cmd_train->add_option("--batch-size", t_cfg.batch_size, "batch size (even)");
  cmd_train->add_option("--base-lr", t_cfg.base_lr, "base learning rate");
  cmd_train->add_option("--momentum", t_cfg.momentum, "SGD momentum");
  cmd_train->add_option("--gamma", t_cfg.gamma, "inverse LR policy gamma");
  cmd_train->add_option("--power", t_cfg.power, "inverse LR policy power");
  cmd_train->add_option("--weight-decay", t_cfg.weight_decay, "L2 weight decay");
  cmd_train->add_flag("--augment,!--no-augment", t_cfg.augment, "random pose jitter");
  cmd_train->add_option("--augment-translation", t_cfg.augment_translation,
                        "max jitter translation per axis (A)");
  cmd_train->add_option("--edge", t_edge, "grid edge length (A)");
  cmd_train->add_option("--resolution", t_resolution, "grid resolution (A)");
  cmd_train->add_option("--binding-max", t_binding_max, "binding label cutoff (A)");
  cmd_train->add_option("--nonbinding-min", t_nonbinding_min, "non-binding label cutoff (A)");

  // --- optimize ---------------------------------------------------------------
  auto* cmd_opt = app.add_subcommand("optimize", "model + pose dataset -> optimization results");
  std::string o_targets, o_types, o_model, o_dataset, o_out, o_mode = "probability";
  int o_workers = 0;
  std::uint64_t o_seed = 0;
  BfgsOptions o_bfgs;
  double o_binding_max = 2.0, o_nonbinding_min = 4.0;
  cmd_opt->add_option("--targets", o_targets, "targets manifest")->required();
  cmd_opt->add_option("--types", o_types, "atom type table (default: built-in)");
  cmd_opt->add_option("--model", o_model, "trained model file")->required();
  cmd_opt->add_option("--dataset", o_dataset, "pose dataset to optimize (jsonl)")->required();
  cmd_opt->add_option("--out", o_out, "output results file (jsonl)")->required();
  cmd_opt->add_option("--mode", o_mode, "objective: probability or logit");
  cmd_opt->add_option("--workers", o_workers, "parallel pose workers (0 = all cores)")
      ->envname("GRIDOCK_WORKERS");
  cmd_opt->add_option("--seed", o_seed, "seed (accepted for interface uniformity)");
  cmd_opt->add_option("--bfgs-max-iterations", o_bfgs.max_iterations, "BFGS iteration cap");
  cmd_opt->add_option("--bfgs-tolerance", o_bfgs.improvement_tolerance,
                      "per-step improvement tolerance");
  cmd_opt->add_option("--binding-max", o_binding_max, "binding label cutoff (A)");
  cmd_opt->add_option("--nonbinding-min", o_nonbinding_min, "non-binding label cutoff (A)");

  // --- pipeline ---------------------------------------------------------------
  auto* cmd_pipe = app.add_subcommand("pipeline", "full iterative train/optimize loop");
  std::string p_config;
  PipelineConfig p_cfg;
  PipelinePaths p_paths;
  std::string p_objective;
  cmd_pipe->add_option("--config", p_config, "pipeline config (JSON)")
      ->envname("GRIDOCK_CONFIG");
  cmd_pipe->add_option("--seed", p_cfg.seed, "master seed");
  cmd_pipe->add_option("--rounds", p_cfg.rounds, "training/optimization rounds");
  cmd_pipe->add_option("--workers", p_cfg.workers, "parallel pose workers (0 = all cores)")
      ->envname("GRIDOCK_WORKERS");
  cmd_pipe->add_option("--edge", p_cfg.edge_length, "grid edge length (A)");
  cmd_pipe->add_option("--resolution", p_cfg.resolution, "grid resolution (A)");
  cmd_pipe->add_option("--iterations", p_cfg.train.max_iterations, "training iterations");
  cmd_pipe->add_option("--batch-size", p_cfg.train.batch_size, "batch size (even)");
  cmd_pipe->add_option("--base-lr", p_cfg.train.base_lr, "base learning rate");
  cmd_pipe->add_option("--momentum", p_cfg.train.momentum, "SGD momentum");
  cmd_pipe->add_option("--gamma", p_cfg.train.gamma, "inverse LR policy gamma");
  cmd_pipe->add_option("--power", p_cfg.train.power, "inverse LR policy power");
  cmd_pipe->add_option("--weight-decay", p_cfg.train.weight_decay, "L2 weight decay");
  cmd_pipe->add_flag("--augment,!--no-augment", p_cfg.train.augment, "random pose jitter");
  cmd_pipe->add_option("--augment-translation", p_cfg.train.augment_translation,
                       "max jitter translation per axis (A)");
  cmd_pipe->add_option("--bfgs-max-iterations", p_cfg.bfgs.max_iterations, "BFGS iteration cap");
  cmd_pipe->add_option("--bfgs-tolerance", p_cfg.bfgs.improvement_tolerance,
                       "per-step improvement tolerance");
  cmd_pipe->add_option("--backtrack-factor", p_cfg.bfgs.backtrack_factor,
                       "line search backtrack factor");
  cmd_pipe->add_option("--sufficient-increase", p_cfg.bfgs.sufficient_increase,
                       "line search sufficient-increase coefficient");
  cmd_pipe->add_option("--max-backtracks", p_cfg.bfgs.max_backtracks, "line search cap");
  cmd_pipe->add_option("--binding-max", p_cfg.labels.binding_max, "binding label cutoff (A)");
  cmd_pipe->add_option("--nonbinding-min", p_cfg.labels.nonbinding_min,
                       "non-binding label cutoff (A)");
  cmd_pipe->add_option("--objective", p_objective, "probability or logit");
  cmd_pipe->add_option("--targets", p_paths.targets, "targets manifest");
  cmd_pipe->add_option("--types", p_paths.types, "atom type table (default: built-in)");
  cmd_pipe->add_option("--training-set", p_paths.training_set, "training dataset (jsonl)");
  cmd_pipe->add_option("--random-set", p_paths.random_set, "random pose dataset (jsonl)");
  cmd_pipe->add_option("--out-dir", p_paths.out_dir, "artifact output directory");

  // --- stats ------------------------------------------------------------------
  auto* cmd_stats = app.add_subcommand("stats", "results -> report/histogram/scatter CSVs");
  std::vector<std::string> st_results;
  std::string st_prefix;
  std::uint64_t st_seed = 0;
  double st_binding_max = 2.0, st_nonbinding_min = 4.0, st_bin_width = 0.5;
  cmd_stats->add_option("--results", st_results, "results file, optionally name=path (repeatable)")
      ->required();
  cmd_stats->add_option("--out-prefix", st_prefix, "output path prefix")->required();
  cmd_stats->add_option("--bin-width", st_bin_width, "histogram bin width (A)");
  cmd_stats->add_option("--seed", st_seed, "seed (accepted for interface uniformity)");
  cmd_stats->add_option("--binding-max", st_binding_max, "binding label cutoff (A)");
  cmd_stats->add_option("--nonbinding-min", st_nonbinding_min, "non-binding label cutoff (A)");

  // --- gradcheck ----------------------------------------------------------------
  auto* cmd_grad = app.add_subcommand("gradcheck", "run all finite-difference suites");
  std::uint64_t g_seed = 0;
  cmd_grad->add_option("--seed", g_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*cmd_raster) {
      const AtomTypeTable table = load_table(r_types);
      const Ligand ligand = load_ligand(r_ligand, table);
      GridSpec spec;
      spec.edge_length = r_edge;
      spec.resolution = r_resolution;
      spec.channel_count = table.size();
      spec.center = r_center.empty() ? centroid(ligand.positions())
                                     : Vec3{r_center[0], r_center[1], r_center[2]};
      Receptor receptor;
      if (!r_receptor.empty()) receptor = load_receptor(r_receptor, table);
      const AtomGrid grid =
          rasterize(receptor, ligand.positions(), ligand.type_indices(), spec, table);
      save_grid(r_out, grid);
      std::cerr << "wrote grid (" << table.size() << " channels, " << spec.points_per_side()
                << "^3 points) to " << r_out << "\n";
    } else if (*cmd_sample) {
      const AtomTypeTable table = load_table(s_types);
      const auto systems = load_targets(s_targets, table);
      const LabelThresholds thresholds{s_binding_max, s_nonbinding_min};
      const auto records =
          generate_random_set(sampling_targets(systems), s_per_target, s_seed, thresholds);
      save_dataset(s_out, records);
      std::cerr << "wrote " << records.size() << " poses (" << systems.size() << " targets x "
                << s_per_target << ") to " << s_out << "\n";
      if (!s_hist.empty()) {
        std::vector<double> rmsds;
        rmsds.reserve(records.size());
        for (const PoseRecord& r : records) rmsds.push_back(r.rmsd_to_crystal);
        write_histogram_csv(s_hist, {{"random", histogram(rmsds, 0.5)}});
        std::cerr << "wrote RMSD histogram to " << s_hist << "\n";
      }
    } else if (*cmd_train) {
      const AtomTypeTable table = load_table(t_types);
      const auto systems = load_targets(t_targets, table);
      const LabelThresholds thresholds{t_binding_max, t_nonbinding_min};
      const auto records = load_dataset(t_dataset, thresholds);
      const auto examples = examples_from_dataset(records, systems);
      GridSpec geometry;
      geometry.edge_length = t_edge;
      geometry.resolution = t_resolution;
      geometry.channel_count = table.size();
      NetworkModel model = make_standard_model(table.size(), geometry.points_per_side());
      initialize_weights(model, mix_seed(t_seed, 1));
      t_cfg.seed = mix_seed(t_seed, 2);
      const TrainResult result = train(model, examples, geometry, table, t_cfg);
      save_model(t_out, model, t_edge, t_resolution);
      if (!t_loss_csv.empty()) write_loss_trace_csv(t_loss_csv, result);
      std::cerr << "trained on " << examples.size() << " examples for "
                << t_cfg.max_iterations << " iterations; model written to " << t_out << "\n";
    } else if (*cmd_opt) {
      const AtomTypeTable table = load_table(o_types);
      const auto systems = load_targets(o_targets, table);
      const LabelThresholds thresholds{o_binding_max, o_nonbinding_min};
      const auto records = load_dataset(o_dataset, thresholds);
      const LoadedModel lm = load_model(o_model, table.size());
      GridSpec geometry;
      geometry.edge_length = lm.edge_length;
      geometry.resolution = lm.resolution;
      geometry.channel_count = table.size();
      const auto results =
          optimize_dataset(lm.model, systems, records, geometry, table, o_bfgs,
                           objective_mode_from_string(o_mode), o_workers);
      save_results(o_out, results);
      std::cerr << "optimized " << results.size() << " poses; results written to " << o_out
                << "\n";
    } else if (*cmd_pipe) {
      if (!p_config.empty()) {
        // File first, then explicit flags override field by field.
        PipelineConfig file_cfg;
        PipelinePaths file_paths;
        parse_pipeline_config(p_config, file_cfg, file_paths);
        auto keep = [&](const std::string& flag) { return cmd_pipe->count(flag) > 0; };
        if (!keep("--seed")) p_cfg.seed = file_cfg.seed;
        if (!keep("--rounds")) p_cfg.rounds = file_cfg.rounds;
        if (!keep("--workers")) p_cfg.workers = file_cfg.workers;
        if (!keep("--edge")) p_cfg.edge_length = file_cfg.edge_length;
        if (!keep("--resolution")) p_cfg.resolution = file_cfg.resolution;
        if (!keep("--iterations")) p_cfg.train.max_iterations = file_cfg.train.max_iterations;
        if (!keep("--batch-size")) p_cfg.train.batch_size = file_cfg.train.batch_size;
        if (!keep("--base-lr")) p_cfg.train.base_lr = file_cfg.train.base_lr;
        if (!keep("--momentum")) p_cfg.train.momentum = file_cfg.train.momentum;
        if (!keep("--gamma")) p_cfg.train.gamma = file_cfg.train.gamma;
        if (!keep("--power")) p_cfg.train.power = file_cfg.train.power;
        if (!keep("--weight-decay")) p_cfg.train.weight_decay = file_cfg.train.weight_decay;
        if (!keep("--augment")) p_cfg.train.augment = file_cfg.train.augment;
        if (!keep("--augment-translation"))
          p_cfg.train.augment_translation = file_cfg.train.augment_translation;
        if (!keep("--bfgs-max-iterations"))
          p_cfg.bfgs.max_iterations = file_cfg.bfgs.max_iterations;
        if (!keep("--bfgs-tolerance"))
          p_cfg.bfgs.improvement_tolerance = file_cfg.bfgs.improvement_tolerance;
        if (!keep("--backtrack-factor"))
          p_cfg.bfgs.backtrack_factor = file_cfg.bfgs.backtrack_factor;
        if (!keep("--sufficient-increase"))
          p_cfg.bfgs.sufficient_increase = file_cfg.bfgs.sufficient_increase;
        if (!keep("--max-backtracks")) p_cfg.bfgs.max_backtracks = file_cfg.bfgs.max_backtracks;
        if (!keep("--binding-max")) p_cfg.labels.binding_max = file_cfg.labels.binding_max;
        if (!keep("--nonbinding-min"))
          p_cfg.labels.nonbinding_min = file_cfg.labels.nonbinding_min;
        if (!keep("--objective")) p_cfg.objective = file_cfg.objective;
        if (!keep("--targets")) p_paths.targets = file_paths.targets;
        if (!keep("--types")) p_paths.types = file_paths.types;
        if (!keep("--training-set")) p_paths.training_set = file_paths.training_set;
        if (!keep("--random-set")) p_paths.random_set = file_paths.random_set;
        if (!keep("--out-dir")) p_paths.out_dir = file_paths.out_dir;
      }
      if (!p_objective.empty()) p_cfg.objective = objective_mode_from_string(p_objective);
      if (p_paths.targets.empty() || p_paths.training_set.empty() ||
          p_paths.random_set.empty() || p_paths.out_dir.empty())
        throw ConfigError(
            "pipeline: targets, training-set, random-set and out-dir are required (config file "
            "or flags)");
      const AtomTypeTable table = load_table(p_paths.types);
      const auto systems = load_targets(p_paths.targets, table);
      const auto training_set = load_dataset(p_paths.training_set, p_cfg.labels);
      const auto random_set = load_dataset(p_paths.random_set, p_cfg.labels);
      const PipelineOutcome outcome =
          run_pipeline(p_cfg, systems, training_set, random_set, table, p_paths.out_dir);
      for (std::size_t i = 0; i < outcome.rounds.size(); ++i) {
        const RoundArtifacts& art = outcome.rounds[i];
        std::cerr << "round " << (i + 1) << ": trained on " << art.training_set_size
                  << " examples";
        const StatRow& all = art.report.rows[0];
        if (all.mean_delta_rmsd)
          std::cerr << "; mean dRMSD " << fmt_double(*all.mean_delta_rmsd) << " over " << all.n
                    << " poses";
        std::cerr << "\n";
      }
      std::cerr << "artifacts written to " << p_paths.out_dir << "\n";
    } else if (*cmd_stats) {
      const LabelThresholds thresholds{st_binding_max, st_nonbinding_min};
      std::vector<MethodResults> sets;
      for (const std::string& arg : st_results) {
        auto [name, path] = split_named_path(arg);
        sets.push_back({name, load_results(path)});
      }
      const ComparisonReport report = compare_methods(sets, thresholds);
      write_report_csv(st_prefix + "report.csv", report.reports);
      write_method_histogram_csv(st_prefix + "hist.csv", sets, st_bin_width);
      write_scatter_csv(st_prefix + "scatter.csv", sets);
      std::cerr << "wrote " << st_prefix << "report.csv, " << st_prefix << "hist.csv, "
                << st_prefix << "scatter.csv\n";
    } else if (*cmd_grad) {
      const auto reports = run_gradient_checks(g_seed);
      bool all_passed = true;
      for (const GradCheckReport& r : reports) {
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << "  max rel err "
                  << fmt_double(r.max_rel_error) << " (tolerance " << fmt_double(r.tolerance)
                  << ", " << r.comparisons << " comparisons)\n";
        all_passed = all_passed && r.passed;
      }
      return all_passed ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
