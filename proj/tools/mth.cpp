// mth: multi-task stacked-hourglass toolkit for human analysis.
// Subcommands: train, evaluate, sweep, curves, improve, validate-data,
// gen-synthetic. Exit codes: 0 success, 2 configuration error, 3 runtime
// failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "mth/cli/commands.hpp"

namespace {

struct CommonOpts {
  std::string tasks;
  std::string config_file;
  std::string preset;
  std::optional<uint64_t> seed;
  std::string out;
  std::string dataset;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_tasks = true) {
  if (with_tasks)
    cmd->add_option("--tasks", opts.tasks,
                    "task set(s), e.g. 2d+seg+depth (comma-separated for sweep)");
  cmd->add_option("--config", opts.config_file, "config file (key=value sections)");
  cmd->add_option("--preset", opts.preset, "desk or paper");
  cmd->add_option("--seed", opts.seed, "base seed");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--dataset", opts.dataset,
                  "\"synthetic\" or a dataset root directory");
  cmd->add_option("--jobs", opts.jobs, "parallel jobs (sweep)");
}

// precedence: preset < config file < explicit flags
mth::ExperimentConfig resolve(const CommonOpts& opts) {
  mth::ExperimentConfig cfg;
  if (!opts.preset.empty()) mth::apply_preset(cfg, opts.preset);
  if (!opts.config_file.empty()) mth::load_config_file(cfg, opts.config_file);
  if (!opts.tasks.empty()) cfg.task_sets = mth::detail::parse_task_set_list(opts.tasks);
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.out.empty()) cfg.out = opts.out;
  if (!opts.dataset.empty()) {
    if (opts.dataset == "synthetic") {
      cfg.dataset.kind = "synthetic";
    } else {
      cfg.dataset.kind = "surreal-format";
      cfg.dataset.root = opts.dataset;
    }
  }
  if (opts.jobs) cfg.jobs = *opts.jobs;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task stacked-hourglass toolkit (2d pose, body parts, "
               "depth, 3d pose)"};
  app.require_subcommand(1);

  CommonOpts train_opts, eval_opts, sweep_opts, curves_opts, improve_opts,
      validate_opts, gen_opts;

  auto* train_cmd = app.add_subcommand("train", "train one task set and evaluate it");
  add_common(train_cmd, train_opts);

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  std::string checkpoint;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  add_common(eval_cmd, eval_opts, false);

  auto* sweep_cmd = app.add_subcommand("sweep", "train several task sets and emit comparison tables");
  std::string combos_for;
  sweep_cmd->add_option("--paper-combos", combos_for,
                        "shorthand: all 8 combos containing this task (2d|seg|depth|3d)");
  add_common(sweep_cmd, sweep_opts);

  auto* curves_cmd = app.add_subcommand("curves", "success-rate curves from two runs");
  std::string baseline_dir, candidate_dir, part;
  curves_cmd->add_option("--baseline", baseline_dir, "baseline run directory")->required();
  curves_cmd->add_option("--candidate", candidate_dir, "candidate run directory")->required();
  curves_cmd->add_option("--part", part, "part/joint for the per-part series");
  add_common(curves_cmd, curves_opts, false);

  auto* improve_cmd = app.add_subcommand("improve", "per-part improvement map between two reports");
  std::string base_json, cand_json;
  improve_cmd->add_option("--baseline", base_json, "baseline report.json")->required();
  improve_cmd->add_option("--candidate", cand_json, "candidate report.json")->required();
  add_common(improve_cmd, improve_opts, false);

  auto* validate_cmd = app.add_subcommand("validate-data", "modal-consistency validation pass");
  int validate_n = 1000;
  validate_cmd->add_option("--n", validate_n, "synthetic sample count");
  add_common(validate_cmd, validate_opts, false);

  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write synthetic samples in the dataset layout");
  int gen_n = 100;
  gen_cmd->add_option("--n", gen_n, "sample count");
  add_common(gen_cmd, gen_opts, false);

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return mth::cli::cmd_train(resolve(train_opts));
    if (eval_cmd->parsed()) return mth::cli::cmd_evaluate(resolve(eval_opts), checkpoint);
    if (sweep_cmd->parsed()) {
      mth::ExperimentConfig cfg = resolve(sweep_opts);
      if (!combos_for.empty()) {
        mth::TaskSet probe = mth::TaskSet::parse(combos_for);
        if (probe.size() != 1)
          throw mth::ConfigError("--paper-combos expects a single task token");
        cfg.task_sets = mth::cli::paper_combos(probe.list()[0]);
      }
      return mth::cli::cmd_sweep(cfg);
    }
    if (curves_cmd->parsed())
      return mth::cli::cmd_curves(resolve(curves_opts), baseline_dir, candidate_dir, part);
    if (improve_cmd->parsed())
      return mth::cli::cmd_improve(resolve(improve_opts), base_json, cand_json);
    if (validate_cmd->parsed())
      return mth::cli::cmd_validate_data(resolve(validate_opts), validate_n);
    if (gen_cmd->parsed()) return mth::cli::cmd_gen_synthetic(resolve(gen_opts), gen_n);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mth::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
