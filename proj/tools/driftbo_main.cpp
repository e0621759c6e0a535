#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "driftbo/harness.hpp"
#include "driftbo/version.hpp"

namespace fs = std::filesystem;
using namespace driftbo;

namespace {

std::string default_out() {
  if (const char* env = std::getenv("DRIFTBO_OUT")) return env;
  return "out";
}

// A run cell can come from a standalone run config or be selected out of a
// suite file with --task/--variant/--seed.
RunConfig load_run_cell(const std::string& config_path,
                        const std::optional<std::string>& task_name,
                        const std::optional<std::string>& variant_name_opt,
                        const std::optional<std::uint64_t>& seed) {
  RunConfig config;
  bool loaded = false;
  try {
    config = run_config_from_json_file(config_path);
    loaded = true;
  } catch (const std::invalid_argument&) {
    // fall through to the suite reader
  }
  if (!loaded) {
    const ExperimentSuite suite = suite_from_json_file(config_path);
    config = suite.base;
    if (!task_name.has_value() && suite.tasks.size() == 1) {
      config.task = suite.tasks.front();
    } else if (task_name.has_value()) {
      bool found = false;
      for (const TaskConfig& t : suite.tasks) {
        if (t.name == *task_name) {
          config.task = t;
          found = true;
          break;
        }
      }
      if (!found) {
        throw std::invalid_argument("no task named '" + *task_name +
                                    "' in suite " + config_path);
      }
    } else {
      throw std::invalid_argument(
          "suite config has several tasks; pass --task NAME");
    }
    if (suite.variants.size() == 1) config.variant = suite.variants.front();
    if (suite.seeds.size() == 1) config.seed = suite.seeds.front();
  }
  if (variant_name_opt.has_value()) {
    config.variant = parse_variant(*variant_name_opt);
  }
  if (seed.has_value()) config.seed = *seed;
  if (task_name.has_value() && loaded && config.task.name != *task_name) {
    throw std::invalid_argument("config task is '" + config.task.name +
                                "', not '" + *task_name + "'");
  }
  config.latent.alphabet_size = config.task.alphabet_size;
  config.latent.max_length = config.task.max_length;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-aware latent-space Bayesian optimization experiments"};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = default_out();
  std::optional<std::string> task_name;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  int parallel = 1;
  int smooth_window = 1;

  CLI::App* cmd_run = app.add_subcommand("run", "Execute one run");
  cmd_run->add_option("--config", config_path, "Run or suite config (JSON)")
      ->required();
  cmd_run->add_option("--out", out_dir, "Output root directory");
  cmd_run->add_option("--task", task_name, "Task name (suite configs)");
  cmd_run->add_option("--variant", variant, "Variant/baseline name");
  cmd_run->add_option("--seed", seed, "Run seed");

  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "Run the task x variant x seed cross product");
  cmd_sweep->add_option("--config", config_path, "Suite config (JSON)")
      ->required();
  cmd_sweep->add_option("--out", out_dir, "Output root (overrides suite)");
  cmd_sweep->add_option("--parallel", parallel, "Worker threads")
      ->check(CLI::PositiveNumber);

  CLI::App* cmd_aggregate =
      app.add_subcommand("aggregate", "Aggregate finished runs");
  cmd_aggregate->add_option("--out", out_dir,
                            "Run root; aggregate files land in <out>/aggregate");
  cmd_aggregate->add_option("--smooth-window", smooth_window,
                            "Centered moving-average window for curve means")
      ->check(CLI::PositiveNumber);

  CLI::App* cmd_validate =
      app.add_subcommand("validate-config", "Check a config file");
  cmd_validate->add_option("--config", config_path, "Config (JSON)")
      ->required();

  CLI::App* cmd_ref = app.add_subcommand(
      "reference-curves", "Corpus max/quantile curves for a task");
  cmd_ref->add_option("--config", config_path, "Run or suite config (JSON)")
      ->required();
  cmd_ref->add_option("--out", out_dir, "Output directory");
  cmd_ref->add_option("--task", task_name, "Task name (suite configs)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) {
      const RunConfig config =
          load_run_cell(config_path, task_name, variant, seed);
      const std::string cache = (fs::path(out_dir) / "model_cache").string();
      const std::string dir = execute_run(config, out_dir, cache);
      std::cout << "run complete: " << dir << "\n";
      return 0;
    }
    if (cmd_sweep->parsed()) {
      ExperimentSuite suite = suite_from_json_file(config_path);
      if (cmd_sweep->count("--out") > 0 || !std::getenv("DRIFTBO_OUT")) {
        suite.output_dir = out_dir;
      } else {
        suite.output_dir = default_out();
      }
      const std::vector<std::string> dirs = run_sweep(suite, parallel);
      std::cout << "sweep complete: " << dirs.size() << " runs under "
                << suite.output_dir << "\n";
      return 0;
    }
    if (cmd_aggregate->parsed()) {
      const std::vector<RunLog> logs = collect_run_logs(out_dir);
      const AggregateResult aggregate = aggregate_runs(logs, smooth_window);
      const std::string agg_dir = (fs::path(out_dir) / "aggregate").string();
      write_aggregate_csv(agg_dir, aggregate, smooth_window);
      std::cout << "aggregate written to " << agg_dir << "\n";
      return 0;
    }
    if (cmd_validate->parsed()) {
      std::string kind;
      try {
        (void)run_config_from_json_file(config_path);
        kind = "run";
      } catch (const std::invalid_argument&) {
        try {
          (void)suite_from_json_file(config_path);
          kind = "suite";
        } catch (const std::invalid_argument&) {
          (void)task_config_from_json_file(config_path);
          kind = "task";
        }
      }
      std::cout << "valid " << kind << " config: " << config_path << "\n";
      return 0;
    }
    if (cmd_ref->parsed()) {
      const RunConfig config =
          load_run_cell(config_path, task_name, std::nullopt, std::nullopt);
      fs::create_directories(out_dir);
      const std::string path =
          (fs::path(out_dir) /
           ("reference_curves_" + config.task.name + ".csv"))
              .string();
      write_reference_curves_csv(path, config.task,
                                 {0.95, 0.99, 0.999, 0.9999});
      std::cout << "reference curves written to " << path << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
