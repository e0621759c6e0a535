#pragma once

#include <map>
#include <string>
#include <vector>

#include "driftbo/optimizer.hpp"

namespace driftbo {

// Cross product of tasks, variants and seeds plus the shared run settings.
struct ExperimentSuite {
  std::vector<TaskConfig> tasks;
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds;
  RunConfig base;  // task/variant/seed fields are overwritten per cell
  std::string output_dir;

  void validate() const;
};

// Strict JSON loading: unknown keys are hard errors, the schema is versioned.
TaskConfig task_config_from_json_file(const std::string& path);
RunConfig run_config_from_json_file(const std::string& path);
ExperimentSuite suite_from_json_file(const std::string& path);
std::string run_config_to_json(const RunConfig& config);

// Stable hash of the canonical config rendering; recorded in manifests.
std::uint64_t config_hash(const RunConfig& config);

// Executes one run and writes log.csv, manifest.json and config.json into
// out_dir/<task>/<variant>/seed<seed>/. Returns the run directory.
std::string execute_run(const RunConfig& config, const std::string& out_dir,
                        const std::string& model_cache_dir = {});

// Raw per-iteration CSV (UTF-8, header row):
// iteration,baseline,seed,best_per_time,cumulative_regret,instantaneous,
// batch_designs
void write_run_csv(const std::string& path, const RunConfig& config,
                   const RunResult& result, const WeightSchedule& schedule);

// Fans out the suite's cross product across up to `parallelism` worker
// threads; each run is self-contained and deterministic.
std::vector<std::string> run_sweep(const ExperimentSuite& suite,
                                   int parallelism);

struct CurvePoint {
  int iteration = 0;
  double mean = 0.0;
  double std_dev = 0.0;
};

struct AggregateResult {
  // (task, variant) -> per-iteration curves over seeds.
  std::map<std::pair<std::string, std::string>, std::vector<CurvePoint>>
      best_per_time;
  std::map<std::pair<std::string, std::string>, std::vector<CurvePoint>>
      cumulative_regret;
  std::map<std::pair<std::string, std::string>, std::vector<CurvePoint>>
      instantaneous;
  // variant -> (mean rank, half std) over all (task, seed) cells.
  std::map<std::string, std::pair<double, double>> final_ranks;
};

// Parsed raw log rows for one run.
struct RunLog {
  std::string task;
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<int> iterations;
  std::vector<double> best_per_time;
  std::vector<double> cumulative_regret;
  std::vector<double> instantaneous;
};

RunLog read_run_csv(const std::string& path);

// Scans run directories under root (layout produced by execute_run).
std::vector<RunLog> collect_run_logs(const std::string& root);

// Mean +- std curves per (task, variant) and the final rank table
// (mean +- 1/2 std across all task x seed cells). smooth_window > 1 applies
// a centered moving average to the stored means.
AggregateResult aggregate_runs(const std::vector<RunLog>& logs,
                               int smooth_window);

// Final-iteration ranks per (task, seed) from cumulative regret.
std::map<std::string, std::pair<double, double>> aggregate_rank_table(
    const std::vector<RunLog>& logs);

void write_aggregate_csv(const std::string& out_dir,
                         const AggregateResult& aggregate, int smooth_window);

// reference-curves output: per-slice corpus max and upper quantiles.
void write_reference_curves_csv(const std::string& path,
                                const TaskConfig& task,
                                const std::vector<double>& quantiles);

}  // namespace driftbo
