#include "driftbo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "driftbo/stats.hpp"
#include "driftbo/version.hpp"

namespace driftbo {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void config_error(const std::string& context,
                               const std::string& message) {
  throw std::invalid_argument("config error at " + context + ": " + message);
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!j.is_object()) config_error(context, "expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (allowed.find(key) == allowed.end()) {
      config_error(context + "/" + key, "unknown key");
    }
  }
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("config error: cannot open " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Convert the byte offset to a line number for the error message.
    size_t line = 1;
    for (size_t i = 0; i < std::min(e.byte, text.size()); ++i) {
      if (text[i] == '\n') ++line;
    }
    std::ostringstream msg;
    msg << "config error at " << path << ":" << line << ": " << e.what();
    throw std::invalid_argument(msg.str());
  }
}

TaskConfig parse_task(const json& j, const std::string& context) {
  check_keys(j,
             {"name", "alphabet_size", "max_length", "num_components",
              "horizon", "drift_lengthscale_rel", "temperature", "noise_sd",
              "static_schedule", "seed", "corpus_size"},
             context);
  TaskConfig task;
  task.name = j.value("name", task.name);
  task.alphabet_size = j.value("alphabet_size", task.alphabet_size);
  task.max_length = j.value("max_length", task.max_length);
  task.num_components = j.value("num_components", task.num_components);
  task.horizon = j.value("horizon", task.horizon);
  task.drift_lengthscale_rel =
      j.value("drift_lengthscale_rel", task.drift_lengthscale_rel);
  task.temperature = j.value("temperature", task.temperature);
  task.noise_sd = j.value("noise_sd", task.noise_sd);
  task.static_schedule = j.value("static_schedule", task.static_schedule);
  task.seed = j.value("seed", task.seed);
  task.corpus_size = j.value("corpus_size", task.corpus_size);
  task.validate();
  return task;
}

RunConfig parse_run(const json& j, const std::string& context,
                    bool require_task) {
  check_keys(j,
             {"version", "task", "variant", "seed", "batch_size", "n_init",
              "init_window", "improvement_threshold",
              "retrain_failure_tolerance", "latent", "pretrain", "inversion",
              "trust_region", "svgp", "svgp_steps_per_iteration",
              "svgp_minibatch", "svgp_learning_rate", "retrain_steps",
              "retrain_minibatch", "retrain_learning_rate",
              "candidates_per_batch"},
             context);
  RunConfig config;
  if (j.contains("task")) {
    config.task = parse_task(j.at("task"), context + "/task");
  } else if (require_task) {
    config_error(context, "missing required key 'task'");
  }
  if (j.contains("variant")) {
    config.variant = parse_variant(j.at("variant").get<std::string>());
  }
  config.seed = j.value("seed", config.seed);
  config.batch_size = j.value("batch_size", config.batch_size);
  config.n_init = j.value("n_init", config.n_init);
  config.init_window = j.value("init_window", config.init_window);
  config.improvement_threshold =
      j.value("improvement_threshold", config.improvement_threshold);
  config.retrain_failure_tolerance = j.value(
      "retrain_failure_tolerance", config.retrain_failure_tolerance);
  if (j.contains("latent")) {
    const json& l = j.at("latent");
    check_keys(l,
               {"latent_dim", "num_features", "domain_half_width",
                "decoder_hidden", "decoder_embed", "eos_token",
                "descriptor_count"},
               context + "/latent");
    config.latent.latent_dim = l.value("latent_dim", config.latent.latent_dim);
    config.latent.num_features =
        l.value("num_features", config.latent.num_features);
    config.latent.domain_half_width =
        l.value("domain_half_width", config.latent.domain_half_width);
    config.latent.decoder_hidden =
        l.value("decoder_hidden", config.latent.decoder_hidden);
    config.latent.decoder_embed =
        l.value("decoder_embed", config.latent.decoder_embed);
    config.latent.eos_token = l.value("eos_token", config.latent.eos_token);
    config.latent.descriptor_count =
        l.value("descriptor_count", config.latent.descriptor_count);
  }
  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    check_keys(p,
               {"steps", "minibatch", "learning_rate", "mc_samples",
                "kl_scale", "scale_anchor_weight"},
               context + "/pretrain");
    config.pretrain.steps = p.value("steps", config.pretrain.steps);
    config.pretrain.minibatch = p.value("minibatch", config.pretrain.minibatch);
    config.pretrain.learning_rate =
        p.value("learning_rate", config.pretrain.learning_rate);
    config.pretrain.mc_samples =
        p.value("mc_samples", config.pretrain.mc_samples);
    config.pretrain.kl_scale = p.value("kl_scale", config.pretrain.kl_scale);
    config.pretrain.scale_anchor_weight =
        p.value("scale_anchor_weight", config.pretrain.scale_anchor_weight);
  }
  if (j.contains("inversion")) {
    const json& iv = j.at("inversion");
    check_keys(iv, {"step_size", "max_steps", "distance_tolerance"},
               context + "/inversion");
    config.inversion.step_size =
        iv.value("step_size", config.inversion.step_size);
    config.inversion.max_steps =
        iv.value("max_steps", config.inversion.max_steps);
    config.inversion.distance_tolerance =
        iv.value("distance_tolerance", config.inversion.distance_tolerance);
  }
  if (j.contains("trust_region")) {
    const json& tr = j.at("trust_region");
    check_keys(tr,
               {"length_init", "length_min", "length_max",
                "success_tolerance", "failure_tolerance"},
               context + "/trust_region");
    config.trust_region.length_init =
        tr.value("length_init", config.trust_region.length_init);
    config.trust_region.length_min =
        tr.value("length_min", config.trust_region.length_min);
    config.trust_region.length_max =
        tr.value("length_max", config.trust_region.length_max);
    config.trust_region.success_tolerance =
        tr.value("success_tolerance", config.trust_region.success_tolerance);
    config.trust_region.failure_tolerance =
        tr.value("failure_tolerance", 0);
  } else {
    config.trust_region.failure_tolerance = 0;  // derive from d and B
  }
  if (j.contains("svgp")) {
    const json& s = j.at("svgp");
    check_keys(s,
               {"num_inducing", "feature_hidden", "feature_out",
                "init_noise_variance", "init_spatial_lengthscale",
                "init_temporal_lengthscale"},
               context + "/svgp");
    config.svgp.num_inducing = s.value("num_inducing", config.svgp.num_inducing);
    config.svgp.feature_hidden =
        s.value("feature_hidden", config.svgp.feature_hidden);
    config.svgp.feature_out = s.value("feature_out", config.svgp.feature_out);
    config.svgp.init_noise_variance =
        s.value("init_noise_variance", config.svgp.init_noise_variance);
    config.svgp.init_spatial_lengthscale = s.value(
        "init_spatial_lengthscale", config.svgp.init_spatial_lengthscale);
    config.svgp.init_temporal_lengthscale = s.value(
        "init_temporal_lengthscale", config.svgp.init_temporal_lengthscale);
  }
  config.svgp_steps_per_iteration =
      j.value("svgp_steps_per_iteration", config.svgp_steps_per_iteration);
  config.svgp_minibatch = j.value("svgp_minibatch", config.svgp_minibatch);
  config.svgp_learning_rate =
      j.value("svgp_learning_rate", config.svgp_learning_rate);
  config.retrain_steps = j.value("retrain_steps", config.retrain_steps);
  config.retrain_minibatch =
      j.value("retrain_minibatch", config.retrain_minibatch);
  config.retrain_learning_rate =
      j.value("retrain_learning_rate", config.retrain_learning_rate);
  config.candidates_per_batch =
      j.value("candidates_per_batch", config.candidates_per_batch);
  config.latent.alphabet_size = config.task.alphabet_size;
  config.latent.max_length = config.task.max_length;
  return config;
}

json task_to_json(const TaskConfig& t) {
  return json{{"name", t.name},
              {"alphabet_size", t.alphabet_size},
              {"max_length", t.max_length},
              {"num_components", t.num_components},
              {"horizon", t.horizon},
              {"drift_lengthscale_rel", t.drift_lengthscale_rel},
              {"temperature", t.temperature},
              {"noise_sd", t.noise_sd},
              {"static_schedule", t.static_schedule},
              {"seed", t.seed},
              {"corpus_size", t.corpus_size}};
}

json run_to_json(const RunConfig& c) {
  return json{
      {"version", 1},
      {"task", task_to_json(c.task)},
      {"variant", variant_name(c.variant)},
      {"seed", c.seed},
      {"batch_size", c.batch_size},
      {"n_init", c.n_init},
      {"init_window", c.init_window},
      {"improvement_threshold", c.improvement_threshold},
      {"retrain_failure_tolerance", c.retrain_failure_tolerance},
      {"latent",
       {{"latent_dim", c.latent.latent_dim},
        {"num_features", c.latent.num_features},
        {"domain_half_width", c.latent.domain_half_width},
        {"decoder_hidden", c.latent.decoder_hidden},
        {"decoder_embed", c.latent.decoder_embed},
        {"eos_token", c.latent.eos_token},
        {"descriptor_count", c.latent.descriptor_count}}},
      {"pretrain",
       {{"steps", c.pretrain.steps},
        {"minibatch", c.pretrain.minibatch},
        {"learning_rate", c.pretrain.learning_rate},
        {"mc_samples", c.pretrain.mc_samples},
        {"kl_scale", c.pretrain.kl_scale},
        {"scale_anchor_weight", c.pretrain.scale_anchor_weight}}},
      {"inversion",
       {{"step_size", c.inversion.step_size},
        {"max_steps", c.inversion.max_steps},
        {"distance_tolerance", c.inversion.distance_tolerance}}},
      {"trust_region",
       {{"length_init", c.trust_region.length_init},
        {"length_min", c.trust_region.length_min},
        {"length_max", c.trust_region.length_max},
        {"success_tolerance", c.trust_region.success_tolerance},
        {"failure_tolerance", c.trust_region.failure_tolerance}}},
      {"svgp",
       {{"num_inducing", c.svgp.num_inducing},
        {"feature_hidden", c.svgp.feature_hidden},
        {"feature_out", c.svgp.feature_out},
        {"init_noise_variance", c.svgp.init_noise_variance},
        {"init_spatial_lengthscale", c.svgp.init_spatial_lengthscale},
        {"init_temporal_lengthscale", c.svgp.init_temporal_lengthscale}}},
      {"svgp_steps_per_iteration", c.svgp_steps_per_iteration},
      {"svgp_minibatch", c.svgp_minibatch},
      {"svgp_learning_rate", c.svgp_learning_rate},
      {"retrain_steps", c.retrain_steps},
      {"retrain_minibatch", c.retrain_minibatch},
      {"retrain_learning_rate", c.retrain_learning_rate},
      {"candidates_per_batch", c.candidates_per_batch}};
}

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

}  // namespace

void ExperimentSuite::validate() const {
  if (tasks.empty() || variants.empty() || seeds.empty()) {
    throw std::invalid_argument(
        "ExperimentSuite: tasks, variants and seeds must be non-empty");
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("ExperimentSuite: output_dir required");
  }
}

TaskConfig task_config_from_json_file(const std::string& path) {
  return parse_task(parse_file(path), path);
}

RunConfig run_config_from_json_file(const std::string& path) {
  const json j = parse_file(path);
  if (j.value("version", 0) != 1) {
    config_error(path, "missing or unsupported config version (expect 1)");
  }
  return parse_run(j, path, /*require_task=*/true);
}

ExperimentSuite suite_from_json_file(const std::string& path) {
  const json j = parse_file(path);
  check_keys(j, {"version", "tasks", "variants", "seeds", "run", "output_dir"},
             path);
  if (j.value("version", 0) != 1) {
    config_error(path, "missing or unsupported config version (expect 1)");
  }
  ExperimentSuite suite;
  if (!j.contains("tasks") || !j.at("tasks").is_array()) {
    config_error(path, "'tasks' must be an array");
  }
  for (size_t i = 0; i < j.at("tasks").size(); ++i) {
    suite.tasks.push_back(parse_task(
        j.at("tasks").at(i), path + "/tasks[" + std::to_string(i) + "]"));
  }
  if (!j.contains("variants") || !j.at("variants").is_array()) {
    config_error(path, "'variants' must be an array");
  }
  for (const auto& v : j.at("variants")) {
    suite.variants.push_back(parse_variant(v.get<std::string>()));
  }
  if (!j.contains("seeds") || !j.at("seeds").is_array()) {
    config_error(path, "'seeds' must be an array");
  }
  for (const auto& s : j.at("seeds")) {
    suite.seeds.push_back(s.get<std::uint64_t>());
  }
  if (j.contains("run")) {
    suite.base = parse_run(j.at("run"), path + "/run", /*require_task=*/false);
  }
  suite.output_dir = j.value("output_dir", std::string("out"));
  suite.validate();
  return suite;
}

std::string run_config_to_json(const RunConfig& config) {
  return run_to_json(config).dump(1);
}

std::uint64_t config_hash(const RunConfig& config) {
  const std::string text = run_config_to_json(config);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_run_csv(const std::string& path, const RunConfig& config,
                   const RunResult& result, const WeightSchedule& schedule) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_run_csv: cannot open " + path);
  out << "iteration,baseline,seed,best_per_time,cumulative_regret,"
         "instantaneous,batch_designs\n";
  const std::string baseline = variant_name(config.variant);
  double running_regret = 0.0;
  for (int t = 1; t <= config.task.horizon; ++t) {
    const double bpt = best_per_time(result.log, t, schedule);
    running_regret += 1.0 - bpt;
    double inst = -std::numeric_limits<double>::infinity();
    std::string designs;
    for (const ObservationEntry& e : result.log.entries()) {
      if (e.iteration != t) continue;
      inst = std::max(inst, rescore_entry(e, t, schedule));
      if (!designs.empty()) designs += '|';
      designs += format_design(e.design);
    }
    out << t << ',' << baseline << ',' << config.seed << ','
        << format_double(bpt) << ',' << format_double(running_regret) << ','
        << format_double(inst) << ',' << designs << '\n';
  }
}

std::string execute_run(const RunConfig& config, const std::string& out_dir,
                        const std::string& model_cache_dir) {
  config.validate();
  const fs::path run_dir = fs::path(out_dir) / config.task.name /
                           variant_name(config.variant) /
                           ("seed" + std::to_string(config.seed));
  fs::create_directories(run_dir);

  RunOptions options;
  options.model_cache_dir = model_cache_dir;
  options.model_save_path = (run_dir / "model.json").string();

  RunResult result;
  bool failed = false;
  std::string failure;
  try {
    result = run_experiment(config, options);
  } catch (const std::exception& e) {
    failed = true;
    failure = e.what();
  }
  const WeightSchedule schedule = build_schedule(config.task);
  if (!failed) {
    write_run_csv((run_dir / "log.csv").string(), config, result, schedule);
  } else if (!result.log.empty()) {
    // Partial flush: whatever iterations completed.
    try {
      write_run_csv((run_dir / "log.partial.csv").string(), config, result,
                    schedule);
    } catch (...) {
    }
  }

  json manifest;
  std::ostringstream hash_hex;
  hash_hex << std::hex << config_hash(config);
  manifest["config_hash"] = hash_hex.str();
  manifest["seed"] = config.seed;
  manifest["task"] = config.task.name;
  manifest["variant"] = variant_name(config.variant);
  manifest["version"] = kVersionString;
  manifest["wall_clock_seconds"] = result.wall_seconds;
  manifest["oracle_calls"] = result.oracle_calls;
  manifest["retrain_count"] = result.retrain_count;
  manifest["restart_count"] = result.restart_count;
  manifest["inversion_warnings"] = result.inversion_warnings;
  if (failed) manifest["error"] = failure;
  json timings = json::array();
  for (const IterationStats& s : result.iterations) {
    timings.push_back(s.wall_ms);
  }
  manifest["iteration_wall_ms"] = std::move(timings);
  json tr;
  tr["length"] = result.final_trust_region.length;
  tr["success_count"] = result.final_trust_region.success_count;
  tr["failure_count"] = result.final_trust_region.failure_count;
  tr["best_value"] = result.final_trust_region.best_value;
  tr["restart_pending"] = result.final_trust_region.restart_pending;
  json center = json::array();
  for (Eigen::Index i = 0; i < result.final_trust_region.center.size(); ++i) {
    center.push_back(result.final_trust_region.center(i));
  }
  tr["center"] = std::move(center);
  manifest["trust_region"] = std::move(tr);

  std::ofstream mf(run_dir / "manifest.json");
  mf << manifest.dump(1) << "\n";
  std::ofstream cf(run_dir / "config.json");
  cf << run_config_to_json(config) << "\n";

  if (failed) {
    throw std::runtime_error("execute_run: " + failure +
                             " (partial results in " + run_dir.string() + ")");
  }
  return run_dir.string();
}

std::vector<std::string> run_sweep(const ExperimentSuite& suite,
                                   int parallelism) {
  suite.validate();
  struct Cell {
    RunConfig config;
  };
  std::vector<Cell> cells;
  for (const TaskConfig& task : suite.tasks) {
    for (Variant variant : suite.variants) {
      for (std::uint64_t seed : suite.seeds) {
        RunConfig config = suite.base;
        config.task = task;
        config.variant = variant;
        config.seed = seed;
        config.latent.alphabet_size = task.alphabet_size;
        config.latent.max_length = task.max_length;
        cells.push_back({std::move(config)});
      }
    }
  }
  const std::string cache_dir =
      (fs::path(suite.output_dir) / "model_cache").string();
  std::vector<std::string> run_dirs(cells.size());
  std::vector<std::string> failures;
  std::mutex failures_mutex;
  std::atomic<size_t> next{0};
  const int workers = std::max(1, std::min<int>(parallelism,
                                                static_cast<int>(cells.size())));
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) break;
      try {
        run_dirs[i] =
            execute_run(cells[i].config, suite.output_dir, cache_dir);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failures_mutex);
        failures.emplace_back(e.what());
      }
    }
  };
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (std::thread& th : threads) th.join();
  if (!failures.empty()) {
    std::ostringstream msg;
    msg << "run_sweep: " << failures.size() << " run(s) failed:";
    for (const std::string& f : failures) msg << "\n  " << f;
    throw std::runtime_error(msg.str());
  }
  return run_dirs;
}

RunLog read_run_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_run_csv: cannot open " + path);
  RunLog log;
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("read_run_csv: empty file " + path);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() < 7) {
      throw std::runtime_error("read_run_csv: malformed row in " + path);
    }
    log.iterations.push_back(std::stoi(fields[0]));
    log.variant = fields[1];
    log.seed = std::stoull(fields[2]);
    log.best_per_time.push_back(std::stod(fields[3]));
    log.cumulative_regret.push_back(std::stod(fields[4]));
    log.instantaneous.push_back(std::stod(fields[5]));
  }
  return log;
}

std::vector<RunLog> collect_run_logs(const std::string& root) {
  std::vector<RunLog> logs;
  if (!fs::exists(root)) {
    throw std::invalid_argument("collect_run_logs: no such directory " + root);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "log.csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& p : files) {
    RunLog log = read_run_csv(p.string());
    // Layout: root/<task>/<variant>/seed<k>/log.csv
    log.task = p.parent_path().parent_path().parent_path().filename().string();
    logs.push_back(std::move(log));
  }
  return logs;
}

namespace {

std::vector<CurvePoint> curves_over_seeds(
    const std::vector<const RunLog*>& group,
    const std::vector<double> RunLog::*field, int smooth_window) {
  const size_t len = (group.front()->*field).size();
  for (const RunLog* log : group) {
    if ((log->*field).size() != len) {
      throw std::runtime_error("aggregate: runs have different horizons");
    }
  }
  std::vector<CurvePoint> curve(len);
  for (size_t i = 0; i < len; ++i) {
    std::vector<double> sample;
    sample.reserve(group.size());
    for (const RunLog* log : group) sample.push_back((log->*field)[i]);
    curve[i].iteration = group.front()->iterations[i];
    curve[i].mean = sample_mean(sample);
    curve[i].std_dev = sample_std(sample);
  }
  if (smooth_window > 1) {
    const int half = smooth_window / 2;
    std::vector<double> smoothed(len);
    for (int i = 0; i < static_cast<int>(len); ++i) {
      double acc = 0.0;
      int count = 0;
      for (int j = std::max(0, i - half);
           j <= std::min(static_cast<int>(len) - 1, i + half); ++j) {
        acc += curve[static_cast<size_t>(j)].mean;
        ++count;
      }
      smoothed[static_cast<size_t>(i)] = acc / count;
    }
    for (size_t i = 0; i < len; ++i) curve[i].mean = smoothed[i];
  }
  return curve;
}

}  // namespace

std::map<std::string, std::pair<double, double>> aggregate_rank_table(
    const std::vector<RunLog>& logs) {
  // (task, seed) -> variant -> final regret.
  std::map<std::pair<std::string, std::uint64_t>,
           std::map<std::string, double>>
      cells;
  std::set<std::string> variants;
  for (const RunLog& log : logs) {
    if (log.cumulative_regret.empty()) {
      throw std::runtime_error("aggregate_rank_table: empty log");
    }
    cells[{log.task, log.seed}][log.variant] = log.cumulative_regret.back();
    variants.insert(log.variant);
  }
  std::map<std::string, std::vector<double>> rank_samples;
  for (const auto& [cell, by_variant] : cells) {
    for (const std::string& v : variants) {
      if (by_variant.find(v) == by_variant.end()) {
        std::ostringstream msg;
        msg << "aggregate_rank_table: missing cell task=" << cell.first
            << " seed=" << cell.second << " variant=" << v;
        throw std::runtime_error(msg.str());
      }
    }
    std::map<std::string, Eigen::VectorXd> regrets;
    for (const auto& [variant, regret] : by_variant) {
      regrets[variant] = Eigen::VectorXd::Constant(1, regret);
    }
    for (const auto& [variant, rank] : rank_baselines(regrets, 1)) {
      rank_samples[variant].push_back(rank);
    }
  }
  std::map<std::string, std::pair<double, double>> out;
  for (const auto& [variant, samples] : rank_samples) {
    out[variant] = {sample_mean(samples), 0.5 * sample_std(samples)};
  }
  return out;
}

AggregateResult aggregate_runs(const std::vector<RunLog>& logs,
                               int smooth_window) {
  if (logs.empty()) {
    throw std::invalid_argument("aggregate_runs: no logs");
  }
  std::map<std::pair<std::string, std::string>, std::vector<const RunLog*>>
      groups;
  for (const RunLog& log : logs) groups[{log.task, log.variant}].push_back(&log);
  AggregateResult out;
  for (const auto& [key, group] : groups) {
    out.best_per_time[key] =
        curves_over_seeds(group, &RunLog::best_per_time, smooth_window);
    out.cumulative_regret[key] =
        curves_over_seeds(group, &RunLog::cumulative_regret, smooth_window);
    out.instantaneous[key] =
        curves_over_seeds(group, &RunLog::instantaneous, smooth_window);
  }
  out.final_ranks = aggregate_rank_table(logs);
  return out;
}

void write_aggregate_csv(const std::string& out_dir,
                         const AggregateResult& aggregate, int smooth_window) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "curves.csv", std::ios::binary);
    out << "task,variant,iteration,best_per_time_mean,best_per_time_std,"
           "cumulative_regret_mean,cumulative_regret_std,"
           "instantaneous_mean,instantaneous_std\n";
    for (const auto& [key, best] : aggregate.best_per_time) {
      const auto& regret = aggregate.cumulative_regret.at(key);
      const auto& inst = aggregate.instantaneous.at(key);
      for (size_t i = 0; i < best.size(); ++i) {
        out << key.first << ',' << key.second << ',' << best[i].iteration
            << ',' << format_double(best[i].mean) << ','
            << format_double(best[i].std_dev) << ','
            << format_double(regret[i].mean) << ','
            << format_double(regret[i].std_dev) << ','
            << format_double(inst[i].mean) << ','
            << format_double(inst[i].std_dev) << '\n';
      }
    }
  }
  {
    std::ofstream out(fs::path(out_dir) / "ranks.csv", std::ios::binary);
    out << "baseline,mean_final_rank,half_std\n";
    for (const auto& [variant, stats] : aggregate.final_ranks) {
      out << variant << ',' << format_double(stats.first) << ','
          << format_double(stats.second) << '\n';
    }
  }
  {
    json meta;
    meta["smooth_window"] = smooth_window;
    std::ofstream out(fs::path(out_dir) / "aggregate_meta.json");
    out << meta.dump(1) << "\n";
  }
}

void write_reference_curves_csv(const std::string& path,
                                const TaskConfig& task,
                                const std::vector<double>& quantiles) {
  const std::vector<DesignSequence> references = draw_references(task);
  const std::vector<DesignSequence> corpus = build_corpus(task, references);
  const WeightSchedule schedule = build_schedule(task);
  PropertyScorer scorer{references};
  const ReferenceCurves curves =
      corpus_reference_curves(corpus, schedule, scorer, quantiles);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("write_reference_curves_csv: cannot open " +
                             path);
  }
  out << "iteration,max";
  for (double q : quantiles) out << ",q" << q;
  out << "\n";
  for (int t = 1; t <= schedule.horizon(); ++t) {
    out << t << ',' << format_double(curves.max_curve(t - 1));
    for (Eigen::Index c = 0; c < curves.quantile_curves.cols(); ++c) {
      out << ',' << format_double(curves.quantile_curves(t - 1, c));
    }
    out << '\n';
  }
}

}  // namespace driftbo
