#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "driftbo/alignment.hpp"
#include "driftbo/gp_surrogate.hpp"
#include "driftbo/latent_model.hpp"
#include "driftbo/objective.hpp"
#include "driftbo/trust_region.hpp"

namespace driftbo {

enum class Variant {
  kFull,
  kNoTime,
  kSurrogateOnly,
  kRepresentationOnly,
  kLsboPlain,
  kLsboTurbo,
  kRandom,
};

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);
std::vector<Variant> all_variants();

// Wiring differences between variants; everything else is shared.
struct VariantWiring {
  bool time_in_representation = false;
  bool time_in_surrogate = false;
  bool use_trust_region = false;
  bool use_surrogate = false;
  bool use_retrain = false;
  bool use_inversion = false;

  bool uses_any_time() const {
    return time_in_representation || time_in_surrogate;
  }
};

VariantWiring wiring_for(Variant v);

struct RunConfig {
  TaskConfig task;
  Variant variant = Variant::kFull;
  std::uint64_t seed = 0;

  int batch_size = 10;                  // B
  int n_init = 100;
  int init_window = 50;                 // initial evaluations spread over
                                        // the first min(window, T) slices
  double improvement_threshold = 1e-3;  // delta
  int retrain_failure_tolerance = 10;   // N_fail before a representation
                                        // update

  LatentModelConfig latent;       // time_covariate is set from the wiring
  PretrainConfig pretrain;
  InversionConfig inversion;
  TrustRegionConfig trust_region;  // failure_tolerance <= 0: derive
                                   // ceil(max(4, d) / B)
  SVGPConfig svgp;                 // use_time is set from the wiring

  int svgp_steps_per_iteration = 10;
  int svgp_minibatch = 128;
  double svgp_learning_rate = 0.01;
  int retrain_steps = 100;
  int retrain_minibatch = 64;
  double retrain_learning_rate = 1e-3;
  int candidates_per_batch = 512;

  VariantWiring wiring() const { return wiring_for(variant); }
  void validate() const;
};

// One evaluated design with everything the loop needs to re-embed it.
struct RichRecord {
  DesignSequence design;
  LatentCode latent;
  int iteration = 0;   // 0 for the pre-loop initial set
  int time_slot = 1;   // slice that valued the observation, in [1, T]
  double time01 = 0.0; // normalized time used for covariates and surrogate
  double observed_value = 0.0;
};

struct IterationStats {
  int iteration = 0;
  double batch_best_observed = 0.0;
  bool retrained = false;
  bool trust_region_restarted = false;
  double wall_ms = 0.0;
};

struct RunResult {
  ObservationLog log;
  long oracle_calls = 0;
  int retrain_count = 0;
  int restart_count = 0;
  int inversion_warnings = 0;
  std::vector<IterationStats> iterations;
  TrustRegionState final_trust_region;
  double wall_seconds = 0.0;
};

struct RunOptions {
  // When set, pretrained models are cached here keyed by the task identity
  // and model configuration; runs sharing a cache produce identical bytes to
  // uncached runs.
  std::string model_cache_dir;
  // When set, the latent model checkpoint is written here after pretraining.
  std::string model_save_path;
  // When set, skips pretraining and loads this checkpoint instead.
  std::string preloaded_model_path;
};

// Covariate embedding followed by inversion refinement. Falls back to the
// raw posterior-mean embedding when inversion aborts; increments
// *warning_count in that case.
LatentCode embed_and_align(const DesignSequence& x, std::optional<double> time01,
                           LatentModel& model,
                           const InversionConfig& inversion, bool use_inversion,
                           int* warning_count = nullptr);

// Executes the full loop for one (task, variant, seed) triple.
class ExperimentRunner {
 public:
  ExperimentRunner(RunConfig config, RunOptions options = {});

  RunResult run();

  // Pieces exposed for tests.
  const RunConfig& config() const { return config_; }
  const LatentModel& model() const { return *model_; }
  const SpatioTemporalSVGP& surrogate() const { return *surrogate_; }
  const std::vector<RichRecord>& rich_records() const { return rich_; }

 private:
  void prepare();
  void build_initial_set();
  SurrogateDataset dataset_view() const;
  Eigen::MatrixXd candidate_points(int t, Rng& rng) const;
  std::vector<Eigen::VectorXd> select_batch(int t, Rng& rng);
  void run_iteration(int t);
  void maybe_retrain(int t);
  void retrain_representation(int t);
  void reembed_all();
  int incumbent_index() const;          // best raw observed value
  int rescored_incumbent_index(int t) const;
  Eigen::MatrixXd latent_bounding_box() const;  // 2 x d: rows lower, upper

  RunConfig config_;
  RunOptions options_;
  VariantWiring wiring_;
  Rng root_;

  std::vector<DesignSequence> references_;
  std::vector<DesignSequence> corpus_;
  std::unique_ptr<ObjectiveOracle> oracle_;
  std::unique_ptr<LatentModel> model_;
  std::unique_ptr<SpatioTemporalSVGP> surrogate_;
  std::vector<RichRecord> rich_;
  TrustRegionState trust_region_;
  double optimizer_best_ = 0.0;  // incumbent for the retrain trigger
  int retrain_failures_ = 0;
  RunResult result_;
};

RunResult run_experiment(const RunConfig& config, const RunOptions& options = {});

}  // namespace driftbo
