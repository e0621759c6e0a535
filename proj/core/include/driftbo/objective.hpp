#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "driftbo/design.hpp"
#include "driftbo/rng.hpp"

namespace driftbo {

// Time-indexed simplex weights defining the drifting scalarized objective.
struct WeightSchedule {
  Eigen::MatrixXd alphas;   // T x K, rows on the simplex
  Eigen::MatrixXd latents;  // T x K latent GP draws behind the softmax
  double temperature = 1.0;
  double temporal_lengthscale_rel = 0.2;
  std::uint64_t seed = 0;

  int horizon() const { return static_cast<int>(alphas.rows()); }
  int components() const { return static_cast<int>(alphas.cols()); }
  void validate() const;  // rows sum to 1 within 1e-12, entries in (0, 1)
};

// Softmax with temperature applied row-wise to latent paths.
Eigen::MatrixXd schedule_from_latents(const Eigen::MatrixXd& latents,
                                      double temperature);

// K independent zero-mean GP paths on the grid t = 1..T with an SE kernel of
// lengthscale lengthscale_rel * T, pushed through the softmax. Deterministic
// given the seed.
WeightSchedule generate_weight_schedule(int horizon, int num_components,
                                        double lengthscale_rel,
                                        double temperature,
                                        std::uint64_t seed);

// Constant schedule (uniform 1/K rows); the static-objective regime.
WeightSchedule generate_constant_schedule(int horizon, int num_components);

// K reference sequences; similarity of a design to each reference defines the
// base property scores.
struct PropertyScorer {
  std::vector<DesignSequence> references;

  int components() const { return static_cast<int>(references.size()); }
  void validate() const;  // K >= 2, references distinct
};

// s_k = 1 - design_distance(x, r_k), all in [0, 1].
Eigen::VectorXd score_components(const DesignSequence& x,
                                 const PropertyScorer& scorer);

// f_t(x) = alpha_t . s(x) + noise. Slices are 1-based; t outside [1, T]
// throws std::out_of_range.
double evaluate_objective(const DesignSequence& x, int t,
                          const WeightSchedule& schedule,
                          const PropertyScorer& scorer, double noise_sd,
                          Rng& rng);

struct ObservationEntry {
  DesignSequence design;
  int iteration = 0;  // 0 marks the pre-loop initial set
  Eigen::VectorXd component_scores;
  double observed_value = 0.0;
};

// Append-only log; iterations must be non-decreasing in insertion order.
class ObservationLog {
 public:
  void append(ObservationEntry entry);
  const std::vector<ObservationEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  int max_iteration() const;

 private:
  std::vector<ObservationEntry> entries_;
};

// Noiseless re-scoring of a logged design under slice t using its cached
// component scores (no oracle calls).
double rescore_entry(const ObservationEntry& entry, int t,
                     const WeightSchedule& schedule);

// Max over all entries with iteration <= t of the re-scored value at t.
double best_per_time(const ObservationLog& log, int t,
                     const WeightSchedule& schedule);

// R[t] = sum_{tau <= t} (1 - best_per_time(tau)) for t = 1..horizon. Every
// iteration in 1..horizon must be present in the log.
Eigen::VectorXd cumulative_regret(const ObservationLog& log,
                                  const WeightSchedule& schedule, int horizon);

// Best noiseless value among each iteration's own batch, t = 1..horizon
// (horizon = the log's max iteration); all iterations must be present.
Eigen::VectorXd instantaneous_value(const ObservationLog& log,
                                    const WeightSchedule& schedule);

// Ascending fractional ranks of R[t] across baselines; ties share the mean
// of their rank block.
std::map<std::string, double> rank_baselines(
    const std::map<std::string, Eigen::VectorXd>& regrets, int t);

struct ReferenceCurves {
  Eigen::VectorXd max_curve;    // per t
  Eigen::MatrixXd quantile_curves;  // T x Q, column per requested quantile
  std::vector<double> quantiles;
};

// Component scores are computed once per corpus item, then re-weighted per
// slice. Quantiles use the nearest-rank method.
ReferenceCurves corpus_reference_curves(
    const std::vector<DesignSequence>& corpus, const WeightSchedule& schedule,
    const PropertyScorer& scorer, const std::vector<double>& quantiles);

// ---------------------------------------------------------------------------
// Synthetic task family.

struct TaskConfig {
  std::string name = "median-2";
  int alphabet_size = 8;
  int max_length = 16;
  int num_components = 2;              // K
  int horizon = 600;                   // T
  double drift_lengthscale_rel = 0.2;  // ell_w (relative)
  double temperature = 1.0;            // beta
  double noise_sd = 0.0;
  bool static_schedule = false;
  std::uint64_t seed = 1234;  // drives references, schedule and corpus
  int corpus_size = 10000;

  void validate() const;
};

// Mutually distant references: rejection sampling until every pair is at
// normalized distance >= 0.5.
std::vector<DesignSequence> draw_references(const TaskConfig& task);

// 50/50 mix of noisy reference mutants and uniform sequences, all at
// max_length (the fixed-length regime used by the benchmark suite).
std::vector<DesignSequence> build_corpus(
    const TaskConfig& task, const std::vector<DesignSequence>& references);

WeightSchedule build_schedule(const TaskConfig& task);

// Bundles schedule + scorer + noise stream and counts oracle calls.
class ObjectiveOracle {
 public:
  ObjectiveOracle(WeightSchedule schedule, PropertyScorer scorer,
                  double noise_sd, Rng noise_rng);

  // One objective evaluation (counted).
  double evaluate(const DesignSequence& x, int t);
  // Cached-score helper for logging; not an oracle call.
  Eigen::VectorXd components(const DesignSequence& x) const;

  long call_count() const { return calls_; }
  const WeightSchedule& schedule() const { return schedule_; }
  const PropertyScorer& scorer() const { return scorer_; }
  double noise_sd() const { return noise_sd_; }

 private:
  WeightSchedule schedule_;
  PropertyScorer scorer_;
  double noise_sd_;
  Rng rng_;
  long calls_ = 0;
};

}  // namespace driftbo
