#include "driftbo/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "driftbo/kernels.hpp"
#include "driftbo/linalg.hpp"
#include "driftbo/stats.hpp"

namespace driftbo {

void WeightSchedule::validate() const {
  for (int t = 0; t < horizon(); ++t) {
    const double row_sum = alphas.row(t).sum();
    if (std::abs(row_sum - 1.0) > 1e-12) {
      std::ostringstream msg;
      msg << "WeightSchedule: row " << t << " sums to " << row_sum;
      throw std::invalid_argument(msg.str());
    }
    for (int k = 0; k < components(); ++k) {
      if (!(alphas(t, k) > 0.0) || !(alphas(t, k) < 1.0)) {
        throw std::invalid_argument(
            "WeightSchedule: entries must lie strictly inside (0, 1)");
      }
    }
  }
}

Eigen::MatrixXd schedule_from_latents(const Eigen::MatrixXd& latents,
                                      double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("schedule_from_latents: temperature > 0");
  }
  Eigen::MatrixXd alphas(latents.rows(), latents.cols());
  for (Eigen::Index t = 0; t < latents.rows(); ++t) {
    Eigen::ArrayXd scaled = temperature * latents.row(t).array();
    scaled -= scaled.maxCoeff();
    Eigen::ArrayXd expd = scaled.exp();
    alphas.row(t) = (expd / expd.sum()).transpose();
  }
  return alphas;
}

WeightSchedule generate_weight_schedule(int horizon, int num_components,
                                        double lengthscale_rel,
                                        double temperature,
                                        std::uint64_t seed) {
  if (horizon < 1) {
    throw std::invalid_argument("generate_weight_schedule: horizon >= 1");
  }
  if (num_components < 2) {
    throw std::invalid_argument("generate_weight_schedule: K >= 2");
  }
  if (!(lengthscale_rel > 0.0)) {
    throw std::invalid_argument("generate_weight_schedule: lengthscale > 0");
  }
  SEKernelParams kernel{1.0, lengthscale_rel * horizon};
  Eigen::MatrixXd gram(horizon, horizon);
  for (int i = 0; i < horizon; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = se_kernel(static_cast<double>(i + 1),
                                 static_cast<double>(j + 1), kernel);
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  const CholeskyResult chol = cholesky_with_jitter(gram);
  Rng rng(seed);
  Eigen::MatrixXd latents(horizon, num_components);
  for (int k = 0; k < num_components; ++k) {
    latents.col(k) = chol.L * rng.normal_vector(horizon);
  }
  WeightSchedule schedule;
  schedule.latents = latents;
  schedule.alphas = schedule_from_latents(latents, temperature);
  schedule.temperature = temperature;
  schedule.temporal_lengthscale_rel = lengthscale_rel;
  schedule.seed = seed;
  schedule.validate();
  return schedule;
}

WeightSchedule generate_constant_schedule(int horizon, int num_components) {
  if (horizon < 1 || num_components < 2) {
    throw std::invalid_argument("generate_constant_schedule: bad dimensions");
  }
  WeightSchedule schedule;
  schedule.latents = Eigen::MatrixXd::Zero(horizon, num_components);
  schedule.alphas = schedule_from_latents(schedule.latents, 1.0);
  schedule.temperature = 1.0;
  schedule.temporal_lengthscale_rel = 0.0;
  schedule.seed = 0;
  return schedule;
}

void PropertyScorer::validate() const {
  if (components() < 2) {
    throw std::invalid_argument("PropertyScorer: needs K >= 2 references");
  }
  for (size_t i = 0; i < references.size(); ++i) {
    for (size_t j = i + 1; j < references.size(); ++j) {
      if (references[i] == references[j]) {
        throw std::invalid_argument("PropertyScorer: duplicate references");
      }
    }
  }
}

Eigen::VectorXd score_components(const DesignSequence& x,
                                 const PropertyScorer& scorer) {
  Eigen::VectorXd s(scorer.components());
  for (int k = 0; k < scorer.components(); ++k) {
    s(k) = 1.0 - design_distance(x, scorer.references[static_cast<size_t>(k)]);
  }
  return s;
}

double evaluate_objective(const DesignSequence& x, int t,
                          const WeightSchedule& schedule,
                          const PropertyScorer& scorer, double noise_sd,
                          Rng& rng) {
  if (t < 1 || t > schedule.horizon()) {
    std::ostringstream msg;
    msg << "evaluate_objective: slice " << t << " outside [1, "
        << schedule.horizon() << "]";
    throw std::out_of_range(msg.str());
  }
  const Eigen::VectorXd s = score_components(x, scorer);
  double value = schedule.alphas.row(t - 1).dot(s.transpose());
  if (noise_sd > 0.0) value += noise_sd * rng.normal();
  return value;
}

void ObservationLog::append(ObservationEntry entry) {
  if (!entries_.empty() && entry.iteration < entries_.back().iteration) {
    throw std::invalid_argument(
        "ObservationLog: iterations must be non-decreasing");
  }
  entries_.push_back(std::move(entry));
}

int ObservationLog::max_iteration() const {
  int best = 0;
  for (const ObservationEntry& e : entries_) {
    best = std::max(best, e.iteration);
  }
  return best;
}

double rescore_entry(const ObservationEntry& entry, int t,
                     const WeightSchedule& schedule) {
  if (t < 1 || t > schedule.horizon()) {
    throw std::out_of_range("rescore_entry: slice out of range");
  }
  return schedule.alphas.row(t - 1).dot(entry.component_scores.transpose());
}

double best_per_time(const ObservationLog& log, int t,
                     const WeightSchedule& schedule) {
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (const ObservationEntry& e : log.entries()) {
    if (e.iteration > t) break;
    best = std::max(best, rescore_entry(e, t, schedule));
    found = true;
  }
  if (!found) {
    std::ostringstream msg;
    msg << "best_per_time: no entries with iteration <= " << t;
    throw std::invalid_argument(msg.str());
  }
  return best;
}

Eigen::VectorXd cumulative_regret(const ObservationLog& log,
                                  const WeightSchedule& schedule,
                                  int horizon) {
  if (horizon < 1) {
    throw std::invalid_argument("cumulative_regret: horizon >= 1");
  }
  std::set<int> present;
  for (const ObservationEntry& e : log.entries()) present.insert(e.iteration);
  for (int t = 1; t <= horizon; ++t) {
    if (present.find(t) == present.end()) {
      std::ostringstream msg;
      msg << "cumulative_regret: iteration " << t << " missing from log";
      throw std::invalid_argument(msg.str());
    }
  }
  Eigen::VectorXd regret(horizon);
  double running = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    running += 1.0 - best_per_time(log, t, schedule);
    regret(t - 1) = running;
  }
  return regret;
}

Eigen::VectorXd instantaneous_value(const ObservationLog& log,
                                    const WeightSchedule& schedule) {
  const int horizon = log.max_iteration();
  if (horizon < 1) {
    throw std::invalid_argument("instantaneous_value: no loop iterations");
  }
  Eigen::VectorXd best = Eigen::VectorXd::Constant(
      horizon, -std::numeric_limits<double>::infinity());
  for (const ObservationEntry& e : log.entries()) {
    if (e.iteration < 1) continue;
    best(e.iteration - 1) = std::max(
        best(e.iteration - 1), rescore_entry(e, e.iteration, schedule));
  }
  for (int t = 1; t <= horizon; ++t) {
    if (!std::isfinite(best(t - 1))) {
      std::ostringstream msg;
      msg << "instantaneous_value: iteration " << t << " missing from log";
      throw std::invalid_argument(msg.str());
    }
  }
  return best;
}

std::map<std::string, double> rank_baselines(
    const std::map<std::string, Eigen::VectorXd>& regrets, int t) {
  if (t < 1) throw std::invalid_argument("rank_baselines: t >= 1");
  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& [name, r] : regrets) {
    if (r.size() < t) {
      throw std::invalid_argument("rank_baselines: vector shorter than t");
    }
    names.push_back(name);
    values.push_back(r(t - 1));
  }
  const std::vector<double> ranks = fractional_ranks(values);
  std::map<std::string, double> out;
  for (size_t i = 0; i < names.size(); ++i) out[names[i]] = ranks[i];
  return out;
}

ReferenceCurves corpus_reference_curves(
    const std::vector<DesignSequence>& corpus, const WeightSchedule& schedule,
    const PropertyScorer& scorer, const std::vector<double>& quantiles) {
  if (corpus.empty()) {
    throw std::invalid_argument("corpus_reference_curves: empty corpus");
  }
  const int horizon = schedule.horizon();
  const auto n = static_cast<Eigen::Index>(corpus.size());
  Eigen::MatrixXd scores(n, scorer.components());
  for (Eigen::Index i = 0; i < n; ++i) {
    scores.row(i) =
        score_components(corpus[static_cast<size_t>(i)], scorer).transpose();
  }
  ReferenceCurves out;
  out.quantiles = quantiles;
  out.max_curve.resize(horizon);
  out.quantile_curves.resize(horizon,
                             static_cast<Eigen::Index>(quantiles.size()));
  for (int t = 1; t <= horizon; ++t) {
    const Eigen::VectorXd values =
        scores * schedule.alphas.row(t - 1).transpose();
    out.max_curve(t - 1) = values.maxCoeff();
    std::vector<double> sample(values.data(), values.data() + values.size());
    for (size_t q = 0; q < quantiles.size(); ++q) {
      out.quantile_curves(t - 1, static_cast<Eigen::Index>(q)) =
          nearest_rank_quantile(sample, quantiles[q]);
    }
  }
  return out;
}

void TaskConfig::validate() const {
  if (alphabet_size < 2) {
    throw std::invalid_argument("TaskConfig: alphabet_size >= 2");
  }
  if (max_length < 2) {
    throw std::invalid_argument("TaskConfig: max_length >= 2");
  }
  if (num_components < 2) {
    throw std::invalid_argument("TaskConfig: num_components >= 2");
  }
  if (horizon < 1) {
    throw std::invalid_argument("TaskConfig: horizon >= 1");
  }
  if (!(drift_lengthscale_rel > 0.0)) {
    throw std::invalid_argument("TaskConfig: drift lengthscale > 0");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("TaskConfig: temperature > 0");
  }
  if (noise_sd < 0.0) {
    throw std::invalid_argument("TaskConfig: noise_sd >= 0");
  }
  if (corpus_size < 1) {
    throw std::invalid_argument("TaskConfig: corpus_size >= 1");
  }
}

std::vector<DesignSequence> draw_references(const TaskConfig& task) {
  task.validate();
  Rng rng = Rng(task.seed).fork("references");
  auto random_sequence = [&]() {
    DesignSequence x;
    x.tokens.resize(static_cast<size_t>(task.max_length));
    for (int i = 0; i < task.max_length; ++i) {
      x.tokens[static_cast<size_t>(i)] = rng.uniform_int(task.alphabet_size);
    }
    return x;
  };
  std::vector<DesignSequence> refs;
  int attempts = 0;
  while (static_cast<int>(refs.size()) < task.num_components) {
    if (++attempts > 10000) {
      throw std::runtime_error(
          "draw_references: could not find mutually distant references");
    }
    DesignSequence candidate = random_sequence();
    bool far_enough = true;
    for (const DesignSequence& r : refs) {
      if (design_distance(candidate, r) < 0.5) {
        far_enough = false;
        break;
      }
    }
    if (far_enough) refs.push_back(std::move(candidate));
  }
  return refs;
}

std::vector<DesignSequence> build_corpus(
    const TaskConfig& task, const std::vector<DesignSequence>& references) {
  task.validate();
  Rng rng = Rng(task.seed).fork("corpus");
  std::vector<DesignSequence> corpus;
  corpus.reserve(static_cast<size_t>(task.corpus_size));
  for (int i = 0; i < task.corpus_size; ++i) {
    DesignSequence x;
    if (i % 2 == 0 && !references.empty()) {
      // Mutant of a random reference. A fixed number of positions is
      // rewritten to different tokens so every mutant keeps a real distance
      // to its reference; otherwise a random initial sample already sits on
      // the achievable frontier and the benchmark loses its headroom.
      const DesignSequence& base =
          references[static_cast<size_t>(rng.uniform_int(
              static_cast<int>(references.size())))];
      const double rate = rng.uniform(0.2, 0.6);
      const int edits = std::max(
          1, static_cast<int>(std::lround(rate * base.length())));
      x = base;
      std::vector<int> order(x.tokens.size());
      for (size_t p = 0; p < order.size(); ++p) order[p] = static_cast<int>(p);
      for (int e = 0; e < edits; ++e) {
        const int pick = e + rng.uniform_int(static_cast<int>(order.size()) - e);
        std::swap(order[static_cast<size_t>(e)],
                  order[static_cast<size_t>(pick)]);
        int& token = x.tokens[static_cast<size_t>(order[
            static_cast<size_t>(e)])];
        token = (token + 1 + rng.uniform_int(task.alphabet_size - 1)) %
                task.alphabet_size;
      }
    } else {
      x.tokens.resize(static_cast<size_t>(task.max_length));
      for (int& token : x.tokens) token = rng.uniform_int(task.alphabet_size);
    }
    corpus.push_back(std::move(x));
  }
  return corpus;
}

WeightSchedule build_schedule(const TaskConfig& task) {
  task.validate();
  if (task.static_schedule) {
    return generate_constant_schedule(task.horizon, task.num_components);
  }
  return generate_weight_schedule(task.horizon, task.num_components,
                                  task.drift_lengthscale_rel,
                                  task.temperature,
                                  Rng(task.seed).fork("schedule").seed());
}

ObjectiveOracle::ObjectiveOracle(WeightSchedule schedule,
                                 PropertyScorer scorer, double noise_sd,
                                 Rng noise_rng)
    : schedule_(std::move(schedule)),
      scorer_(std::move(scorer)),
      noise_sd_(noise_sd),
      rng_(noise_rng) {
  scorer_.validate();
}

double ObjectiveOracle::evaluate(const DesignSequence& x, int t) {
  ++calls_;
  return evaluate_objective(x, t, schedule_, scorer_, noise_sd_, rng_);
}

Eigen::VectorXd ObjectiveOracle::components(const DesignSequence& x) const {
  return score_components(x, scorer_);
}

}  // namespace driftbo
