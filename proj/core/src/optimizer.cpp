#include "driftbo/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace driftbo {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                           31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

double radical_inverse(int base, long index) {
  double result = 0.0;
  double fraction = 1.0 / base;
  while (index > 0) {
    result += fraction * static_cast<double>(index % base);
    index /= base;
    fraction /= base;
  }
  return result;
}

// Halton points in [0, 1)^d with a random shift (Cranley-Patterson) so each
// iteration sees a different low-discrepancy set.
Eigen::MatrixXd shifted_halton(int count, int dim, Rng& rng) {
  if (dim > static_cast<int>(std::size(kPrimes))) {
    throw std::invalid_argument("shifted_halton: dimension too large");
  }
  Eigen::RowVectorXd shift(dim);
  for (int j = 0; j < dim; ++j) shift(j) = rng.uniform();
  Eigen::MatrixXd points(count, dim);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < dim; ++j) {
      double v = radical_inverse(kPrimes[j], i + 1) + shift(j);
      points(i, j) = v - std::floor(v);
    }
  }
  return points;
}

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t double_bits(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  return bits;
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoTime: return "no_time";
    case Variant::kSurrogateOnly: return "surrogate_only";
    case Variant::kRepresentationOnly: return "representation_only";
    case Variant::kLsboPlain: return "lsbo_plain";
    case Variant::kLsboTurbo: return "lsbo_turbo";
    case Variant::kRandom: return "random";
  }
  throw std::logic_error("variant_name: unknown variant");
}

Variant parse_variant(const std::string& name) {
  for (Variant v : all_variants()) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("parse_variant: unknown variant '" + name + "'");
}

std::vector<Variant> all_variants() {
  return {Variant::kFull,        Variant::kNoTime,
          Variant::kSurrogateOnly, Variant::kRepresentationOnly,
          Variant::kLsboPlain,   Variant::kLsboTurbo,
          Variant::kRandom};
}

VariantWiring wiring_for(Variant v) {
  VariantWiring w;
  switch (v) {
    case Variant::kFull:
      w = {true, true, true, true, true, true};
      break;
    case Variant::kNoTime:
      w = {false, false, true, true, true, true};
      break;
    case Variant::kSurrogateOnly:
      w = {false, true, true, true, true, true};
      break;
    case Variant::kRepresentationOnly:
      w = {true, false, true, true, true, true};
      break;
    case Variant::kLsboPlain:
      w = {false, false, false, true, false, false};
      break;
    case Variant::kLsboTurbo:
      w = {false, false, true, true, false, false};
      break;
    case Variant::kRandom:
      w = {false, false, false, false, false, false};
      break;
  }
  return w;
}

void RunConfig::validate() const {
  task.validate();
  if (batch_size < 1) throw std::invalid_argument("RunConfig: batch_size >= 1");
  if (n_init < 1) throw std::invalid_argument("RunConfig: n_init >= 1");
  if (init_window < 1) {
    throw std::invalid_argument("RunConfig: init_window >= 1");
  }
  if (retrain_failure_tolerance < 1) {
    throw std::invalid_argument("RunConfig: retrain_failure_tolerance >= 1");
  }
  if (improvement_threshold < 0.0) {
    throw std::invalid_argument("RunConfig: improvement_threshold >= 0");
  }
  if (svgp_steps_per_iteration < 0 || retrain_steps < 0) {
    throw std::invalid_argument("RunConfig: step counts >= 0");
  }
  if (candidates_per_batch < batch_size) {
    throw std::invalid_argument(
        "RunConfig: candidates_per_batch >= batch_size");
  }
  if (latent.alphabet_size != task.alphabet_size ||
      latent.max_length != task.max_length) {
    throw std::invalid_argument(
        "RunConfig: latent model alphabet/length must match the task");
  }
  inversion.validate();
}

LatentCode embed_and_align(const DesignSequence& x,
                           std::optional<double> time01, LatentModel& model,
                           const InversionConfig& inversion,
                           bool use_inversion, int* warning_count) {
  const LatentCode raw = model.posterior_mean_embedding(x, time01);
  if (!use_inversion || inversion.max_steps == 0) return raw;
  const InversionResult result =
      invert_latent(x, raw, model.decoder(), inversion);
  if (!result.converged && warning_count != nullptr) ++(*warning_count);
  return result.code;
}

ExperimentRunner::ExperimentRunner(RunConfig config, RunOptions options)
    : config_(std::move(config)),
      options_(std::move(options)),
      wiring_(config_.wiring()),
      root_(config_.seed) {
  config_.validate();
}

void ExperimentRunner::prepare() {
  references_ = draw_references(config_.task);
  corpus_ = build_corpus(config_.task, references_);
  PropertyScorer scorer{references_};
  oracle_ = std::make_unique<ObjectiveOracle>(
      build_schedule(config_.task), scorer, config_.task.noise_sd,
      root_.fork("oracle-noise"));

  LatentModelConfig latent_cfg = config_.latent;
  latent_cfg.time_covariate = wiring_.time_in_representation;
  latent_cfg.alphabet_size = config_.task.alphabet_size;
  latent_cfg.max_length = config_.task.max_length;

  // Pretraining is a function of the task, not the run seed: the paper-style
  // shared pretrained model. Identical across runs, so it may be cached.
  std::uint64_t cache_key = 0xcbf29ce484222325ULL;
  cache_key = fnv_mix(cache_key, config_.task.seed);
  cache_key = fnv_mix(cache_key, static_cast<std::uint64_t>(
                                     config_.task.corpus_size));
  cache_key = fnv_mix(cache_key, static_cast<std::uint64_t>(
                                     latent_cfg.time_covariate ? 1 : 2));
  cache_key = fnv_mix(cache_key, static_cast<std::uint64_t>(
                                     latent_cfg.latent_dim));
  cache_key = fnv_mix(cache_key, static_cast<std::uint64_t>(
                                     latent_cfg.num_features));
  cache_key = fnv_mix(cache_key,
                      static_cast<std::uint64_t>(config_.pretrain.steps));
  cache_key = fnv_mix(cache_key,
                      static_cast<std::uint64_t>(config_.pretrain.minibatch));
  cache_key = fnv_mix(cache_key, double_bits(config_.pretrain.learning_rate));
  cache_key = fnv_mix(cache_key, static_cast<std::uint64_t>(
                                     config_.task.alphabet_size));
  cache_key = fnv_mix(cache_key, static_cast<std::uint64_t>(
                                     config_.task.max_length));

  std::string cache_path;
  if (!options_.model_cache_dir.empty()) {
    std::ostringstream name;
    name << "latent_" << std::hex << cache_key << ".json";
    cache_path = (fs::path(options_.model_cache_dir) / name.str()).string();
  }
  if (!options_.preloaded_model_path.empty()) {
    model_ = std::make_unique<LatentModel>(
        LatentModel::load(options_.preloaded_model_path));
  } else if (!cache_path.empty() && fs::exists(cache_path)) {
    model_ = std::make_unique<LatentModel>(LatentModel::load(cache_path));
  } else {
    Rng pretrain_rng = Rng(config_.task.seed)
                           .fork("pretrain", latent_cfg.time_covariate ? 1 : 0);
    Rng init_rng = pretrain_rng.fork("model-init");
    model_ = std::make_unique<LatentModel>(latent_cfg, init_rng);
    pretrain_latent_model(*model_, corpus_, config_.pretrain, pretrain_rng);
    if (!cache_path.empty()) {
      fs::create_directories(options_.model_cache_dir);
      const std::string tmp =
          cache_path + ".tmp." + std::to_string(root_.seed());
      model_->save(tmp);
      fs::rename(tmp, cache_path);
    }
  }
  if (!options_.model_save_path.empty()) {
    model_->save(options_.model_save_path);
  }

  SVGPConfig svgp_cfg = config_.svgp;
  svgp_cfg.use_time = wiring_.time_in_surrogate;
  Rng svgp_rng = root_.fork("svgp-init");
  surrogate_ = std::make_unique<SpatioTemporalSVGP>(
      svgp_cfg, config_.latent.latent_dim, svgp_rng);
}

void ExperimentRunner::build_initial_set() {
  const int t_max = config_.task.horizon;
  const int window = std::min(config_.init_window, t_max);
  Rng init_rng = root_.fork("init-designs");
  const int corpus_n = static_cast<int>(corpus_.size());
  std::vector<int> picks;
  picks.reserve(static_cast<size_t>(config_.n_init));
  if (corpus_n >= config_.n_init) {
    // Partial Fisher-Yates: uniform without replacement.
    std::vector<int> pool(static_cast<size_t>(corpus_n));
    for (int i = 0; i < corpus_n; ++i) pool[static_cast<size_t>(i)] = i;
    for (int i = 0; i < config_.n_init; ++i) {
      const int j = i + init_rng.uniform_int(corpus_n - i);
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      picks.push_back(pool[static_cast<size_t>(i)]);
    }
  } else {
    for (int i = 0; i < config_.n_init; ++i) {
      picks.push_back(init_rng.uniform_int(corpus_n));
    }
  }

  const bool time_aware = wiring_.uses_any_time();
  int warning_count = 0;
  std::vector<DesignSequence> designs;
  Eigen::MatrixXd raw_embeddings(config_.n_init, config_.latent.latent_dim);
  std::vector<int> slots(static_cast<size_t>(config_.n_init));
  for (int i = 0; i < config_.n_init; ++i) {
    // Evaluation slices spread uniformly over the first `window` slots;
    // time-agnostic variants see everything at the latest pre-loop slice.
    const int spread_slot =
        1 + static_cast<int>((static_cast<long>(i) * window) / config_.n_init);
    slots[static_cast<size_t>(i)] = time_aware ? spread_slot : window;
  }
  for (int i = 0; i < config_.n_init; ++i) {
    const DesignSequence& x = corpus_[static_cast<size_t>(
        picks[static_cast<size_t>(i)])];
    const int slot = slots[static_cast<size_t>(i)];
    const double time01 = static_cast<double>(slot) / t_max;
    const double y = oracle_->evaluate(x, slot);
    ObservationEntry entry;
    entry.design = x;
    entry.iteration = 0;
    entry.component_scores = oracle_->components(x);
    entry.observed_value = y;
    result_.log.append(std::move(entry));

    RichRecord record;
    record.design = x;
    record.iteration = 0;
    record.time_slot = slot;
    record.time01 = time01;
    record.observed_value = y;
    record.latent = model_->posterior_mean_embedding(
        x, wiring_.time_in_representation ? std::optional<double>(time01)
                                          : std::nullopt);
    rich_.push_back(std::move(record));
    designs.push_back(x);
  }
  // Alignment refinement of the initial embeddings, batched.
  if (wiring_.use_inversion && config_.inversion.max_steps > 0) {
    Eigen::MatrixXd z0(config_.n_init, config_.latent.latent_dim);
    for (int i = 0; i < config_.n_init; ++i) {
      z0.row(i) = rich_[static_cast<size_t>(i)].latent.transpose();
    }
    const std::vector<InversionResult> refined = invert_latent_batch(
        designs, z0, model_->decoder(), config_.inversion);
    for (int i = 0; i < config_.n_init; ++i) {
      rich_[static_cast<size_t>(i)].latent = refined[static_cast<size_t>(i)].code;
      if (!refined[static_cast<size_t>(i)].converged) ++warning_count;
    }
  }
  result_.inversion_warnings += warning_count;

  if (wiring_.use_surrogate) {
    Rng inducing_rng = root_.fork("inducing-init");
    surrogate_->initialize_inducing(dataset_view(), inducing_rng);
  }

  const int best = incumbent_index();
  optimizer_best_ = rich_[static_cast<size_t>(best)].observed_value;
  TrustRegionConfig tr_cfg = config_.trust_region;
  if (tr_cfg.failure_tolerance <= 0) {
    tr_cfg.failure_tolerance = static_cast<int>(std::ceil(
        std::max(4.0, static_cast<double>(config_.latent.latent_dim)) /
        config_.batch_size));
  }
  trust_region_ = make_trust_region(rich_[static_cast<size_t>(best)].latent,
                                    optimizer_best_, tr_cfg);
}

SurrogateDataset ExperimentRunner::dataset_view() const {
  SurrogateDataset data;
  const auto n = static_cast<Eigen::Index>(rich_.size());
  data.latents.resize(n, config_.latent.latent_dim);
  data.times.resize(n);
  data.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const RichRecord& r = rich_[static_cast<size_t>(i)];
    data.latents.row(i) = r.latent.transpose();
    data.times(i) = r.time01;
    data.values(i) = r.observed_value;
  }
  return data;
}

int ExperimentRunner::incumbent_index() const {
  int best = 0;
  for (size_t i = 1; i < rich_.size(); ++i) {
    if (rich_[i].observed_value > rich_[static_cast<size_t>(best)].observed_value) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

int ExperimentRunner::rescored_incumbent_index(int t) const {
  const Eigen::RowVectorXd alpha = oracle_->schedule().alphas.row(t - 1);
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < rich_.size(); ++i) {
    const double v = alpha.dot(
        oracle_->components(rich_[i].design).transpose());
    if (v > best_value) {
      best_value = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Eigen::MatrixXd ExperimentRunner::latent_bounding_box() const {
  const int d = config_.latent.latent_dim;
  Eigen::MatrixXd box(2, d);
  box.row(0).setConstant(std::numeric_limits<double>::infinity());
  box.row(1).setConstant(-std::numeric_limits<double>::infinity());
  for (const RichRecord& r : rich_) {
    box.row(0) = box.row(0).cwiseMin(r.latent.transpose());
    box.row(1) = box.row(1).cwiseMax(r.latent.transpose());
  }
  for (int j = 0; j < d; ++j) {
    if (!(box(1, j) - box(0, j) > 1e-9)) {
      box(0, j) -= 0.5;
      box(1, j) += 0.5;
    }
  }
  return box;
}

Eigen::MatrixXd ExperimentRunner::candidate_points(int t, Rng& rng) const {
  const int d = config_.latent.latent_dim;
  Eigen::VectorXd lower(d);
  Eigen::VectorXd upper(d);
  if (wiring_.use_trust_region) {
    const TrustRegionBounds bounds = trust_region_bounds(trust_region_);
    lower = bounds.lower;
    upper = bounds.upper;
  } else {
    const Eigen::MatrixXd box = latent_bounding_box();
    lower = box.row(0).transpose();
    upper = box.row(1).transpose();
  }
  Eigen::MatrixXd unit = shifted_halton(config_.candidates_per_batch, d, rng);
  Eigen::MatrixXd points(unit.rows(), d);
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    points.row(i) = lower.transpose().array() +
                    unit.row(i).array() *
                        (upper - lower).transpose().array();
  }
  return points;
}

std::vector<Eigen::VectorXd> ExperimentRunner::select_batch(int t, Rng& rng) {
  const double time01 = static_cast<double>(t) / config_.task.horizon;
  std::vector<Eigen::VectorXd> selected;
  if (!wiring_.use_surrogate) {
    const Eigen::MatrixXd box = latent_bounding_box();
    Rng sample_rng = rng.fork("random-batch", static_cast<std::uint64_t>(t));
    for (int b = 0; b < config_.batch_size; ++b) {
      Eigen::VectorXd z(config_.latent.latent_dim);
      for (int j = 0; j < z.size(); ++j) {
        z(j) = sample_rng.uniform(box(0, j), box(1, j));
      }
      selected.push_back(std::move(z));
    }
    return selected;
  }
  Rng cand_rng = rng.fork("candidates", static_cast<std::uint64_t>(t));
  const Eigen::MatrixXd candidates = candidate_points(t, cand_rng);
  Rng ts_rng = rng.fork("thompson", static_cast<std::uint64_t>(t));
  const std::vector<int> picks = surrogate_->thompson_sample_batch(
      candidates, time01, config_.batch_size, ts_rng);
  for (int idx : picks) {
    selected.push_back(candidates.row(idx).transpose());
  }
  return selected;
}

void ExperimentRunner::run_iteration(int t) {
  const auto started = Clock::now();
  IterationStats stats;
  stats.iteration = t;
  const double time01 = static_cast<double>(t) / config_.task.horizon;

  if (wiring_.use_surrogate && config_.svgp_steps_per_iteration > 0) {
    Rng fit_rng = root_.fork("svgp-fit", static_cast<std::uint64_t>(t));
    surrogate_->fit(dataset_view(), config_.svgp_steps_per_iteration,
                    config_.svgp_learning_rate, config_.svgp_minibatch,
                    fit_rng);
  }

  std::vector<Eigen::VectorXd> batch_latents = select_batch(t, root_);

  // Decode; an empty decode re-draws its candidate up to 10 times.
  std::vector<DesignSequence> designs(batch_latents.size());
  Rng redraw_rng = root_.fork("redraw", static_cast<std::uint64_t>(t));
  for (size_t b = 0; b < batch_latents.size(); ++b) {
    DesignSequence x = decode_argmax(batch_latents[b], model_->decoder());
    int retries = 0;
    while (x.empty()) {
      if (++retries > 10) {
        throw std::runtime_error(
            "run_iteration: decoder produced empty sequences for 10 "
            "consecutive redraws");
      }
      if (wiring_.use_surrogate) {
        Rng cand_rng = redraw_rng.fork("candidates", retries);
        const Eigen::MatrixXd candidates = candidate_points(t, cand_rng);
        Rng ts_rng = redraw_rng.fork("thompson", retries);
        const std::vector<int> pick =
            surrogate_->thompson_sample_batch(candidates, time01, 1, ts_rng);
        batch_latents[b] = candidates.row(pick[0]).transpose();
      } else {
        const Eigen::MatrixXd box = latent_bounding_box();
        Eigen::VectorXd z(config_.latent.latent_dim);
        for (int j = 0; j < z.size(); ++j) {
          z(j) = redraw_rng.uniform(box(0, j), box(1, j));
        }
        batch_latents[b] = std::move(z);
      }
      x = decode_argmax(batch_latents[b], model_->decoder());
    }
    designs[b] = std::move(x);
  }

  Eigen::VectorXd batch_values(static_cast<Eigen::Index>(designs.size()));
  for (size_t b = 0; b < designs.size(); ++b) {
    const double y = oracle_->evaluate(designs[b], t);
    batch_values(static_cast<Eigen::Index>(b)) = y;
    ObservationEntry entry;
    entry.design = designs[b];
    entry.iteration = t;
    entry.component_scores = oracle_->components(designs[b]);
    entry.observed_value = y;
    result_.log.append(std::move(entry));
  }
  stats.batch_best_observed = batch_values.maxCoeff();

  // Embed-and-align the evaluated designs under the current model.
  Eigen::MatrixXd z0(static_cast<Eigen::Index>(designs.size()),
                     config_.latent.latent_dim);
  for (size_t b = 0; b < designs.size(); ++b) {
    z0.row(static_cast<Eigen::Index>(b)) =
        model_
            ->posterior_mean_embedding(
                designs[b], wiring_.time_in_representation
                                ? std::optional<double>(time01)
                                : std::nullopt)
            .transpose();
  }
  std::vector<LatentCode> aligned(designs.size());
  if (wiring_.use_inversion && config_.inversion.max_steps > 0) {
    const std::vector<InversionResult> refined = invert_latent_batch(
        designs, z0, model_->decoder(), config_.inversion);
    for (size_t b = 0; b < designs.size(); ++b) {
      aligned[b] = refined[b].code;
      if (!refined[b].converged) ++result_.inversion_warnings;
    }
  } else {
    for (size_t b = 0; b < designs.size(); ++b) {
      aligned[b] = z0.row(static_cast<Eigen::Index>(b)).transpose();
    }
  }
  for (size_t b = 0; b < designs.size(); ++b) {
    RichRecord record;
    record.design = designs[b];
    record.latent = aligned[b];
    record.iteration = t;
    record.time_slot = t;
    record.time01 = time01;
    record.observed_value = batch_values(static_cast<Eigen::Index>(b));
    rich_.push_back(std::move(record));
  }

  if (wiring_.use_trust_region) {
    trust_region_ = update_trust_region(trust_region_, batch_values);
    trust_region_.center = rich_[static_cast<size_t>(incumbent_index())].latent;
    if (trust_region_.restart_pending) {
      const int best = rescored_incumbent_index(t);
      const double value = oracle_->schedule().alphas.row(t - 1).dot(
          oracle_->components(rich_[static_cast<size_t>(best)].design)
              .transpose());
      trust_region_ = restart_trust_region(
          trust_region_, rich_[static_cast<size_t>(best)].latent, value);
      ++result_.restart_count;
      stats.trust_region_restarted = true;
    }
  }

  if (wiring_.use_retrain) {
    const double threshold =
        optimizer_best_ +
        config_.improvement_threshold * std::abs(optimizer_best_);
    if (stats.batch_best_observed > threshold) {
      optimizer_best_ = stats.batch_best_observed;
      retrain_failures_ = 0;
    } else {
      ++retrain_failures_;
    }
    if (retrain_failures_ >= config_.retrain_failure_tolerance) {
      retrain_representation(t);
      retrain_failures_ = 0;
      stats.retrained = true;
    }
  }

  stats.wall_ms = ms_since(started);
  result_.iterations.push_back(stats);
}

void ExperimentRunner::retrain_representation(int t) {
  ++result_.retrain_count;
  const int n = static_cast<int>(rich_.size());
  const int batch = std::max(2, std::min(config_.retrain_minibatch, n));
  Rng rng = root_.fork("retrain", static_cast<std::uint64_t>(t));

  // One fixed minibatch per representation update.
  std::vector<int> idx(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) idx[static_cast<size_t>(i)] =
      rng.uniform_int(n);

  std::vector<DesignSequence> designs(idx.size());
  std::vector<CovariateVector> covs(idx.size());
  Eigen::VectorXd y(batch);
  Eigen::VectorXd times(batch);
  for (int i = 0; i < batch; ++i) {
    const RichRecord& r = rich_[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    designs[static_cast<size_t>(i)] = r.design;
    covs[static_cast<size_t>(i)] = model_->covariates(
        r.design, wiring_.time_in_representation
                      ? std::optional<double>(r.time01)
                      : std::nullopt);
    y(i) = r.observed_value;
    times(i) = r.time01;
  }
  const Eigen::VectorXd weights = default_importance_weights(y);

  std::vector<ad::Parameter*> params = model_->trainable_params();
  if (wiring_.use_surrogate) {
    for (ad::Parameter* p : surrogate_->params()) params.push_back(p);
  }
  ad::Adam adam(params, config_.retrain_learning_rate);
  std::vector<Eigen::MatrixXd> last_finite = ad::snapshot_values(params);
  Rng elbo_rng = rng.fork("elbo");
  for (int step = 0; step < config_.retrain_steps; ++step) {
    ad::Graph g;
    ElboResult terms;
    ad::Var elbo = model_->elbo_graph(g, designs, covs, 1, n, elbo_rng,
                                      &terms);
    ad::Var z = model_->embeddings_graph(g, covs, true);
    ad::Var loss = g.neg(elbo);
    if (batch >= 2) {
      loss = g.add(loss, lipschitz_loss_graph(g, z, y, weights));
      loss = g.add(loss, latent_scale_loss_graph(g, z));
    }
    if (wiring_.use_surrogate) {
      ad::Var svgp_elbo =
          surrogate_->elbo_fragment(g, z, times, y, n, true);
      loss = g.add(loss, g.neg(svgp_elbo));
    }
    if (!std::isfinite(loss.scalar())) {
      ad::restore_values(params, last_finite);
      for (ad::Parameter* p : params) p->zero_grad();
      break;
    }
    last_finite = ad::snapshot_values(params);
    g.backward(loss);
    adam.step();
  }

  reembed_all();
  if (wiring_.use_surrogate) {
    Rng inducing_rng = rng.fork("inducing");
    surrogate_->initialize_inducing(dataset_view(), inducing_rng);
  }
  if (wiring_.use_trust_region) {
    trust_region_.center =
        rich_[static_cast<size_t>(incumbent_index())].latent;
  }
}

void ExperimentRunner::reembed_all() {
  const auto n = static_cast<Eigen::Index>(rich_.size());
  Eigen::MatrixXd z0(n, config_.latent.latent_dim);
  std::vector<DesignSequence> designs(rich_.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const RichRecord& r = rich_[static_cast<size_t>(i)];
    designs[static_cast<size_t>(i)] = r.design;
    z0.row(i) = model_
                    ->posterior_mean_embedding(
                        r.design, wiring_.time_in_representation
                                      ? std::optional<double>(r.time01)
                                      : std::nullopt)
                    .transpose();
  }
  if (wiring_.use_inversion && config_.inversion.max_steps > 0) {
    const std::vector<InversionResult> refined = invert_latent_batch(
        designs, z0, model_->decoder(), config_.inversion);
    for (Eigen::Index i = 0; i < n; ++i) {
      rich_[static_cast<size_t>(i)].latent = refined[static_cast<size_t>(i)].code;
      if (!refined[static_cast<size_t>(i)].converged) {
        ++result_.inversion_warnings;
      }
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      rich_[static_cast<size_t>(i)].latent = z0.row(i).transpose();
    }
  }
}

RunResult ExperimentRunner::run() {
  const auto started = Clock::now();
  result_ = RunResult{};
  rich_.clear();
  prepare();
  build_initial_set();
  for (int t = 1; t <= config_.task.horizon; ++t) {
    run_iteration(t);
  }
  result_.oracle_calls = oracle_->call_count();
  result_.final_trust_region = trust_region_;
  result_.wall_seconds = ms_since(started) / 1000.0;
  return result_;
}

RunResult run_experiment(const RunConfig& config, const RunOptions& options) {
  ExperimentRunner runner(config, options);
  return runner.run();
}

}  // namespace driftbo
