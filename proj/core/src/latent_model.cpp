#include "driftbo/latent_model.hpp"

#include "driftbo/alignment.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace driftbo {
namespace {

using nlohmann::json;

constexpr double kSqrt2Pi = 2.5066282746310002;
// Prior log-variances below this are clamped so the KL ratio stays
// representable in double precision.
constexpr double kLogPriorFloor = -500.0;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j.at(static_cast<size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::runtime_error("checkpoint: ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(i, c) = row.at(static_cast<size_t>(c)).get<double>();
    }
  }
  return m;
}

// Plain (non-graph) GRU step shared by likelihood and greedy decoding.
struct DecoderState {
  Eigen::VectorXd hidden;
  Eigen::VectorXd latent_drive;  // latent_in * z, added to every step input
};

DecoderState decoder_initial_state(const LatentCode& z,
                                   const DecoderParams& theta) {
  DecoderState s;
  s.hidden = (theta.init_w.value * z + theta.init_b.value.col(0))
                 .array()
                 .tanh();
  s.latent_drive = theta.latent_in.value * z;
  return s;
}

Eigen::VectorXd decoder_step_logits(DecoderState& s, int prev_token,
                                    const DecoderParams& theta) {
  const int h = theta.hidden_dim();
  Eigen::VectorXd u =
      theta.embedding.value.row(prev_token).transpose() + s.latent_drive;
  Eigen::VectorXd pre = theta.gate_w.value * u + theta.gate_b.value.col(0);
  Eigen::VectorXd uh = theta.gate_u.value * s.hidden;
  Eigen::ArrayXd reset =
      1.0 / (1.0 + (-(pre.segment(0, h) + uh.segment(0, h)).array()).exp());
  Eigen::ArrayXd update =
      1.0 / (1.0 + (-(pre.segment(h, h) + uh.segment(h, h)).array()).exp());
  Eigen::ArrayXd cand =
      (pre.segment(2 * h, h).array() + reset * uh.segment(2 * h, h).array())
          .tanh();
  s.hidden =
      ((1.0 - update) * cand + update * s.hidden.array()).matrix();
  return theta.out_w.value * s.hidden + theta.out_b.value.col(0);
}

double log_softmax_at(const Eigen::VectorXd& logits, int index) {
  const double zmax = logits.maxCoeff();
  const double lse =
      zmax + std::log((logits.array() - zmax).exp().sum());
  return logits(index) - lse;
}

ad::Var bind(ad::Graph& g, ad::Parameter& p, bool trainable) {
  return trainable ? g.param(p) : g.constant(p.value);
}

}  // namespace

void LatentModelConfig::validate() const {
  if (alphabet_size < 1) {
    throw std::invalid_argument("LatentModelConfig: alphabet_size >= 1");
  }
  if (max_length < 1) {
    throw std::invalid_argument("LatentModelConfig: max_length >= 1");
  }
  if (latent_dim < 1 || num_features < 1) {
    throw std::invalid_argument("LatentModelConfig: dimensions must be >= 1");
  }
  if (eos_token >= alphabet_size) {
    throw std::invalid_argument("LatentModelConfig: eos_token out of range");
  }
  if (descriptor_count < 1 || descriptor_count > 3) {
    throw std::invalid_argument(
        "LatentModelConfig: descriptor_count must be in [1, 3]");
  }
  basis().validate();
}

Eigen::VectorXd design_descriptors(const DesignSequence& x,
                                   const LatentModelConfig& config) {
  validate_design(x, config.alphabet_size, config.max_length);
  Eigen::VectorXd d(3);
  d(0) = static_cast<double>(x.length()) /
         static_cast<double>(config.max_length);
  double mean_token = 0.0;
  for (int t : x.tokens) mean_token += t;
  mean_token /= x.length();
  d(1) = config.alphabet_size > 1
             ? mean_token / static_cast<double>(config.alphabet_size - 1)
             : 0.0;
  int transitions = 0;
  for (int i = 0; i + 1 < x.length(); ++i) {
    if (x.tokens[static_cast<size_t>(i)] !=
        x.tokens[static_cast<size_t>(i) + 1]) {
      ++transitions;
    }
  }
  d(2) = x.length() > 1
             ? static_cast<double>(transitions) / (x.length() - 1)
             : 0.0;
  return d;
}

CovariateVector compute_covariates(const DesignSequence& x,
                                   std::optional<double> time01,
                                   const LatentModelConfig& config,
                                   const CovariateScaler& scaler) {
  const Eigen::VectorXd descriptors = design_descriptors(x, config);
  const int k = config.num_descriptors();
  CovariateVector c;
  c.values.resize(config.num_covariates());
  Eigen::VectorXd raw(config.num_covariates());
  raw.head(k) = descriptors.head(k);
  if (config.time_covariate) {
    if (!time01.has_value()) {
      throw std::invalid_argument(
          "compute_covariates: model uses a time covariate but no time "
          "was provided");
    }
    raw(k) = *time01;
    c.includes_time = true;
    c.time_index = k;
  }
  c.values = scaler.rescale(raw);
  const HilbertBasisConfig basis = config.basis();
  for (Eigen::Index i = 0; i < c.values.size(); ++i) {
    c.values(i) = clamp_into_domain(c.values(i), basis);
  }
  return c;
}

LatentCode latent_code(const CovariateVector& c,
                       const std::vector<Eigen::MatrixXd>& coefficients,
                       const HilbertBasisConfig& basis) {
  if (coefficients.empty()) {
    throw std::invalid_argument("latent_code: no coefficient matrices");
  }
  if (static_cast<Eigen::Index>(coefficients.size()) != c.values.size()) {
    throw std::invalid_argument(
        "latent_code: one coefficient matrix per covariate required");
  }
  const Eigen::Index d = coefficients.front().rows();
  LatentCode z = LatentCode::Zero(d);
  for (size_t r = 0; r < coefficients.size(); ++r) {
    const Eigen::MatrixXd& a = coefficients[r];
    if (a.rows() != d || a.cols() != basis.num_features) {
      throw std::invalid_argument("latent_code: coefficient shape mismatch");
    }
    z.noalias() +=
        a * hilbert_phi(c.values(static_cast<Eigen::Index>(r)), basis);
  }
  return z;
}

double decoder_log_likelihood(const DesignSequence& x, const LatentCode& z,
                              const DecoderParams& theta) {
  if (x.empty()) {
    throw std::invalid_argument("decoder_log_likelihood: empty sequence");
  }
  DecoderState state = decoder_initial_state(z, theta);
  const int bos = theta.alphabet_size();  // start-of-sequence embedding row
  int prev = bos;
  double total = 0.0;
  for (int step = 0; step < x.length(); ++step) {
    const Eigen::VectorXd logits = decoder_step_logits(state, prev, theta);
    const int target = x.tokens[static_cast<size_t>(step)];
    total += log_softmax_at(logits, target);
    prev = target;
  }
  return total / x.length();
}

DesignSequence decode_argmax(const LatentCode& z, const DecoderParams& theta) {
  DecoderState state = decoder_initial_state(z, theta);
  DesignSequence out;
  int prev = theta.alphabet_size();
  for (int step = 0; step < theta.max_length; ++step) {
    const Eigen::VectorXd logits = decoder_step_logits(state, prev, theta);
    Eigen::Index best = 0;
    logits.maxCoeff(&best);  // first maximum: lowest token index wins ties
    const int token = static_cast<int>(best);
    if (token == theta.eos_token) break;
    out.tokens.push_back(token);
    prev = token;
  }
  return out;
}

ad::Var decoder_batch_nll(ad::Graph& g, DecoderParams& theta,
                          bool trainable_decoder, ad::Var latents,
                          const std::vector<DesignSequence>& batch) {
  if (batch.empty()) {
    throw std::invalid_argument("decoder_batch_nll: empty batch");
  }
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (latents.rows() != n) {
    throw std::invalid_argument("decoder_batch_nll: one latent row per item");
  }
  const int h = theta.hidden_dim();
  int max_len = 0;
  for (const DesignSequence& x : batch) {
    if (x.empty()) {
      throw std::invalid_argument("decoder_batch_nll: empty sequence");
    }
    max_len = std::max(max_len, x.length());
  }

  ad::Var emb = bind(g, theta.embedding, trainable_decoder);
  ad::Var latent_in = bind(g, theta.latent_in, trainable_decoder);
  ad::Var init_w = bind(g, theta.init_w, trainable_decoder);
  ad::Var init_b = bind(g, theta.init_b, trainable_decoder);
  ad::Var gate_w = bind(g, theta.gate_w, trainable_decoder);
  ad::Var gate_u = bind(g, theta.gate_u, trainable_decoder);
  ad::Var gate_b = bind(g, theta.gate_b, trainable_decoder);
  ad::Var out_w = bind(g, theta.out_w, trainable_decoder);
  ad::Var out_b = bind(g, theta.out_b, trainable_decoder);

  ad::Var hidden = g.tanh(g.add(g.matmul(latents, g.transpose(init_w)),
                                g.broadcast_row(g.transpose(init_b), n)));
  ad::Var drive = g.matmul(latents, g.transpose(latent_in));
  ad::Var gate_bias = g.broadcast_row(g.transpose(gate_b), n);
  ad::Var out_bias = g.broadcast_row(g.transpose(out_b), n);

  ad::Var nll_total = g.constant(Eigen::MatrixXd::Zero(n, 1));
  const int bos = theta.alphabet_size();
  for (int step = 0; step < max_len; ++step) {
    std::vector<int> prev(batch.size());
    std::vector<int> target(batch.size());
    Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(n, 1);
    for (size_t i = 0; i < batch.size(); ++i) {
      const DesignSequence& x = batch[i];
      const bool active = step < x.length();
      mask(static_cast<Eigen::Index>(i), 0) = active ? 1.0 : 0.0;
      prev[i] = (step == 0) ? bos
                            : (step - 1 < x.length()
                                   ? x.tokens[static_cast<size_t>(step) - 1]
                                   : 0);
      target[i] = active ? x.tokens[static_cast<size_t>(step)] : 0;
    }
    ad::Var u = g.add(g.gather_rows(emb, prev), drive);
    ad::Var pre = g.add(g.matmul(u, g.transpose(gate_w)), gate_bias);
    ad::Var uh = g.matmul(hidden, g.transpose(gate_u));
    ad::Var reset = g.sigmoid(
        g.add(g.block(pre, 0, 0, n, h), g.block(uh, 0, 0, n, h)));
    ad::Var update = g.sigmoid(
        g.add(g.block(pre, 0, h, n, h), g.block(uh, 0, h, n, h)));
    ad::Var cand = g.tanh(g.add(g.block(pre, 0, 2 * h, n, h),
                                g.cmul(reset, g.block(uh, 0, 2 * h, n, h))));
    ad::Var keep = g.add_scalar(g.neg(update), 1.0);
    hidden = g.add(g.cmul(keep, cand), g.cmul(update, hidden));
    ad::Var logits = g.add(g.matmul(hidden, g.transpose(out_w)), out_bias);
    ad::Var nll = g.softmax_cross_entropy_rows(logits, target);
    nll_total = g.add(nll_total, g.cmul(nll, g.constant(mask)));
  }

  Eigen::MatrixXd lengths(n, 1);
  for (size_t i = 0; i < batch.size(); ++i) {
    lengths(static_cast<Eigen::Index>(i), 0) = batch[i].length();
  }
  return g.cdiv(nll_total, g.constant(lengths));
}

LatentModel::LatentModel(LatentModelConfig config, Rng& rng)
    : config_(std::move(config)) {
  config_.validate();
  const int r_count = config_.num_covariates();
  const int d = config_.latent_dim;
  const int m = config_.num_features;

  scaler_ = CovariateScaler(Eigen::VectorXd::Zero(r_count),
                            Eigen::VectorXd::Ones(r_count));

  // Initialize the coefficient posterior at the prior implied by unit
  // hyperparameters; tail features then start at (near) zero KL.
  SEKernelParams unit{1.0, 1.0};
  const Eigen::VectorXd prior = hilbert_prior_diag(unit, config_.basis());
  for (int r = 0; r < r_count; ++r) {
    Eigen::MatrixXd mean = 0.01 * rng.normal_matrix(d, m);
    Eigen::MatrixXd log_std(d, m);
    for (int j = 0; j < m; ++j) {
      const double log_prior =
          std::max(std::log(std::max(prior(j), 1e-300)), kLogPriorFloor);
      mean.col(j) *= std::exp(0.5 * log_prior);
      log_std.col(j).setConstant(0.5 * log_prior);
    }
    expansion_.coefficient_means.emplace_back(std::move(mean),
                                              "coef_mean_" + std::to_string(r));
    expansion_.coefficient_log_stds.emplace_back(
        std::move(log_std), "coef_log_std_" + std::to_string(r));
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1);
    Eigen::MatrixXd small_scale = Eigen::MatrixXd::Constant(1, 1,
                                                            std::log(0.02));
    expansion_.sigma_loc.emplace_back(zero, "sigma_loc_" + std::to_string(r));
    expansion_.sigma_log_scale.emplace_back(small_scale,
                                            "sigma_log_scale_" +
                                                std::to_string(r));
    expansion_.ell_loc.emplace_back(zero, "ell_loc_" + std::to_string(r));
    expansion_.ell_log_scale.emplace_back(small_scale,
                                          "ell_log_scale_" +
                                              std::to_string(r));
  }

  const int v = config_.alphabet_size;
  const int e = config_.decoder_embed;
  const int hd = config_.decoder_hidden;
  auto scaled = [&rng](Eigen::Index rows, Eigen::Index cols, double fan_in) {
    return Eigen::MatrixXd(rng.normal_matrix(rows, cols) /
                           std::sqrt(fan_in));
  };
  decoder_.embedding = ad::Parameter(scaled(v + 1, e, e), "dec_embedding");
  decoder_.latent_in = ad::Parameter(scaled(e, d, d), "dec_latent_in");
  decoder_.init_w = ad::Parameter(scaled(hd, d, d), "dec_init_w");
  decoder_.init_b = ad::Parameter(Eigen::MatrixXd::Zero(hd, 1), "dec_init_b");
  decoder_.gate_w = ad::Parameter(scaled(3 * hd, e, e), "dec_gate_w");
  decoder_.gate_u = ad::Parameter(scaled(3 * hd, hd, hd), "dec_gate_u");
  decoder_.gate_b = ad::Parameter(Eigen::MatrixXd::Zero(3 * hd, 1),
                                  "dec_gate_b");
  decoder_.out_w = ad::Parameter(scaled(v, hd, hd), "dec_out_w");
  decoder_.out_b = ad::Parameter(Eigen::MatrixXd::Zero(v, 1), "dec_out_b");
  decoder_.max_length = config_.max_length;
  decoder_.eos_token = config_.eos_token;
}

CovariateVector LatentModel::covariates(const DesignSequence& x,
                                        std::optional<double> time01) const {
  return compute_covariates(x, time01, config_, scaler_);
}

LatentCode LatentModel::posterior_mean_embedding(
    const DesignSequence& x, std::optional<double> time01) const {
  const CovariateVector c = covariates(x, time01);
  std::vector<Eigen::MatrixXd> means;
  means.reserve(expansion_.coefficient_means.size());
  for (const ad::Parameter& p : expansion_.coefficient_means) {
    means.push_back(p.value);
  }
  return latent_code(c, means, config_.basis());
}

LatentCode LatentModel::sample_embedding(const DesignSequence& x,
                                         std::optional<double> time01,
                                         Rng& rng) const {
  const CovariateVector c = covariates(x, time01);
  std::vector<Eigen::MatrixXd> sample;
  sample.reserve(expansion_.coefficient_means.size());
  for (size_t r = 0; r < expansion_.coefficient_means.size(); ++r) {
    const Eigen::MatrixXd& mean = expansion_.coefficient_means[r].value;
    const Eigen::MatrixXd& log_std =
        expansion_.coefficient_log_stds[r].value;
    sample.push_back(mean + log_std.array().exp().matrix().cwiseProduct(
                                rng.normal_matrix(mean.rows(), mean.cols())));
  }
  return latent_code(c, sample, config_.basis());
}

std::vector<Eigen::MatrixXd> LatentModel::feature_rows(
    const std::vector<CovariateVector>& covariates) const {
  const auto n = static_cast<Eigen::Index>(covariates.size());
  const int r_count = config_.num_covariates();
  const HilbertBasisConfig basis = config_.basis();
  std::vector<Eigen::MatrixXd> rows(
      static_cast<size_t>(r_count),
      Eigen::MatrixXd(n, config_.num_features));
  for (Eigen::Index i = 0; i < n; ++i) {
    const CovariateVector& c = covariates[static_cast<size_t>(i)];
    if (c.values.size() != r_count) {
      throw std::invalid_argument("feature_rows: covariate size mismatch");
    }
    for (int r = 0; r < r_count; ++r) {
      rows[static_cast<size_t>(r)].row(i) =
          hilbert_phi(c.values(r), basis).transpose();
    }
  }
  return rows;
}

ad::Var LatentModel::embeddings_graph(
    ad::Graph& g, const std::vector<CovariateVector>& covariates,
    bool trainable) {
  const std::vector<Eigen::MatrixXd> phi = feature_rows(covariates);
  ad::Var z;
  for (size_t r = 0; r < phi.size(); ++r) {
    ad::Var a = bind(g, expansion_.coefficient_means[r], trainable);
    ad::Var term = g.matmul(g.constant(phi[r]), g.transpose(a));
    z = r == 0 ? term : g.add(z, term);
  }
  return z;
}

ad::Var LatentModel::elbo_graph(ad::Graph& g,
                                const std::vector<DesignSequence>& batch,
                                const std::vector<CovariateVector>& covariates,
                                int mc_samples, int total_count, Rng& rng,
                                ElboResult* result, double kl_scale) {
  if (batch.empty()) {
    throw std::invalid_argument("elbo_graph: empty batch");
  }
  if (batch.size() != covariates.size()) {
    throw std::invalid_argument("elbo_graph: batch/covariate size mismatch");
  }
  if (mc_samples < 1) {
    throw std::invalid_argument("elbo_graph: mc_samples >= 1");
  }
  const int r_count = config_.num_covariates();
  const int d = config_.latent_dim;
  const int m = config_.num_features;
  const Eigen::VectorXd lambda = hilbert_eigenvalues(config_.basis());
  const Eigen::MatrixXd lambda_row = lambda.transpose();
  const Eigen::MatrixXd ones_row = Eigen::MatrixXd::Ones(1, m);
  const std::vector<Eigen::MatrixXd> phi = feature_rows(covariates);

  if (result != nullptr) {
    result->sampled_sigma.clear();
    result->sampled_ell.clear();
  }

  // KL between the coefficient posterior and its GP prior, one hyper draw.
  ad::Var kl_coeff;
  ad::Var kl_sigma;
  ad::Var kl_ell;
  for (int r = 0; r < r_count; ++r) {
    ad::Var sloc = g.param(expansion_.sigma_loc[static_cast<size_t>(r)]);
    ad::Var sls = g.param(expansion_.sigma_log_scale[static_cast<size_t>(r)]);
    ad::Var eloc = g.param(expansion_.ell_loc[static_cast<size_t>(r)]);
    ad::Var els = g.param(expansion_.ell_log_scale[static_cast<size_t>(r)]);

    ad::Var sigma = g.exp(g.add(
        sloc, g.smul(g.exp(sls), g.constant_scalar(rng.normal()))));
    ad::Var ell = g.exp(g.add(
        eloc, g.smul(g.exp(els), g.constant_scalar(rng.normal()))));
    if (result != nullptr) {
      result->sampled_sigma.push_back(sigma.scalar());
      result->sampled_ell.push_back(ell.scalar());
    }

    // log S_m = log(sigma^2 ell sqrt(2 pi)) - lambda_m ell^2 / 2, clamped
    // from below to keep exp(-log S) representable.
    ad::Var base = g.log(g.scale(g.cmul(g.square(sigma), ell), kSqrt2Pi));
    ad::Var log_s = g.sub(
        g.smul(base, g.constant(ones_row)),
        g.smul(g.scale(g.square(ell), 0.5), g.constant(lambda_row)));
    log_s = g.add_scalar(
        g.relu(g.add_scalar(log_s, -kLogPriorFloor)), kLogPriorFloor);

    ad::Var mean_p = g.param(expansion_.coefficient_means[
        static_cast<size_t>(r)]);
    ad::Var log_std_p = g.param(expansion_.coefficient_log_stds[
        static_cast<size_t>(r)]);
    ad::Var log_s_b = g.broadcast_row(log_s, d);
    ad::Var var_q = g.exp(g.scale(log_std_p, 2.0));
    ad::Var ratio = g.cmul(g.add(var_q, g.square(mean_p)),
                           g.exp(g.neg(log_s_b)));
    ad::Var inner = g.add(g.add_scalar(ratio, -1.0),
                          g.sub(log_s_b, g.scale(log_std_p, 2.0)));
    ad::Var kl_r = g.scale(g.sum(inner), 0.5);
    kl_coeff = (r == 0) ? kl_r : g.add(kl_coeff, kl_r);

    // KL(Lognormal(loc, scale) || Lognormal(0, 1)) for the hyper posteriors.
    auto lognormal_kl = [&g](ad::Var loc, ad::Var log_scale) {
      ad::Var term = g.add(g.exp(g.scale(log_scale, 2.0)), g.square(loc));
      return g.sub(g.scale(g.add_scalar(term, -1.0), 0.5), log_scale);
    };
    ad::Var ks = lognormal_kl(sloc, sls);
    ad::Var ke = lognormal_kl(eloc, els);
    kl_sigma = (r == 0) ? ks : g.add(kl_sigma, ks);
    kl_ell = (r == 0) ? ke : g.add(kl_ell, ke);
  }

  // Reconstruction: mc_samples reparameterized draws of the coefficients.
  ad::Var recon_sum;
  for (int s = 0; s < mc_samples; ++s) {
    ad::Var z;
    for (int r = 0; r < r_count; ++r) {
      ad::Var mean_p = g.param(expansion_.coefficient_means[
          static_cast<size_t>(r)]);
      ad::Var log_std_p = g.param(expansion_.coefficient_log_stds[
          static_cast<size_t>(r)]);
      ad::Var eps = g.constant(rng.normal_matrix(d, m));
      ad::Var a_sample = g.add(mean_p, g.cmul(g.exp(log_std_p), eps));
      ad::Var term = g.matmul(g.constant(phi[static_cast<size_t>(r)]),
                              g.transpose(a_sample));
      z = (r == 0) ? term : g.add(z, term);
    }
    ad::Var nll = decoder_batch_nll(g, decoder_, true, z, batch);
    ad::Var loglik = g.neg(g.sum(nll));
    recon_sum = (s == 0) ? loglik : g.add(recon_sum, loglik);
  }
  const double batch_scale = static_cast<double>(total_count) /
                             (static_cast<double>(batch.size()) *
                              static_cast<double>(mc_samples));
  ad::Var recon = g.scale(recon_sum, batch_scale);

  if (kl_scale != 1.0) {
    kl_coeff = g.scale(kl_coeff, kl_scale);
    kl_sigma = g.scale(kl_sigma, kl_scale);
    kl_ell = g.scale(kl_ell, kl_scale);
  }
  ad::Var elbo =
      g.sub(g.sub(g.sub(recon, kl_coeff), kl_sigma), kl_ell);

  if (result != nullptr) {
    result->elbo = elbo.scalar();
    result->reconstruction = recon.scalar();
    result->kl_coefficients = kl_coeff.scalar();
    result->kl_sigma = kl_sigma.scalar();
    result->kl_ell = kl_ell.scalar();
  }
  return elbo;
}

ElboResult LatentModel::elbo_with_gradients(
    const std::vector<DesignSequence>& batch,
    const std::vector<CovariateVector>& covariates, int mc_samples,
    int total_count, Rng& rng, double kl_scale) {
  ad::Graph g;
  ElboResult result;
  ad::Var elbo = elbo_graph(g, batch, covariates, mc_samples, total_count,
                            rng, &result, kl_scale);
  if (!std::isfinite(result.elbo)) {
    std::ostringstream msg;
    msg << "dgbfgp_elbo: non-finite value;"
        << " reconstruction=" << result.reconstruction
        << " kl_coefficients=" << result.kl_coefficients
        << " kl_sigma=" << result.kl_sigma << " kl_ell=" << result.kl_ell;
    throw std::runtime_error(msg.str());
  }
  ad::Var loss = g.neg(elbo);
  g.backward(loss);
  return result;
}

std::vector<ad::Parameter*> LatentModel::expansion_params() {
  std::vector<ad::Parameter*> out;
  for (auto& p : expansion_.coefficient_means) out.push_back(&p);
  for (auto& p : expansion_.coefficient_log_stds) out.push_back(&p);
  for (auto& p : expansion_.sigma_loc) out.push_back(&p);
  for (auto& p : expansion_.sigma_log_scale) out.push_back(&p);
  for (auto& p : expansion_.ell_loc) out.push_back(&p);
  for (auto& p : expansion_.ell_log_scale) out.push_back(&p);
  return out;
}

std::vector<ad::Parameter*> LatentModel::decoder_params() {
  return {&decoder_.embedding, &decoder_.latent_in, &decoder_.init_w,
          &decoder_.init_b,    &decoder_.gate_w,    &decoder_.gate_u,
          &decoder_.gate_b,    &decoder_.out_w,     &decoder_.out_b};
}

std::vector<ad::Parameter*> LatentModel::trainable_params() {
  std::vector<ad::Parameter*> out = expansion_params();
  for (ad::Parameter* p : decoder_params()) out.push_back(p);
  return out;
}

std::uint64_t LatentModel::parameter_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto absorb = [&h](const Eigen::MatrixXd& m) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    const size_t count = sizeof(double) * static_cast<size_t>(m.size());
    for (size_t i = 0; i < count; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  auto* self = const_cast<LatentModel*>(this);
  for (const ad::Parameter* p : self->trainable_params()) absorb(p->value);
  return h;
}

void LatentModel::save(const std::string& path) const {
  json j;
  j["magic"] = "DRIFTBO-LATENT-MODEL";
  j["version"] = 1;
  j["config"] = {{"alphabet_size", config_.alphabet_size},
                 {"max_length", config_.max_length},
                 {"latent_dim", config_.latent_dim},
                 {"num_features", config_.num_features},
                 {"domain_half_width", config_.domain_half_width},
                 {"time_covariate", config_.time_covariate},
                 {"eos_token", config_.eos_token},
                 {"decoder_hidden", config_.decoder_hidden},
                 {"decoder_embed", config_.decoder_embed}};
  j["scaler"] = {{"lower", matrix_to_json(scaler_.lower())},
                 {"upper", matrix_to_json(scaler_.upper())}};
  json expansion;
  auto dump_params = [](const std::vector<ad::Parameter>& ps) {
    json arr = json::array();
    for (const ad::Parameter& p : ps) arr.push_back(matrix_to_json(p.value));
    return arr;
  };
  expansion["coefficient_means"] = dump_params(expansion_.coefficient_means);
  expansion["coefficient_log_stds"] =
      dump_params(expansion_.coefficient_log_stds);
  expansion["sigma_loc"] = dump_params(expansion_.sigma_loc);
  expansion["sigma_log_scale"] = dump_params(expansion_.sigma_log_scale);
  expansion["ell_loc"] = dump_params(expansion_.ell_loc);
  expansion["ell_log_scale"] = dump_params(expansion_.ell_log_scale);
  j["expansion"] = std::move(expansion);
  j["decoder"] = {{"embedding", matrix_to_json(decoder_.embedding.value)},
                  {"latent_in", matrix_to_json(decoder_.latent_in.value)},
                  {"init_w", matrix_to_json(decoder_.init_w.value)},
                  {"init_b", matrix_to_json(decoder_.init_b.value)},
                  {"gate_w", matrix_to_json(decoder_.gate_w.value)},
                  {"gate_u", matrix_to_json(decoder_.gate_u.value)},
                  {"gate_b", matrix_to_json(decoder_.gate_b.value)},
                  {"out_w", matrix_to_json(decoder_.out_w.value)},
                  {"out_b", matrix_to_json(decoder_.out_b.value)}};
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("LatentModel::save: cannot open " + path);
  }
  out << j.dump(1) << "\n";
}

LatentModel LatentModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("LatentModel::load: cannot open " + path);
  }
  json j = json::parse(in);
  if (j.value("magic", "") != "DRIFTBO-LATENT-MODEL") {
    throw std::runtime_error("LatentModel::load: bad magic string");
  }
  if (j.value("version", -1) != 1) {
    throw std::runtime_error("LatentModel::load: unsupported version");
  }
  LatentModel model;
  const json& c = j.at("config");
  model.config_.alphabet_size = c.at("alphabet_size").get<int>();
  model.config_.max_length = c.at("max_length").get<int>();
  model.config_.latent_dim = c.at("latent_dim").get<int>();
  model.config_.num_features = c.at("num_features").get<int>();
  model.config_.domain_half_width = c.at("domain_half_width").get<double>();
  model.config_.time_covariate = c.at("time_covariate").get<bool>();
  model.config_.eos_token = c.at("eos_token").get<int>();
  model.config_.decoder_hidden = c.at("decoder_hidden").get<int>();
  model.config_.decoder_embed = c.at("decoder_embed").get<int>();
  model.config_.validate();
  model.scaler_ = CovariateScaler(
      matrix_from_json(j.at("scaler").at("lower")).col(0),
      matrix_from_json(j.at("scaler").at("upper")).col(0));
  auto load_params = [](const json& arr, const std::string& prefix) {
    std::vector<ad::Parameter> ps;
    for (size_t i = 0; i < arr.size(); ++i) {
      ps.emplace_back(matrix_from_json(arr.at(i)),
                      prefix + "_" + std::to_string(i));
    }
    return ps;
  };
  const json& e = j.at("expansion");
  model.expansion_.coefficient_means =
      load_params(e.at("coefficient_means"), "coef_mean");
  model.expansion_.coefficient_log_stds =
      load_params(e.at("coefficient_log_stds"), "coef_log_std");
  model.expansion_.sigma_loc = load_params(e.at("sigma_loc"), "sigma_loc");
  model.expansion_.sigma_log_scale =
      load_params(e.at("sigma_log_scale"), "sigma_log_scale");
  model.expansion_.ell_loc = load_params(e.at("ell_loc"), "ell_loc");
  model.expansion_.ell_log_scale =
      load_params(e.at("ell_log_scale"), "ell_log_scale");
  const json& dec = j.at("decoder");
  model.decoder_.embedding =
      ad::Parameter(matrix_from_json(dec.at("embedding")), "dec_embedding");
  model.decoder_.latent_in =
      ad::Parameter(matrix_from_json(dec.at("latent_in")), "dec_latent_in");
  model.decoder_.init_w =
      ad::Parameter(matrix_from_json(dec.at("init_w")), "dec_init_w");
  model.decoder_.init_b =
      ad::Parameter(matrix_from_json(dec.at("init_b")), "dec_init_b");
  model.decoder_.gate_w =
      ad::Parameter(matrix_from_json(dec.at("gate_w")), "dec_gate_w");
  model.decoder_.gate_u =
      ad::Parameter(matrix_from_json(dec.at("gate_u")), "dec_gate_u");
  model.decoder_.gate_b =
      ad::Parameter(matrix_from_json(dec.at("gate_b")), "dec_gate_b");
  model.decoder_.out_w =
      ad::Parameter(matrix_from_json(dec.at("out_w")), "dec_out_w");
  model.decoder_.out_b =
      ad::Parameter(matrix_from_json(dec.at("out_b")), "dec_out_b");
  model.decoder_.max_length = model.config_.max_length;
  model.decoder_.eos_token = model.config_.eos_token;
  return model;
}

double pretrain_latent_model(LatentModel& model,
                             const std::vector<DesignSequence>& corpus,
                             const PretrainConfig& config, Rng& rng) {
  if (corpus.empty()) {
    throw std::invalid_argument("pretrain_latent_model: empty corpus");
  }
  const bool uses_time = model.config().time_covariate;
  std::vector<CovariateVector> covariates;
  covariates.reserve(corpus.size());
  Rng stamp_rng = rng.fork("pretrain-time-stamps");
  for (const DesignSequence& x : corpus) {
    std::optional<double> t;
    if (uses_time) t = stamp_rng.uniform();
    covariates.push_back(model.covariates(x, t));
  }

  ad::Adam adam(model.trainable_params(), config.learning_rate);
  Rng step_rng = rng.fork("pretrain-steps");
  const int n = static_cast<int>(corpus.size());
  const int batch_size = std::min(config.minibatch, n);
  double last_elbo = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    std::vector<DesignSequence> batch(static_cast<size_t>(batch_size));
    std::vector<CovariateVector> batch_cov(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
      const int pick = step_rng.uniform_int(n);
      batch[static_cast<size_t>(i)] = corpus[static_cast<size_t>(pick)];
      batch_cov[static_cast<size_t>(i)] =
          covariates[static_cast<size_t>(pick)];
    }
    ad::Graph g;
    ElboResult result;
    ad::Var elbo = model.elbo_graph(g, batch, batch_cov, config.mc_samples, n,
                                    step_rng, &result, config.kl_scale);
    if (!std::isfinite(result.elbo)) {
      throw std::runtime_error("pretrain_latent_model: non-finite ELBO");
    }
    ad::Var loss = g.neg(elbo);
    if (config.scale_anchor_weight > 0.0 && batch_size >= 2) {
      ad::Var z = model.embeddings_graph(g, batch_cov, true);
      loss = g.add(loss, g.scale(latent_scale_loss_graph(g, z),
                                 config.scale_anchor_weight));
    }
    g.backward(loss);
    last_elbo = result.elbo;
    adam.step();
  }
  return -last_elbo;
}

}  // namespace driftbo
