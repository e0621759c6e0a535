#include "driftbo/gp_surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Dense>

#include "driftbo/linalg.hpp"

namespace driftbo {

void SurrogateDataset::validate() const {
  if (latents.rows() != values.size() || times.size() != values.size()) {
    throw std::invalid_argument("SurrogateDataset: row count mismatch");
  }
  if (!latents.allFinite() || !times.allFinite() || !values.allFinite()) {
    throw std::invalid_argument("SurrogateDataset: non-finite entries");
  }
}

PredictiveGaussian exact_gp_posterior(
    const SurrogateDataset& data, const Eigen::MatrixXd& query_points,
    const Eigen::VectorXd& query_times,
    const ProductSpaceTimeKernelParams& kernel, double noise_variance) {
  data.validate();
  kernel.validate();
  if (data.size() > 2000) {
    throw std::invalid_argument(
        "exact_gp_posterior: oracle restricted to <= 2000 points");
  }
  if (query_points.rows() != query_times.size()) {
    throw std::invalid_argument("exact_gp_posterior: query size mismatch");
  }
  PredictiveGaussian out;
  const Eigen::MatrixXd k_qq =
      product_space_time_gram(query_points, query_times, kernel);
  if (data.size() == 0) {
    out.mean = Eigen::VectorXd::Zero(query_points.rows());
    out.covariance = k_qq;
    return out;
  }
  Eigen::MatrixXd k_xx =
      product_space_time_gram(data.latents, data.times, kernel);
  k_xx.diagonal().array() += noise_variance;
  const CholeskyResult chol = cholesky_with_jitter(k_xx);
  const Eigen::MatrixXd k_qx = product_space_time_cross(
      query_points, query_times, data.latents, data.times, kernel);
  // alpha = (K + sigma^2 I)^{-1} y via two triangular solves.
  Eigen::VectorXd alpha = chol.L.triangularView<Eigen::Lower>().solve(
      data.values);
  chol.L.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha);
  out.mean = k_qx * alpha;
  Eigen::MatrixXd v =
      chol.L.triangularView<Eigen::Lower>().solve(k_qx.transpose());
  out.covariance = k_qq - v.transpose() * v;
  return out;
}

void SVGPConfig::validate() const {
  if (num_inducing < 1) {
    throw std::invalid_argument("SVGPConfig: num_inducing >= 1");
  }
  if (feature_hidden < 1 || feature_out < 1) {
    throw std::invalid_argument("SVGPConfig: feature dims >= 1");
  }
  if (!(init_noise_variance > 0.0)) {
    throw std::invalid_argument("SVGPConfig: init_noise_variance > 0");
  }
}

SpatioTemporalSVGP::SpatioTemporalSVGP(SVGPConfig config, int latent_dim,
                                       Rng& rng)
    : config_(config), latent_dim_(latent_dim) {
  config_.validate();
  const int h = config_.feature_hidden;
  const int out = config_.feature_out;
  auto scaled = [&rng](Eigen::Index rows, Eigen::Index cols, double fan_in) {
    return Eigen::MatrixXd(rng.normal_matrix(rows, cols) / std::sqrt(fan_in));
  };
  w1_ = ad::Parameter(scaled(h, latent_dim, latent_dim), "svgp_w1");
  b1_ = ad::Parameter(Eigen::MatrixXd::Zero(h, 1), "svgp_b1");
  w2_ = ad::Parameter(scaled(h, h, h), "svgp_w2");
  b2_ = ad::Parameter(Eigen::MatrixXd::Zero(h, 1), "svgp_b2");
  w3_ = ad::Parameter(scaled(out, h, h), "svgp_w3");
  b3_ = ad::Parameter(Eigen::MatrixXd::Zero(out, 1), "svgp_b3");
  inducing_ = ad::Parameter(
      0.5 * rng.normal_matrix(config_.num_inducing, joint_dim()),
      "svgp_inducing");
  mean_ = ad::Parameter(Eigen::MatrixXd::Zero(config_.num_inducing, 1),
                        "svgp_mean");
  chol_raw_ = ad::Parameter(
      Eigen::MatrixXd::Zero(config_.num_inducing, config_.num_inducing),
      "svgp_chol_raw");
  log_spatial_variance_ =
      ad::Parameter(Eigen::MatrixXd::Zero(1, 1), "svgp_log_sv");
  log_spatial_lengthscale_ = ad::Parameter(
      Eigen::MatrixXd::Constant(1, 1,
                                std::log(config_.init_spatial_lengthscale)),
      "svgp_log_sl");
  log_temporal_lengthscale_ = ad::Parameter(
      Eigen::MatrixXd::Constant(1, 1,
                                std::log(config_.init_temporal_lengthscale)),
      "svgp_log_tl");
  noise_raw_ = ad::Parameter(
      Eigen::MatrixXd::Constant(
          1, 1, std::log(config_.init_noise_variance - 1e-6)),
      "svgp_noise_raw");
}

Eigen::MatrixXd SpatioTemporalSVGP::map_features(
    const Eigen::MatrixXd& latents) const {
  Eigen::MatrixXd h1 =
      ((latents * w1_.value.transpose()).rowwise() +
       b1_.value.col(0).transpose())
          .array()
          .tanh();
  Eigen::MatrixXd h2 =
      ((h1 * w2_.value.transpose()).rowwise() + b2_.value.col(0).transpose())
          .array()
          .tanh();
  return (h2 * w3_.value.transpose()).rowwise() +
         b3_.value.col(0).transpose();
}

Eigen::MatrixXd SpatioTemporalSVGP::joint_inputs(
    const Eigen::MatrixXd& latents, const Eigen::VectorXd& times) const {
  const Eigen::MatrixXd feats = map_features(latents);
  if (!config_.use_time) return feats;
  Eigen::MatrixXd joint(feats.rows(), feats.cols() + 1);
  joint.leftCols(feats.cols()) = feats;
  joint.rightCols(1) = times;
  return joint;
}

ProductSpaceTimeKernelParams SpatioTemporalSVGP::kernel_params() const {
  ProductSpaceTimeKernelParams p;
  p.spatial.variance = std::exp(log_spatial_variance_.value(0, 0));
  p.spatial.lengthscale = std::exp(log_spatial_lengthscale_.value(0, 0));
  p.temporal.variance = 1.0;
  p.temporal.lengthscale = std::exp(log_temporal_lengthscale_.value(0, 0));
  return p;
}

double SpatioTemporalSVGP::noise_variance() const {
  return 1e-6 + std::exp(noise_raw_.value(0, 0));
}

Eigen::MatrixXd SpatioTemporalSVGP::variational_chol() const {
  Eigen::MatrixXd c = chol_raw_.value.triangularView<Eigen::StrictlyLower>();
  c.diagonal() = chol_raw_.value.diagonal().array().exp();
  return c;
}

void SpatioTemporalSVGP::reset_variational() {
  mean_.value.setZero();
  chol_raw_.value.setZero();  // diag exp(0) = 1: whitened prior
}

double SpatioTemporalSVGP::variational_kl() const {
  const Eigen::MatrixXd c = variational_chol();
  return 0.5 * (c.squaredNorm() + mean_.value.squaredNorm() -
                config_.num_inducing) -
         chol_raw_.value.diagonal().sum();
}

void SpatioTemporalSVGP::initialize_inducing(const SurrogateDataset& data,
                                             Rng& rng) {
  data.validate();
  if (data.size() == 0) {
    throw std::invalid_argument("initialize_inducing: empty dataset");
  }
  const Eigen::MatrixXd joint = joint_inputs(data.latents, data.times);
  const Eigen::Index n = joint.rows();
  const int m = config_.num_inducing;
  Eigen::MatrixXd centers(m, joint.cols());
  // k-means++ seeding; with fewer points than centers, cycle with noise.
  std::vector<Eigen::Index> chosen;
  chosen.push_back(rng.uniform_int(static_cast<int>(n)));
  centers.row(0) = joint.row(chosen[0]);
  Eigen::VectorXd dist2 =
      (joint.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < m; ++k) {
    const double total = dist2.sum();
    Eigen::Index pick;
    if (total <= 0.0 || k >= n) {
      pick = static_cast<Eigen::Index>(rng.uniform_int(static_cast<int>(n)));
      centers.row(k) =
          joint.row(pick) +
          0.01 * rng.normal_matrix(1, joint.cols());
      continue;
    }
    double target = rng.uniform() * total;
    pick = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      target -= dist2(i);
      if (target <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.row(k) = joint.row(pick);
    dist2 = dist2.cwiseMin(
        (joint.rowwise() - centers.row(k)).rowwise().squaredNorm());
  }
  inducing_.value = centers;
  reset_variational();
}

void SpatioTemporalSVGP::set_variational_from_exact(
    const SurrogateDataset& data) {
  data.validate();
  if (data.size() != inducing_.value.rows()) {
    throw std::invalid_argument(
        "set_variational_from_exact: inducing count must equal data size");
  }
  const ProductSpaceTimeKernelParams kp = kernel_params();
  const Eigen::MatrixXd joint = joint_inputs(data.latents, data.times);
  inducing_.value = joint;
  const Eigen::MatrixXd feats = joint.leftCols(config_.feature_out);
  Eigen::VectorXd times = config_.use_time
                              ? Eigen::VectorXd(joint.rightCols(1))
                              : Eigen::VectorXd::Zero(joint.rows());
  const Eigen::MatrixXd k_uu = product_space_time_gram(feats, times, kp);
  Eigen::MatrixXd k_noisy = k_uu;
  k_noisy.diagonal().array() += noise_variance();
  const CholeskyResult chol_noisy = cholesky_with_jitter(k_noisy);
  // Exact posterior over the training inputs.
  Eigen::VectorXd alpha =
      chol_noisy.L.triangularView<Eigen::Lower>().solve(data.values);
  chol_noisy.L.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha);
  const Eigen::VectorXd post_mean = k_uu * alpha;
  Eigen::MatrixXd v =
      chol_noisy.L.triangularView<Eigen::Lower>().solve(k_uu);
  Eigen::MatrixXd post_cov = k_uu - v.transpose() * v;
  // Whitened: m_w = L^{-1} m, S_w = L^{-1} S L^{-T}.
  const CholeskyResult chol_prior = cholesky_with_jitter(k_uu);
  Eigen::VectorXd m_w =
      chol_prior.L.triangularView<Eigen::Lower>().solve(post_mean);
  Eigen::MatrixXd s_w = chol_prior.L.triangularView<Eigen::Lower>().solve(
      post_cov);
  s_w = chol_prior.L.triangularView<Eigen::Lower>()
            .solve(s_w.transpose())
            .transpose();
  s_w = 0.5 * (s_w + s_w.transpose());
  const CholeskyResult chol_sw = cholesky_with_jitter(s_w);
  mean_.value = m_w;
  Eigen::MatrixXd raw = chol_sw.L;
  raw.diagonal() = chol_sw.L.diagonal().array().log();
  chol_raw_.value =
      Eigen::MatrixXd(raw.triangularView<Eigen::Lower>());
}

ad::Var SpatioTemporalSVGP::features_graph(ad::Graph& g, ad::Var latents,
                                           bool trainable) {
  auto bind = [&](ad::Parameter& p) {
    return trainable ? g.param(p) : g.constant(p.value);
  };
  const Eigen::Index n = latents.rows();
  ad::Var h1 = g.tanh(g.add(g.matmul(latents, g.transpose(bind(w1_))),
                            g.broadcast_row(g.transpose(bind(b1_)), n)));
  ad::Var h2 = g.tanh(g.add(g.matmul(h1, g.transpose(bind(w2_))),
                            g.broadcast_row(g.transpose(bind(b2_)), n)));
  return g.add(g.matmul(h2, g.transpose(bind(w3_))),
               g.broadcast_row(g.transpose(bind(b3_)), n));
}

ad::Var SpatioTemporalSVGP::kernel_matrix_graph(ad::Graph& g, ad::Var a,
                                                ad::Var b, ad::Var log_sv,
                                                ad::Var log_sl,
                                                ad::Var log_tl) {
  const Eigen::Index na = a.rows();
  const Eigen::Index nb = b.rows();
  const Eigen::Index fdim = config_.feature_out;
  auto sqdist = [&](ad::Var x, ad::Var y) {
    ad::Var rx = g.row_sums(g.square(x));
    ad::Var ry = g.row_sums(g.square(y));
    ad::Var cross = g.matmul(x, g.transpose(y));
    return g.sub(g.add(g.broadcast_col(rx, nb),
                       g.broadcast_row(g.transpose(ry), na)),
                 g.scale(cross, 2.0));
  };
  ad::Var sa = g.block(a, 0, 0, na, fdim);
  ad::Var sb = g.block(b, 0, 0, nb, fdim);
  ad::Var d2_spatial = sqdist(sa, sb);
  ad::Var factor_s =
      g.scale(g.exp(g.scale(log_sl, -2.0)), -0.5);  // -1/(2 ell^2)
  ad::Var expo = g.smul(factor_s, d2_spatial);
  if (config_.use_time) {
    ad::Var ta = g.block(a, 0, fdim, na, 1);
    ad::Var tb = g.block(b, 0, fdim, nb, 1);
    ad::Var d2_time = sqdist(ta, tb);
    ad::Var factor_t = g.scale(g.exp(g.scale(log_tl, -2.0)), -0.5);
    expo = g.add(expo, g.smul(factor_t, d2_time));
  }
  return g.smul(g.exp(log_sv), g.exp(expo));
}

ad::Var SpatioTemporalSVGP::elbo_fragment(ad::Graph& g, ad::Var latents,
                                          const Eigen::VectorXd& times,
                                          const Eigen::VectorXd& values,
                                          int full_count, bool trainable) {
  const Eigen::Index n = latents.rows();
  if (times.size() != n || values.size() != n) {
    throw std::invalid_argument("elbo_fragment: size mismatch");
  }
  auto bind = [&](ad::Parameter& p) {
    return trainable ? g.param(p) : g.constant(p.value);
  };
  ad::Var feats = features_graph(g, latents, trainable);
  ad::Var inputs = config_.use_time
                       ? g.hcat(feats, g.constant(times))
                       : feats;
  ad::Var u = bind(inducing_);
  ad::Var log_sv = bind(log_spatial_variance_);
  ad::Var log_sl = bind(log_spatial_lengthscale_);
  ad::Var log_tl = bind(log_temporal_lengthscale_);

  ad::Var k_uu = kernel_matrix_graph(g, u, u, log_sv, log_sl, log_tl);
  // Pick the jitter that makes the current K_UU factorizable, then insert it
  // as a constant so the graph stays differentiable.
  const CholeskyResult probe = cholesky_with_jitter(k_uu.value());
  Eigen::MatrixXd jitter_eye = Eigen::MatrixXd::Identity(
      k_uu.rows(), k_uu.cols());
  jitter_eye *= probe.jitter;
  ad::Var l_uu = g.cholesky(g.add(k_uu, g.constant(jitter_eye)));

  ad::Var k_ux = kernel_matrix_graph(g, u, inputs, log_sv, log_sl, log_tl);
  ad::Var a = g.trisolve_lower(l_uu, k_ux);  // M_u x n

  ad::Var m = bind(mean_);
  ad::Var raw = bind(chol_raw_);
  ad::Var c = g.add(g.lower_triangle(raw, true),
                    g.diag_matrix(g.exp(g.diag_vector(raw))));

  ad::Var mu = g.matmul(g.transpose(a), m);  // n x 1
  ad::Var k_diag = g.smul(g.exp(log_sv),
                          g.constant(Eigen::MatrixXd::Ones(n, 1)));
  ad::Var a_sq = g.transpose(g.col_sums(g.square(a)));
  ad::Var ca = g.matmul(g.transpose(c), a);
  ad::Var ca_sq = g.transpose(g.col_sums(g.square(ca)));
  ad::Var q_var = g.add(g.sub(k_diag, a_sq), ca_sq);

  ad::Var noise = g.add_scalar(g.exp(bind(noise_raw_)), 1e-6);
  ad::Var resid = g.sub(g.constant(values), mu);
  ad::Var quad = g.add(g.square(resid), q_var);
  ad::Var inv_noise = g.cdiv(g.constant_scalar(1.0), noise);
  ad::Var log_term = g.scale(g.log(g.scale(noise, 2.0 * M_PI)), -0.5);
  ad::Var per_point = g.sub(
      g.smul(log_term, g.constant(Eigen::MatrixXd::Ones(n, 1))),
      g.smul(g.scale(inv_noise, 0.5), quad));
  ad::Var likelihood = g.scale(
      g.sum(per_point), static_cast<double>(full_count) /
                            static_cast<double>(n));

  ad::Var kl = g.sub(
      g.scale(g.add_scalar(g.add(g.sum(g.square(c)), g.sum(g.square(m))),
                           -static_cast<double>(config_.num_inducing)),
              0.5),
      g.sum(g.diag_vector(raw)));

  return g.sub(likelihood, kl);
}

double SpatioTemporalSVGP::elbo_value(const SurrogateDataset& data) {
  data.validate();
  ad::Graph g;
  ad::Var elbo = elbo_fragment(g, g.constant(data.latents), data.times,
                               data.values, static_cast<int>(data.size()),
                               false);
  return elbo.scalar();
}

double SpatioTemporalSVGP::elbo_with_gradients(
    const SurrogateDataset& data, const std::vector<int>& minibatch) {
  data.validate();
  if (minibatch.empty()) {
    throw std::invalid_argument("elbo_with_gradients: empty minibatch");
  }
  Eigen::MatrixXd z(static_cast<Eigen::Index>(minibatch.size()),
                    data.latents.cols());
  Eigen::VectorXd t(static_cast<Eigen::Index>(minibatch.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(minibatch.size()));
  for (size_t i = 0; i < minibatch.size(); ++i) {
    z.row(static_cast<Eigen::Index>(i)) = data.latents.row(minibatch[i]);
    t(static_cast<Eigen::Index>(i)) = data.times(minibatch[i]);
    y(static_cast<Eigen::Index>(i)) = data.values(minibatch[i]);
  }
  ad::Graph g;
  ad::Var elbo = elbo_fragment(g, g.constant(z), t, y,
                               static_cast<int>(data.size()), true);
  const double value = elbo.scalar();
  g.backward(g.neg(elbo));
  return value;
}

SVGPFitResult SpatioTemporalSVGP::fit(const SurrogateDataset& data, int steps,
                                      double learning_rate, int minibatch_size,
                                      Rng& rng) {
  data.validate();
  if (data.size() == 0) {
    throw std::invalid_argument("fit: empty dataset");
  }
  SVGPFitResult result;
  result.initial_elbo = elbo_value(data);
  if (steps == 0) {
    result.final_elbo = result.initial_elbo;
    return result;
  }
  const std::vector<ad::Parameter*> ps = params();
  const std::vector<Eigen::MatrixXd> initial = ad::snapshot_values(ps);
  std::vector<Eigen::MatrixXd> last_finite = initial;
  ad::Adam adam(ps, learning_rate);
  const int n = static_cast<int>(data.size());
  const int batch = std::min(minibatch_size, n);
  for (int step = 0; step < steps; ++step) {
    std::vector<int> idx(static_cast<size_t>(batch));
    for (int i = 0; i < batch; ++i) idx[static_cast<size_t>(i)] =
        rng.uniform_int(n);
    double value;
    try {
      value = elbo_with_gradients(data, idx);
    } catch (const std::runtime_error&) {
      ad::restore_values(ps, last_finite);
      throw;
    }
    if (!std::isfinite(value)) {
      ad::restore_values(ps, last_finite);
      throw std::runtime_error("SpatioTemporalSVGP::fit: ELBO diverged");
    }
    last_finite = ad::snapshot_values(ps);
    adam.step();
    ++result.steps_run;
  }
  result.final_elbo = elbo_value(data);
  if (!std::isfinite(result.final_elbo)) {
    ad::restore_values(ps, last_finite);
    result.final_elbo = elbo_value(data);
  }
  const double floor =
      result.initial_elbo - 0.05 * std::abs(result.initial_elbo);
  if (result.final_elbo < floor) {
    ad::restore_values(ps, initial);
    result.final_elbo = result.initial_elbo;
    result.rolled_back = true;
  }
  return result;
}

PredictiveGaussian SpatioTemporalSVGP::predict(
    const Eigen::MatrixXd& query_latents, double query_time) const {
  return predict(query_latents,
                 Eigen::VectorXd::Constant(query_latents.rows(), query_time));
}

PredictiveGaussian SpatioTemporalSVGP::predict(
    const Eigen::MatrixXd& query_latents,
    const Eigen::VectorXd& query_times) const {
  const ProductSpaceTimeKernelParams kp = kernel_params();
  const Eigen::MatrixXd joint_q = joint_inputs(query_latents, query_times);
  const Eigen::MatrixXd& u = inducing_.value;
  const Eigen::Index fdim = config_.feature_out;
  auto split_feats = [&](const Eigen::MatrixXd& j) {
    return Eigen::MatrixXd(j.leftCols(fdim));
  };
  auto split_times = [&](const Eigen::MatrixXd& j) {
    return config_.use_time ? Eigen::VectorXd(j.rightCols(1))
                            : Eigen::VectorXd::Zero(j.rows());
  };
  const Eigen::MatrixXd k_uu =
      product_space_time_gram(split_feats(u), split_times(u), kp);
  const CholeskyResult chol = cholesky_with_jitter(k_uu);
  const Eigen::MatrixXd k_qu = product_space_time_cross(
      split_feats(joint_q), split_times(joint_q), split_feats(u),
      split_times(u), kp);
  // psi = K_qU L^{-T}
  Eigen::MatrixXd psi = chol.L.triangularView<Eigen::Lower>()
                            .solve(k_qu.transpose())
                            .transpose();
  const Eigen::MatrixXd c = variational_chol();
  PredictiveGaussian out;
  out.mean = psi * mean_.value.col(0);
  const Eigen::MatrixXd k_qq =
      product_space_time_gram(split_feats(joint_q), split_times(joint_q), kp);
  const Eigen::MatrixXd pc = psi * c;
  out.covariance = k_qq - psi * psi.transpose() + pc * pc.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

Eigen::MatrixXd SpatioTemporalSVGP::thompson_sample_values(
    const Eigen::MatrixXd& candidates, double time_now, int num_draws,
    Rng& rng) const {
  const Eigen::Index n = candidates.rows();
  // Collapse exact duplicate rows so correlated joint sampling assigns them
  // identical values.
  std::vector<Eigen::Index> unique_rows;
  std::vector<Eigen::Index> to_unique(n);
  {
    std::unordered_map<std::string, Eigen::Index> seen;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::string key;
      key.resize(sizeof(double) * static_cast<size_t>(candidates.cols()));
      Eigen::RowVectorXd row = candidates.row(i);
      std::memcpy(key.data(), row.data(), key.size());
      auto [it, inserted] = seen.try_emplace(
          key, static_cast<Eigen::Index>(unique_rows.size()));
      if (inserted) unique_rows.push_back(i);
      to_unique[static_cast<size_t>(i)] = it->second;
    }
  }
  Eigen::MatrixXd unique(static_cast<Eigen::Index>(unique_rows.size()),
                         candidates.cols());
  for (size_t k = 0; k < unique_rows.size(); ++k) {
    unique.row(static_cast<Eigen::Index>(k)) = candidates.row(unique_rows[k]);
  }
  const PredictiveGaussian post = predict(unique, time_now);
  const CholeskyResult chol = cholesky_with_jitter(post.covariance);
  Eigen::MatrixXd values(num_draws, n);
  for (int b = 0; b < num_draws; ++b) {
    const Eigen::VectorXd draw =
        post.mean + chol.L * rng.normal_vector(unique.rows());
    for (Eigen::Index i = 0; i < n; ++i) {
      values(b, i) = draw(to_unique[static_cast<size_t>(i)]);
    }
  }
  return values;
}

std::vector<int> SpatioTemporalSVGP::thompson_sample_batch(
    const Eigen::MatrixXd& candidates, double time_now, int batch_size,
    Rng& rng) const {
  if (candidates.rows() < batch_size) {
    throw std::invalid_argument(
        "thompson_sample_batch: fewer candidates than batch_size");
  }
  const Eigen::MatrixXd values =
      thompson_sample_values(candidates, time_now, batch_size, rng);
  std::vector<int> selected;
  selected.reserve(static_cast<size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    Eigen::Index best = 0;
    values.row(b).maxCoeff(&best);
    selected.push_back(static_cast<int>(best));
  }
  return selected;
}

std::vector<ad::Parameter*> SpatioTemporalSVGP::params() {
  std::vector<ad::Parameter*> out = {
      &w1_, &b1_, &w2_, &b2_, &w3_, &b3_, &inducing_, &mean_, &chol_raw_,
      &log_spatial_variance_, &log_spatial_lengthscale_, &noise_raw_};
  if (config_.use_time) out.push_back(&log_temporal_lengthscale_);
  return out;
}

}  // namespace driftbo
