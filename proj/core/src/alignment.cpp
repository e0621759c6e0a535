#include "driftbo/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "driftbo/stats.hpp"

namespace driftbo {
namespace {

// Slopes for all ordered pairs i != j, with the coincident-pair rule applied.
// Returns the slope matrix (diagonal zero) and sets *warning when a pair with
// zero latent distance carries distinct values.
Eigen::MatrixXd slope_matrix(const Eigen::MatrixXd& latents,
                             const Eigen::VectorXd& values, bool* warning) {
  const Eigen::Index n = latents.rows();
  Eigen::MatrixXd slopes = Eigen::MatrixXd::Zero(n, n);
  double largest_finite = 0.0;
  bool saw_coincident = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dist = (latents.row(i) - latents.row(j)).norm();
      const double dy = std::abs(values(i) - values(j));
      if (dist > 0.0) {
        slopes(i, j) = dy / dist;
        largest_finite = std::max(largest_finite, slopes(i, j));
      } else if (dy != 0.0) {
        slopes(i, j) = std::numeric_limits<double>::quiet_NaN();  // fix below
        saw_coincident = true;
      }
    }
  }
  if (saw_coincident) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::isnan(slopes(i, j))) slopes(i, j) = largest_finite;
      }
    }
    if (warning != nullptr) *warning = true;
  }
  return slopes;
}

}  // namespace

void AlignmentBatch::validate() const {
  const Eigen::Index n = latents.rows();
  if (n < 2) {
    throw std::invalid_argument("AlignmentBatch: needs at least two rows");
  }
  if (values.size() != n || weights.size() != n) {
    throw std::invalid_argument("AlignmentBatch: size mismatch");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(weights(i) > 0.0)) {
      throw std::invalid_argument("AlignmentBatch: weights must be positive");
    }
  }
}

void InversionConfig::validate() const {
  if (!(step_size > 0.0) && step_size != 0.0) {
    throw std::invalid_argument("InversionConfig: step_size must be >= 0");
  }
  if (max_steps < 0) {
    throw std::invalid_argument("InversionConfig: max_steps must be >= 0");
  }
  if (distance_tolerance < 0.0 || distance_tolerance > 1.0) {
    throw std::invalid_argument(
        "InversionConfig: distance_tolerance in [0, 1]");
  }
}

Eigen::VectorXd importance_weights(const Eigen::VectorXd& values,
                                   double quantile, double smoothing) {
  if (values.size() < 1) {
    throw std::invalid_argument("importance_weights: empty values");
  }
  if (!(smoothing > 0.0)) {
    throw std::invalid_argument("importance_weights: smoothing must be > 0");
  }
  std::vector<double> sample(values.data(), values.data() + values.size());
  const double y_q = nearest_rank_quantile(sample, quantile);
  Eigen::VectorXd w(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    w(i) = 1.0 - normal_cdf((y_q - values(i)) / smoothing);
  }
  return w;
}

Eigen::VectorXd default_importance_weights(const Eigen::VectorXd& values) {
  std::vector<double> sample(values.data(), values.data() + values.size());
  const double smoothing = std::max(sample_std(sample), 1e-6);
  return importance_weights(values, 0.5, smoothing);
}

double lipschitz_loss(const AlignmentBatch& batch, bool* coincident_warning) {
  batch.validate();
  const Eigen::Index n = batch.latents.rows();
  if (coincident_warning != nullptr) *coincident_warning = false;
  const Eigen::MatrixXd slopes =
      slope_matrix(batch.latents, batch.values, coincident_warning);
  std::vector<double> off_diag;
  off_diag.reserve(static_cast<size_t>(n * (n - 1)));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) off_diag.push_back(slopes(i, j));
    }
  }
  const double level = median(off_diag);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double excess = slopes(i, j) - level;
      if (excess > 0.0) {
        loss += std::sqrt(batch.weights(i) * batch.weights(j)) * excess;
      }
    }
  }
  return loss / static_cast<double>(n * n);
}

double expected_normal_pair_distance(int d) {
  if (d < 1) {
    throw std::invalid_argument("expected_normal_pair_distance: d >= 1");
  }
  const double half = 0.5 * d;
  return 2.0 * std::exp(std::lgamma(half + 0.5) - std::lgamma(half));
}

double latent_scale_loss(const Eigen::MatrixXd& latents) {
  const Eigen::Index n = latents.rows();
  if (n < 2) {
    throw std::invalid_argument("latent_scale_loss: needs at least two rows");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;  // diagonal terms are exact zeros
      total += (latents.row(i) - latents.row(j)).norm();
    }
  }
  const double mean_dist = total / static_cast<double>(n * n);
  return std::abs(mean_dist -
                  expected_normal_pair_distance(
                      static_cast<int>(latents.cols())));
}

namespace {

// Pairwise distance matrix in-graph, diagonal masked to exact zero.
ad::Var pairwise_distances_graph(ad::Graph& g, ad::Var latents) {
  const Eigen::Index n = latents.rows();
  ad::Var sq = g.row_sums(g.square(latents));  // n x 1
  ad::Var gramed = g.matmul(latents, g.transpose(latents));
  ad::Var d2 = g.sub(g.add(g.broadcast_col(sq, n),
                           g.broadcast_row(g.transpose(sq), n)),
                     g.scale(gramed, 2.0));
  Eigen::MatrixXd off_diag_mask = Eigen::MatrixXd::Ones(n, n);
  off_diag_mask.diagonal().setZero();
  return g.sqrt0(g.cmul(d2, g.constant(off_diag_mask)));
}

}  // namespace

ad::Var lipschitz_loss_graph(ad::Graph& g, ad::Var latents,
                             const Eigen::VectorXd& values,
                             const Eigen::VectorXd& weights) {
  const Eigen::Index n = latents.rows();
  if (n < 2) {
    throw std::invalid_argument("lipschitz_loss_graph: needs >= 2 rows");
  }
  ad::Var dist = pairwise_distances_graph(g, latents);

  // Classify pairs from the eagerly available distance values so the graph
  // reproduces the plain implementation's coincident-pair rule.
  const Eigen::MatrixXd& dval = dist.value();
  std::vector<std::pair<int, int>> regular;
  std::vector<std::pair<int, int>> coincident;
  double largest_finite = 0.0;
  std::pair<int, int> largest_pair{-1, -1};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dy = std::abs(values(i) - values(j));
      if (dval(i, j) > 0.0) {
        const double s = dy / dval(i, j);
        if (s > largest_finite) {
          largest_finite = s;
          largest_pair = {static_cast<int>(i), static_cast<int>(j)};
        }
        regular.emplace_back(static_cast<int>(i), static_cast<int>(j));
      } else if (dy != 0.0) {
        coincident.emplace_back(static_cast<int>(i), static_cast<int>(j));
      } else {
        regular.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }

  Eigen::MatrixXd dy_abs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      dy_abs(i, j) = std::abs(values(i) - values(j));
    }
  }

  // Regular pairs: |dy| / dist. Zero-distance pairs with equal values give
  // 0/0; pin them to zero by dividing 0 by 1 instead.
  std::vector<std::pair<int, int>> all_pairs = regular;
  Eigen::MatrixXd numer(static_cast<Eigen::Index>(regular.size()), 1);
  for (size_t k = 0; k < regular.size(); ++k) {
    numer(static_cast<Eigen::Index>(k), 0) =
        dy_abs(regular[k].first, regular[k].second);
  }
  ad::Var denom = g.gather_elements(dist, regular);
  // Guard exact-zero denominators (equal-value coincident pairs).
  Eigen::MatrixXd guard(denom.rows(), 1);
  for (Eigen::Index k = 0; k < denom.rows(); ++k) {
    guard(k, 0) = denom.value()(k, 0) > 0.0 ? 0.0 : 1.0;
  }
  denom = g.add(denom, g.constant(guard));
  ad::Var slopes = g.cdiv(g.constant(numer), denom);

  // Build the full ordered-pair slope vector, substituting the largest finite
  // slope (as a graph value, so gradients flow through it) for coincident
  // pairs with distinct values.
  std::vector<ad::Var> pieces;
  pieces.push_back(slopes);
  if (!coincident.empty()) {
    ad::Var repl;
    if (largest_pair.first >= 0) {
      std::vector<std::pair<int, int>> lp(coincident.size(), largest_pair);
      Eigen::MatrixXd lnum(static_cast<Eigen::Index>(coincident.size()), 1);
      lnum.setConstant(dy_abs(largest_pair.first, largest_pair.second));
      repl = g.cdiv(g.constant(lnum), g.gather_elements(dist, lp));
    } else {
      repl = g.constant(Eigen::MatrixXd::Zero(
          static_cast<Eigen::Index>(coincident.size()), 1));
    }
    pieces.push_back(repl);
    for (const auto& p : coincident) all_pairs.push_back(p);
  }
  ad::Var all_slopes = pieces.size() == 1
                           ? pieces[0]
                           : g.transpose(g.hcat(g.transpose(pieces[0]),
                                                g.transpose(pieces[1])));

  // Median with the even-count convention, flowing gradient to the selected
  // order statistics.
  const Eigen::MatrixXd& sval = all_slopes.value();
  std::vector<int> order(static_cast<size_t>(sval.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return sval(a, 0) < sval(b, 0);
  });
  const size_t count = order.size();
  ad::Var level;
  if (count % 2 == 1) {
    level = g.gather_rows(all_slopes, {order[count / 2]});
  } else {
    ad::Var two = g.gather_rows(
        all_slopes, {order[count / 2 - 1], order[count / 2]});
    level = g.scale(g.sum(two), 0.5);
  }

  Eigen::MatrixXd pair_weights(static_cast<Eigen::Index>(all_pairs.size()), 1);
  for (size_t k = 0; k < all_pairs.size(); ++k) {
    pair_weights(static_cast<Eigen::Index>(k), 0) = std::sqrt(
        weights(all_pairs[k].first) * weights(all_pairs[k].second));
  }
  ad::Var excess = g.relu(g.sub(
      all_slopes,
      g.smul(level, g.constant(Eigen::MatrixXd::Ones(
                        static_cast<Eigen::Index>(all_pairs.size()), 1)))));
  ad::Var weighted = g.cmul(excess, g.constant(pair_weights));
  return g.scale(g.sum(weighted), 1.0 / static_cast<double>(n * n));
}

ad::Var latent_scale_loss_graph(ad::Graph& g, ad::Var latents) {
  const Eigen::Index n = latents.rows();
  if (n < 2) {
    throw std::invalid_argument("latent_scale_loss_graph: needs >= 2 rows");
  }
  ad::Var dist = pairwise_distances_graph(g, latents);
  ad::Var mean_dist = g.scale(g.sum(dist), 1.0 / static_cast<double>(n * n));
  const double c_d =
      expected_normal_pair_distance(static_cast<int>(latents.cols()));
  return g.abs(g.add_scalar(mean_dist, -c_d));
}

std::vector<InversionResult> invert_latent_batch(
    const std::vector<DesignSequence>& designs, const Eigen::MatrixXd& z_init,
    DecoderParams& theta, const InversionConfig& config) {
  config.validate();
  const auto n = static_cast<Eigen::Index>(designs.size());
  if (z_init.rows() != n) {
    throw std::invalid_argument("invert_latent_batch: one row per design");
  }
  std::vector<InversionResult> results(designs.size());
  std::vector<int> active;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& r = results[static_cast<size_t>(i)];
    r.code = z_init.row(i).transpose();
    const DesignSequence decoded = decode_argmax(r.code, theta);
    if (design_distance(designs[static_cast<size_t>(i)], decoded) <=
        config.distance_tolerance) {
      r.converged = true;
      r.steps_used = 0;
    } else {
      active.push_back(static_cast<int>(i));
    }
  }

  for (int step = 1; step <= config.max_steps && !active.empty(); ++step) {
    Eigen::MatrixXd z_active(static_cast<Eigen::Index>(active.size()),
                             z_init.cols());
    std::vector<DesignSequence> batch(active.size());
    for (size_t k = 0; k < active.size(); ++k) {
      z_active.row(static_cast<Eigen::Index>(k)) =
          results[static_cast<size_t>(active[k])].code.transpose();
      batch[k] = designs[static_cast<size_t>(active[k])];
    }
    ad::Graph g;
    ad::Parameter z_param(z_active, "inversion_z");
    ad::Var z_var = g.param(z_param);
    ad::Var nll = decoder_batch_nll(g, theta, false, z_var, batch);
    const bool finite_loss = nll.value().allFinite();
    if (finite_loss) {
      g.backward(g.sum(nll));
    }

    std::vector<int> still_active;
    for (size_t k = 0; k < active.size(); ++k) {
      auto& r = results[static_cast<size_t>(active[k])];
      const Eigen::VectorXd grad =
          z_param.grad.row(static_cast<Eigen::Index>(k)).transpose();
      if (!finite_loss || !grad.allFinite()) {
        r.code = z_init.row(active[k]).transpose();
        r.converged = false;
        r.steps_used = step - 1;
        continue;
      }
      r.code -= config.step_size * grad;
      r.steps_used = step;
      const DesignSequence decoded = decode_argmax(r.code, theta);
      if (design_distance(designs[static_cast<size_t>(active[k])], decoded) <=
          config.distance_tolerance) {
        r.converged = true;
      } else {
        still_active.push_back(active[k]);
      }
    }
    active = std::move(still_active);
  }
  return results;
}

InversionResult invert_latent(const DesignSequence& x,
                              const LatentCode& z_init, DecoderParams& theta,
                              const InversionConfig& config) {
  Eigen::MatrixXd z(1, z_init.size());
  z.row(0) = z_init.transpose();
  return invert_latent_batch({x}, z, theta, config).front();
}

}  // namespace driftbo
