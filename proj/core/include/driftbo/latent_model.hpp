#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "driftbo/ad.hpp"
#include "driftbo/design.hpp"
#include "driftbo/kernels.hpp"
#include "driftbo/rng.hpp"

namespace driftbo {

using LatentCode = Eigen::VectorXd;

// Covariates of one design at one time, normalized to [-1, 1].
struct CovariateVector {
  Eigen::VectorXd values;
  bool includes_time = false;
  int time_index = -1;  // position of the time covariate when present
};

struct LatentModelConfig {
  int alphabet_size = 8;  // V
  int max_length = 16;    // L_max
  int latent_dim = 8;     // d
  int num_features = 32;  // M, per-covariate basis size (desk scale)
  double domain_half_width = 2.55;  // J
  bool time_covariate = true;
  int eos_token = -1;  // -1: decoding always runs to max_length
  int decoder_hidden = 64;
  int decoder_embed = 16;
  int descriptor_count = 3;  // leading sequence descriptors used (1..3)

  int num_descriptors() const { return descriptor_count; }
  int num_covariates() const {
    return num_descriptors() + (time_covariate ? 1 : 0);
  }
  HilbertBasisConfig basis() const {
    return HilbertBasisConfig{num_features, domain_half_width};
  }
  void validate() const;
};

// Sequence descriptors in [0, 1]: relative length, mean token value,
// adjacent-transition rate. These stand in for the external structured
// descriptors a real design space would provide.
Eigen::VectorXd design_descriptors(const DesignSequence& x,
                                   const LatentModelConfig& config);

// Descriptors (plus optional time) rescaled to [-1, 1] through the scaler.
CovariateVector compute_covariates(const DesignSequence& x,
                                   std::optional<double> time01,
                                   const LatentModelConfig& config,
                                   const CovariateScaler& scaler);

// Variational posterior over the global coefficient matrices and the shared
// kernel hyperparameters (one sigma, ell pair per covariate, shared across
// latent dimensions).
struct BasisExpansion {
  std::vector<ad::Parameter> coefficient_means;     // each d x M
  std::vector<ad::Parameter> coefficient_log_stds;  // each d x M
  std::vector<ad::Parameter> sigma_loc;             // 1x1 per covariate
  std::vector<ad::Parameter> sigma_log_scale;       // 1x1 per covariate
  std::vector<ad::Parameter> ell_loc;               // 1x1 per covariate
  std::vector<ad::Parameter> ell_log_scale;         // 1x1 per covariate

  int num_covariates() const {
    return static_cast<int>(coefficient_means.size());
  }
};

// Single-layer gated recurrent decoder with latent conditioning added to the
// initial state and to every step's input. Row alphabet_size of the embedding
// table is the start-of-sequence input.
struct DecoderParams {
  ad::Parameter embedding;  // (V+1) x E
  ad::Parameter latent_in;  // E x d
  ad::Parameter init_w;     // H x d
  ad::Parameter init_b;     // H x 1
  ad::Parameter gate_w;     // 3H x E, thirds: reset, update, candidate
  ad::Parameter gate_u;     // 3H x H
  ad::Parameter gate_b;     // 3H x 1
  ad::Parameter out_w;      // V x H
  ad::Parameter out_b;      // V x 1
  int max_length = 16;
  int eos_token = -1;

  int alphabet_size() const { return static_cast<int>(out_w.value.rows()); }
  int hidden_dim() const { return static_cast<int>(gate_u.value.cols()); }
  int embed_dim() const { return static_cast<int>(latent_in.value.rows()); }
  int latent_dim() const { return static_cast<int>(latent_in.value.cols()); }
};

// z(c; A) = sum_r A^{(r)} phi^{(r)}(c_r). Linear in the coefficients.
LatentCode latent_code(const CovariateVector& c,
                       const std::vector<Eigen::MatrixXd>& coefficients,
                       const HilbertBasisConfig& basis);

// Length-normalized decoder log-likelihood (always <= 0).
double decoder_log_likelihood(const DesignSequence& x, const LatentCode& z,
                              const DecoderParams& theta);

// Greedy per-step argmax decoding; deterministic, ties resolved toward the
// lowest token index. Stops at max_length, or earlier when the configured
// end-of-sequence token is emitted (in which case it is not appended).
DesignSequence decode_argmax(const LatentCode& z, const DecoderParams& theta);

struct ElboResult {
  double elbo = 0.0;
  double reconstruction = 0.0;
  double kl_coefficients = 0.0;
  double kl_sigma = 0.0;
  double kl_ell = 0.0;
  std::vector<double> sampled_sigma;  // hyper draws used for the KL term
  std::vector<double> sampled_ell;
};

// Decoder graph fragment shared by the ELBO, the combined fine-tuning loss
// and latent inversion. Returns the n x 1 vector of length-normalized token
// negative log-likelihoods for `batch` decoded from rows of `latents`.
ad::Var decoder_batch_nll(ad::Graph& graph, DecoderParams& theta,
                          bool trainable_decoder, ad::Var latents,
                          const std::vector<DesignSequence>& batch);

class LatentModel {
 public:
  LatentModel(LatentModelConfig config, Rng& rng);

  const LatentModelConfig& config() const { return config_; }
  const CovariateScaler& scaler() const { return scaler_; }
  const BasisExpansion& expansion() const { return expansion_; }
  BasisExpansion& expansion() { return expansion_; }
  const DecoderParams& decoder() const { return decoder_; }
  DecoderParams& decoder() { return decoder_; }

  CovariateVector covariates(const DesignSequence& x,
                             std::optional<double> time01) const;

  // E_q[z(c(x, t); A)]; equals latent_code at the variational means.
  LatentCode posterior_mean_embedding(const DesignSequence& x,
                                      std::optional<double> time01) const;

  // One reparameterized draw of z(c; A) under q(A).
  LatentCode sample_embedding(const DesignSequence& x,
                              std::optional<double> time01, Rng& rng) const;

  // Basis feature rows phi^{(r)}(c_n) for a batch, one n x M matrix per
  // covariate.
  std::vector<Eigen::MatrixXd> feature_rows(
      const std::vector<CovariateVector>& covariates) const;

  // In-graph posterior-mean embeddings for a batch (rows), differentiable
  // w.r.t. the coefficient means when trainable is set.
  ad::Var embeddings_graph(ad::Graph& graph,
                           const std::vector<CovariateVector>& covariates,
                           bool trainable);

  // Builds the full variational objective into `graph` and returns the ELBO
  // variable; term values are written to `result`. total_count is the dataset
  // size N used to rescale the mini-batch reconstruction.
  // kl_scale multiplies all three KL terms; 1.0 is the plain variational
  // objective, training configs may down-weight the prior.
  ad::Var elbo_graph(ad::Graph& graph,
                     const std::vector<DesignSequence>& batch,
                     const std::vector<CovariateVector>& covariates,
                     int mc_samples, int total_count, Rng& rng,
                     ElboResult* result, double kl_scale = 1.0);

  // Evaluates the ELBO and accumulates gradients into all parameters.
  // Throws std::runtime_error naming the offending term when the value is
  // non-finite.
  ElboResult elbo_with_gradients(const std::vector<DesignSequence>& batch,
                                 const std::vector<CovariateVector>& covariates,
                                 int mc_samples, int total_count, Rng& rng,
                                 double kl_scale = 1.0);

  std::vector<ad::Parameter*> trainable_params();
  std::vector<ad::Parameter*> expansion_params();
  std::vector<ad::Parameter*> decoder_params();

  // FNV-1a over all parameter bytes; used to assert no-op retrains.
  std::uint64_t parameter_checksum() const;

  void save(const std::string& path) const;
  static LatentModel load(const std::string& path);

 private:
  LatentModel() = default;

  LatentModelConfig config_;
  CovariateScaler scaler_;
  BasisExpansion expansion_;
  DecoderParams decoder_;
};

struct PretrainConfig {
  int steps = 2000;
  int minibatch = 64;
  double learning_rate = 2e-3;
  int mc_samples = 1;
  double kl_scale = 1e-3;  // GP-prior KL weight used during training
  // Weight of the latent-scale anchor applied to the minibatch embeddings;
  // keeps the latent cloud at the standard-normal pairwise scale the trust
  // region and surrogate lengthscales assume.
  double scale_anchor_weight = 1.0;
};

// Stochastic training of the model on a corpus. Corpus items without time
// stamps receive uniform draws in [0, 1] when the model uses a time
// covariate. Returns the final full-batch minus-ELBO estimate.
double pretrain_latent_model(LatentModel& model,
                             const std::vector<DesignSequence>& corpus,
                             const PretrainConfig& config, Rng& rng);

}  // namespace driftbo
