#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace driftbo {

// Deterministic random stream. All randomness in the library flows through
// this class so that a run is reproducible bit-for-bit from its seed; the
// standard <random> distributions are avoided because their output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derives an independent child stream from the parent seed and a tag.
  // Forking does not consume state from the parent.
  Rng fork(std::string_view tag) const;
  Rng fork(std::string_view tag, std::uint64_t index) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer on [0, n), n >= 1.
  int uniform_int(int n);

  // Standard normal via Box-Muller (one spare value cached).
  double normal();

  Eigen::VectorXd normal_vector(Eigen::Index n);
  // Filled row by row.
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace driftbo
