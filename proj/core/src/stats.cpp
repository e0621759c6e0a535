#include "driftbo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace driftbo {

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

double nearest_rank_quantile(std::vector<double> values, double q) {
  if (values.empty()) {
    throw std::invalid_argument("nearest_rank_quantile: empty sample");
  }
  if (!(q > 0.0) || q > 1.0) {
    throw std::invalid_argument("nearest_rank_quantile: q must be in (0, 1]");
  }
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<long>(std::ceil(q * n));
  rank = std::max<long>(1, std::min<long>(rank, values.size()));
  return values[static_cast<size_t>(rank - 1)];
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> fractional_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) tie; their 1-based ranks average to:
    const double shared = 0.5 * (static_cast<double>(i + 1) +
                                 static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double sample_mean(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sample_mean: empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mu = sample_mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - mu) * (v - mu);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace driftbo
