#pragma once

#include <vector>

namespace driftbo {

// Standard normal CDF.
double normal_cdf(double z);

// Nearest-rank quantile of a sample, q in (0, 1]. No interpolation.
double nearest_rank_quantile(std::vector<double> values, double q);

// Median with the even-count convention: mean of the two central order
// statistics.
double median(std::vector<double> values);

// Fractional ranks, ascending (lower value -> lower rank); ties share the
// mean of their rank block. Ranks start at 1.
std::vector<double> fractional_ranks(const std::vector<double>& values);

double sample_mean(const std::vector<double>& values);
// Population standard deviation when n < 2 is 0; otherwise the unbiased
// sample standard deviation.
double sample_std(const std::vector<double>& values);

}  // namespace driftbo
