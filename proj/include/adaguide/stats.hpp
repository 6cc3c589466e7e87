// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace adaguide {

struct MeanStderr {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

/// Sample mean and standard error of the mean (unbiased variance).
MeanStderr mean_stderr(std::span<const double> values);

/// Same, but consecutive pairs are averaged first (antithetic estimator).
MeanStderr paired_mean_stderr(std::span<const double> values);

/// Elementwise a - b, then mean_stderr; used for common-random-number comparisons.
MeanStderr difference_mean_stderr(std::span<const double> a, std::span<const double> b,
                                  bool pairs_antithetic = false);

/// Standard error of a Bernoulli proportion.
double binomial_stderr(double p, std::size_t n);

/// Linear-interpolated empirical quantile of unsorted data, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace adaguide
