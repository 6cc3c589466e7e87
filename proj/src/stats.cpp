// SPDX-License-Identifier: Apache-2.0
#include "adaguide/stats.hpp"

#include <algorithm>
#include <cmath>

#include "adaguide/errors.hpp"

namespace adaguide {

MeanStderr mean_stderr(std::span<const double> values) {
    MeanStderr out;
    out.count = values.size();
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() < 2) return out;
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double n = static_cast<double>(values.size());
    out.std_error = std::sqrt(ss / (n - 1.0) / n);
    return out;
}

MeanStderr paired_mean_stderr(std::span<const double> values) {
    if (values.size() % 2 != 0) throw InvalidInput("paired estimator needs an even count");
    std::vector<double> pairs(values.size() / 2);
    for (std::size_t i = 0; i < pairs.size(); ++i)
        pairs[i] = 0.5 * (values[2 * i] + values[2 * i + 1]);
    return mean_stderr(pairs);
}

MeanStderr difference_mean_stderr(std::span<const double> a, std::span<const double> b,
                                  bool pairs_antithetic) {
    if (a.size() != b.size()) throw InvalidInput("paired comparison needs equal sizes");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return pairs_antithetic ? paired_mean_stderr(d) : mean_stderr(d);
}

double binomial_stderr(double p, std::size_t n) {
    if (n == 0) return 0.0;
    return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw InvalidInput("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(values.size() - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace adaguide
