// SPDX-License-Identifier: Apache-2.0
#include "adaguide/noise.hpp"

#include <cmath>
#include <random>

#include "adaguide/errors.hpp"

namespace adaguide {

void standard_normals(std::uint64_t seed, std::uint64_t stream, std::vector<double>& out) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& z : out) z = normal(rng);
}

PathNoise GaussianNoise::draw(std::size_t path, const TimeGrid& grid, std::size_t dim) const {
    const std::size_t steps = grid.intervals();
    std::vector<double> z(dim * (steps + 1));
    standard_normals(seed_, antithetic_ ? path / 2 : path, z);
    const double sign = (antithetic_ && path % 2 == 1) ? -1.0 : 1.0;
    PathNoise n;
    n.initial.assign(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(dim));
    n.increments.resize(dim * steps);
    for (std::size_t j = 0; j < dim; ++j) n.initial[j] *= sign;
    for (std::size_t k = 0; k < steps; ++k) {
        const double scale = sign * std::sqrt(grid.dt(k));
        for (std::size_t j = 0; j < dim; ++j)
            n.increments[k * dim + j] = scale * z[dim * (k + 1) + j];
    }
    return n;
}

PathNoise ZeroNoise::draw(std::size_t, const TimeGrid& grid, std::size_t dim) const {
    if (initial_.size() != dim) throw InvalidInput("zero-noise initial state has wrong dimension");
    return {initial_, std::vector<double>(dim * grid.intervals(), 0.0)};
}

PathNoise RefinedGaussianNoise::draw(std::size_t path, const TimeGrid& grid,
                                     std::size_t dim) const {
    const std::size_t steps = grid.intervals();
    if (steps == 0 || finest_ % steps != 0)
        throw InvalidInput("grid interval count must divide the finest interval count");
    const std::size_t factor = finest_ / steps;
    const double fine_dt = grid.end() / static_cast<double>(finest_);
    std::vector<double> z(dim * (finest_ + 1));
    standard_normals(seed_, path, z);
    PathNoise n;
    n.initial.assign(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(dim));
    n.increments.assign(dim * steps, 0.0);
    const double scale = std::sqrt(fine_dt);
    for (std::size_t f = 0; f < finest_; ++f) {
        const std::size_t k = f / factor;
        for (std::size_t j = 0; j < dim; ++j)
            n.increments[k * dim + j] += scale * z[dim * (f + 1) + j];
    }
    return n;
}

}  // namespace adaguide
