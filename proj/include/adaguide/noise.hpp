// SPDX-License-Identifier: Apache-2.0
//
// Noise streams for the reverse SDE. A path's noise depends only on
// (base seed, stream id), where stream id = path for independent sampling and
// path / 2 for antithetic sampling (odd paths negate the draw of their
// partner). The generator is std::mt19937_64 seeded through std::seed_seq with
// the four 32-bit halves of (seed, stream id), so batches are identical no
// matter how they are split across workers.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "adaguide/time_grid.hpp"

namespace adaguide {

struct PathNoise {
    std::vector<double> initial;     // Y_0, dim entries
    std::vector<double> increments;  // Brownian increments, (nodes - 1) x dim
};

class NoiseSource {
public:
    virtual ~NoiseSource() = default;
    [[nodiscard]] virtual PathNoise draw(std::size_t path, const TimeGrid& grid,
                                         std::size_t dim) const = 0;
};

/// Y_0 ~ N(0, I) and increments ~ N(0, dt_k I).
class GaussianNoise final : public NoiseSource {
public:
    explicit GaussianNoise(std::uint64_t seed, bool antithetic = false)
        : seed_(seed), antithetic_(antithetic) {}
    [[nodiscard]] PathNoise draw(std::size_t path, const TimeGrid& grid,
                                 std::size_t dim) const override;
    [[nodiscard]] bool antithetic() const noexcept { return antithetic_; }

private:
    std::uint64_t seed_;
    bool antithetic_;
};

/// Fixed initial state, zero increments: the SDE reduces to its drift ODE.
class ZeroNoise final : public NoiseSource {
public:
    explicit ZeroNoise(std::vector<double> initial) : initial_(std::move(initial)) {}
    [[nodiscard]] PathNoise draw(std::size_t path, const TimeGrid& grid,
                                 std::size_t dim) const override;

private:
    std::vector<double> initial_;
};

/// Brownian path sampled on a uniform grid with `finest_intervals` intervals
/// and summed onto any coarser uniform grid whose interval count divides it.
/// Grids of different resolution therefore see the same Brownian path.
class RefinedGaussianNoise final : public NoiseSource {
public:
    RefinedGaussianNoise(std::uint64_t seed, std::size_t finest_intervals)
        : seed_(seed), finest_(finest_intervals) {}
    [[nodiscard]] PathNoise draw(std::size_t path, const TimeGrid& grid,
                                 std::size_t dim) const override;

private:
    std::uint64_t seed_;
    std::size_t finest_;
};

/// Seeds a stream from (seed, stream id) and fills `out` with N(0,1) draws.
void standard_normals(std::uint64_t seed, std::uint64_t stream, std::vector<double>& out);

}  // namespace adaguide
