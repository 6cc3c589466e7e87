// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace adaguide {

/// Backward-time nodes 0 = t_0 < ... < t_{n-1} = T - cutoff.
struct TimeGrid {
    double horizon = 0.0;
    double cutoff = 0.0;
    std::vector<double> nodes;

    [[nodiscard]] std::size_t size() const noexcept { return nodes.size(); }
    [[nodiscard]] std::size_t intervals() const noexcept { return nodes.size() - 1; }
    [[nodiscard]] double dt(std::size_t k) const { return nodes[k + 1] - nodes[k]; }
    [[nodiscard]] double end() const { return nodes.back(); }

    /// Same horizon and cutoff with every interval split into `factor` pieces.
    [[nodiscard]] TimeGrid refined(std::size_t factor) const;
    /// Index of the nearest node; exact midpoints go to the earlier node.
    [[nodiscard]] std::size_t nearest(double t) const;
};

/// Uniform grid with `n_nodes` nodes on [0, horizon - cutoff].
TimeGrid build_time_grid(double horizon, std::size_t n_nodes, double cutoff);

}  // namespace adaguide
