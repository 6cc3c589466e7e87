// SPDX-License-Identifier: Apache-2.0
#include "adaguide/time_grid.hpp"

#include <algorithm>
#include <cmath>

#include "adaguide/errors.hpp"

namespace adaguide {

TimeGrid build_time_grid(double horizon, std::size_t n_nodes, double cutoff) {
    if (!(cutoff > 0.0) || !(horizon > cutoff) || !std::isfinite(horizon))
        throw InvalidInput("time grid needs T > cutoff > 0");
    if (n_nodes < 2) throw InvalidInput("time grid needs at least 2 nodes");
    const double end = horizon - cutoff;
    const double spacing = end / static_cast<double>(n_nodes - 1);
    if (!(spacing > 0.0)) throw InvalidInput("time grid spacing must be positive");
    TimeGrid g;
    g.horizon = horizon;
    g.cutoff = cutoff;
    g.nodes.resize(n_nodes);
    for (std::size_t k = 0; k < n_nodes; ++k) g.nodes[k] = static_cast<double>(k) * spacing;
    g.nodes.back() = end;
    return g;
}

TimeGrid TimeGrid::refined(std::size_t factor) const {
    if (factor == 0) throw InvalidInput("refinement factor must be positive");
    TimeGrid g;
    g.horizon = horizon;
    g.cutoff = cutoff;
    g.nodes.reserve(intervals() * factor + 1);
    for (std::size_t k = 0; k < intervals(); ++k) {
        const double step = dt(k) / static_cast<double>(factor);
        for (std::size_t j = 0; j < factor; ++j)
            g.nodes.push_back(nodes[k] + static_cast<double>(j) * step);
    }
    g.nodes.push_back(nodes.back());
    return g;
}

std::size_t TimeGrid::nearest(double t) const {
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
    if (it == nodes.begin()) return 0;
    if (it == nodes.end()) return nodes.size() - 1;
    const std::size_t hi = static_cast<std::size_t>(it - nodes.begin());
    const std::size_t lo = hi - 1;
    return (t - nodes[lo] <= nodes[hi] - t) ? lo : hi;
}

}  // namespace adaguide
