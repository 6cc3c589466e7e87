// SPDX-License-Identifier: Apache-2.0
// Single-point HJB stencil shared by the scalar kernel and the AVX2 edge columns.
#pragma once

#include <cmath>

#include "adaguide/kernels.hpp"

namespace adaguide::kernels {
namespace {

inline void hjb_point(const HjbStencil& p, const HjbRow& row, std::size_t i) {
    const std::size_t n = row.n;
    const double inv_h = 1.0 / p.h;
    const double inv_2h = 0.5 / p.h;
    const double inv_h2 = 1.0 / (p.h * p.h);

    const double c = row.v_mid[i];
    const double left = i > 0 ? row.v_mid[i - 1] : row.v_mid[1];
    const double right = i + 1 < n ? row.v_mid[i + 1] : row.v_mid[n - 2];
    const double up = row.v_up[i];
    const double down = row.v_down[i];

    const double vx = (right - left) * inv_2h;
    const double vy = (up - down) * inv_2h;
    const double lap = ((right + left) + (up + down) - 4.0 * c) * inv_h2;

    const double bx = row.drift_x[i];
    const double by = row.drift_y[i];
    const double adv_x = bx > 0.0 ? bx * ((right - c) * inv_h) : bx * ((c - left) * inv_h);
    const double adv_y = by > 0.0 ? by * ((up - c) * inv_h) : by * ((c - down) * inv_h);

    const double g2 = row.grad_g_norm2[i];
    double control = 0.0;
    if (g2 >= p.tol_g) {
        const double gn = std::sqrt(g2);
        const double q = (row.grad_g_x[i] * vx + row.grad_g_y[i] * vy) / gn + gn;
        control = q * q * p.inv_alpha;
    }
    row.v_out[i] = c + p.dt * (((control + g2) + lap) + (adv_x + adv_y));
}

}  // namespace
}  // namespace adaguide::kernels
