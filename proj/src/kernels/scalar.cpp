// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "adaguide/errors.hpp"
#include "adaguide/kernels.hpp"
#include "stencil_point.hpp"

namespace adaguide::kernels::scalar {

double exp_reference(double x) { return std::exp(x); }

void mixture_fields_2d(const ComponentTable2d& t, std::span<const double> x,
                       std::span<const double> y, const Fields2d& out) {
    const std::size_t k = t.size();
    std::vector<double> l(k);
    for (std::size_t p = 0; p < x.size(); ++p) {
        double max_all = -std::numeric_limits<double>::infinity();
        double max_cls = max_all;
        for (std::size_t i = 0; i < k; ++i) {
            const double dx = t.mean_x[i] - x[p];
            const double dy = t.mean_y[i] - y[p];
            l[i] = t.log_norm[i] - (dx * dx + dy * dy) * t.half_inv_var[i];
            max_all = std::max(max_all, l[i]);
            if (t.in_class[i]) max_cls = std::max(max_cls, l[i]);
        }
        double sum_all = 0.0;
        double sum_cls = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            sum_all += std::exp(l[i] - max_all);
            if (t.in_class[i]) sum_cls += std::exp(l[i] - max_cls);
        }
        const double inv_all = 1.0 / sum_all;
        const double inv_cls = 1.0 / sum_cls;
        double gx = 0.0, gy = 0.0, cx = 0.0, cy = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double r = std::exp(l[i] - max_all) * inv_all;
            const double rc = t.in_class[i] ? std::exp(l[i] - max_cls) * inv_cls : 0.0;
            const double sx = (t.mean_x[i] - x[p]) * t.inv_var[i];
            const double sy = (t.mean_y[i] - y[p]) * t.inv_var[i];
            gx += (rc - r) * sx;
            gy += (rc - r) * sy;
            cx += rc * sx;
            cy += rc * sy;
        }
        out.grad_g_x[p] = gx;
        out.grad_g_y[p] = gy;
        out.cond_score_x[p] = cx;
        out.cond_score_y[p] = cy;
    }
}

void hjb_row_update(const HjbStencil& p, const HjbRow& row) {
    for (std::size_t i = 0; i < row.n; ++i) hjb_point(p, row, i);
}

}  // namespace adaguide::kernels::scalar
