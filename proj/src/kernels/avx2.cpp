// SPDX-License-Identifier: Apache-2.0
#include <immintrin.h>

#include <algorithm>
#include <cstdint>
#include <limits>

#include "adaguide/kernels.hpp"
#include "stencil_point.hpp"

namespace adaguide::kernels::avx2 {

namespace {

// Cephes-style exp: n = round(x log2 e), r = x - n ln 2 split in two parts,
// e^r from a (3,3) rational form, then scaled by 2^n through the exponent bits.
inline __m256d exp_pd(__m256d x) {
    const __m256d lo = _mm256_set1_pd(-708.0);
    const __m256d hi = _mm256_set1_pd(709.0);
    const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
    x = _mm256_max_pd(_mm256_min_pd(x, hi), lo);

    const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    x = _mm256_sub_pd(x, _mm256_mul_pd(n, _mm256_set1_pd(6.93145751953125E-1)));
    x = _mm256_sub_pd(x, _mm256_mul_pd(n, _mm256_set1_pd(1.42860682030941723212E-6)));

    const __m256d xx = _mm256_mul_pd(x, x);
    __m256d px = _mm256_set1_pd(1.26177193074810590878E-4);
    px = _mm256_add_pd(_mm256_mul_pd(px, xx), _mm256_set1_pd(3.02994407707441961300E-2));
    px = _mm256_add_pd(_mm256_mul_pd(px, xx), _mm256_set1_pd(9.99999999999999999910E-1));
    px = _mm256_mul_pd(px, x);
    __m256d qx = _mm256_set1_pd(3.00198505138664455042E-6);
    qx = _mm256_add_pd(_mm256_mul_pd(qx, xx), _mm256_set1_pd(2.52448340349684104192E-3));
    qx = _mm256_add_pd(_mm256_mul_pd(qx, xx), _mm256_set1_pd(2.27265548208155028766E-1));
    qx = _mm256_add_pd(_mm256_mul_pd(qx, xx), _mm256_set1_pd(2.00000000000000000009E0));
    __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
    r = _mm256_add_pd(_mm256_set1_pd(1.0), _mm256_add_pd(r, r));

    const __m128i n32 = _mm256_cvtpd_epi32(n);
    __m256i bits = _mm256_cvtepi32_epi64(n32);
    bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
    bits = _mm256_slli_epi64(bits, 52);
    r = _mm256_mul_pd(r, _mm256_castsi256_pd(bits));
    return _mm256_andnot_pd(underflow, r);
}

constexpr std::size_t kMaxComponents = 32;

}  // namespace

void exp4(const double* in, double* out) { _mm256_storeu_pd(out, exp_pd(_mm256_loadu_pd(in))); }

void mixture_fields_2d(const ComponentTable2d& t, std::span<const double> x,
                       std::span<const double> y, const Fields2d& out) {
    const std::size_t k = t.size();
    const std::size_t n = x.size();
    if (k > kMaxComponents) {
        scalar::mixture_fields_2d(t, x, y, out);
        return;
    }
    __m256d l[kMaxComponents];
    const __m256d neg_inf = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
    std::size_t p = 0;
    for (; p + 4 <= n; p += 4) {
        const __m256d px = _mm256_loadu_pd(x.data() + p);
        const __m256d py = _mm256_loadu_pd(y.data() + p);
        __m256d max_all = neg_inf;
        __m256d max_cls = neg_inf;
        for (std::size_t i = 0; i < k; ++i) {
            const __m256d dx = _mm256_sub_pd(_mm256_set1_pd(t.mean_x[i]), px);
            const __m256d dy = _mm256_sub_pd(_mm256_set1_pd(t.mean_y[i]), py);
            const __m256d r2 = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
            l[i] = _mm256_sub_pd(_mm256_set1_pd(t.log_norm[i]),
                                 _mm256_mul_pd(r2, _mm256_set1_pd(t.half_inv_var[i])));
            max_all = _mm256_max_pd(max_all, l[i]);
            if (t.in_class[i]) max_cls = _mm256_max_pd(max_cls, l[i]);
        }
        __m256d sum_all = _mm256_setzero_pd();
        __m256d sum_cls = _mm256_setzero_pd();
        __m256d e[kMaxComponents], ec[kMaxComponents];
        for (std::size_t i = 0; i < k; ++i) {
            e[i] = exp_pd(_mm256_sub_pd(l[i], max_all));
            sum_all = _mm256_add_pd(sum_all, e[i]);
            if (t.in_class[i]) {
                ec[i] = exp_pd(_mm256_sub_pd(l[i], max_cls));
                sum_cls = _mm256_add_pd(sum_cls, ec[i]);
            } else {
                ec[i] = _mm256_setzero_pd();
            }
        }
        const __m256d inv_all = _mm256_div_pd(_mm256_set1_pd(1.0), sum_all);
        const __m256d inv_cls = _mm256_div_pd(_mm256_set1_pd(1.0), sum_cls);
        __m256d gx = _mm256_setzero_pd(), gy = gx, cx = gx, cy = gx;
        for (std::size_t i = 0; i < k; ++i) {
            const __m256d r = _mm256_mul_pd(e[i], inv_all);
            const __m256d rc = _mm256_mul_pd(ec[i], inv_cls);
            const __m256d iv = _mm256_set1_pd(t.inv_var[i]);
            const __m256d sx = _mm256_mul_pd(_mm256_sub_pd(_mm256_set1_pd(t.mean_x[i]), px), iv);
            const __m256d sy = _mm256_mul_pd(_mm256_sub_pd(_mm256_set1_pd(t.mean_y[i]), py), iv);
            const __m256d dr = _mm256_sub_pd(rc, r);
            gx = _mm256_add_pd(gx, _mm256_mul_pd(dr, sx));
            gy = _mm256_add_pd(gy, _mm256_mul_pd(dr, sy));
            cx = _mm256_add_pd(cx, _mm256_mul_pd(rc, sx));
            cy = _mm256_add_pd(cy, _mm256_mul_pd(rc, sy));
        }
        _mm256_storeu_pd(out.grad_g_x.data() + p, gx);
        _mm256_storeu_pd(out.grad_g_y.data() + p, gy);
        _mm256_storeu_pd(out.cond_score_x.data() + p, cx);
        _mm256_storeu_pd(out.cond_score_y.data() + p, cy);
    }
    if (p < n) {
        const Fields2d tail{out.grad_g_x.subspan(p), out.grad_g_y.subspan(p),
                            out.cond_score_x.subspan(p), out.cond_score_y.subspan(p)};
        scalar::mixture_fields_2d(t, x.subspan(p), y.subspan(p), tail);
    }
}

// Interior columns 1..n-2 are vectorized; the two ghost-mirrored end columns
// go through the scalar kernel. Operation order matches the scalar kernel
// exactly, so results are bit-identical (the TU is built with -ffp-contract=off).
void hjb_row_update(const HjbStencil& p, const HjbRow& row) {
    const std::size_t n = row.n;
    if (n < 6) {
        scalar::hjb_row_update(p, row);
        return;
    }
    const __m256d inv_h = _mm256_set1_pd(1.0 / p.h);
    const __m256d inv_2h = _mm256_set1_pd(0.5 / p.h);
    const __m256d inv_h2 = _mm256_set1_pd(1.0 / (p.h * p.h));
    const __m256d four = _mm256_set1_pd(4.0);
    const __m256d zero = _mm256_setzero_pd();
    const __m256d dt = _mm256_set1_pd(p.dt);
    const __m256d inv_alpha = _mm256_set1_pd(p.inv_alpha);
    const __m256d tol = _mm256_set1_pd(p.tol_g);

    std::size_t i = 1;
    for (; i + 4 <= n - 1; i += 4) {
        const __m256d c = _mm256_loadu_pd(row.v_mid + i);
        const __m256d left = _mm256_loadu_pd(row.v_mid + i - 1);
        const __m256d right = _mm256_loadu_pd(row.v_mid + i + 1);
        const __m256d up = _mm256_loadu_pd(row.v_up + i);
        const __m256d down = _mm256_loadu_pd(row.v_down + i);

        const __m256d vx = _mm256_mul_pd(_mm256_sub_pd(right, left), inv_2h);
        const __m256d vy = _mm256_mul_pd(_mm256_sub_pd(up, down), inv_2h);
        const __m256d lap = _mm256_mul_pd(
            _mm256_sub_pd(_mm256_add_pd(_mm256_add_pd(right, left), _mm256_add_pd(up, down)),
                          _mm256_mul_pd(four, c)),
            inv_h2);

        const __m256d bx = _mm256_loadu_pd(row.drift_x + i);
        const __m256d by = _mm256_loadu_pd(row.drift_y + i);
        const __m256d fx = _mm256_mul_pd(bx, _mm256_mul_pd(_mm256_sub_pd(right, c), inv_h));
        const __m256d rx = _mm256_mul_pd(bx, _mm256_mul_pd(_mm256_sub_pd(c, left), inv_h));
        const __m256d fy = _mm256_mul_pd(by, _mm256_mul_pd(_mm256_sub_pd(up, c), inv_h));
        const __m256d ry = _mm256_mul_pd(by, _mm256_mul_pd(_mm256_sub_pd(c, down), inv_h));
        const __m256d adv_x = _mm256_blendv_pd(rx, fx, _mm256_cmp_pd(bx, zero, _CMP_GT_OQ));
        const __m256d adv_y = _mm256_blendv_pd(ry, fy, _mm256_cmp_pd(by, zero, _CMP_GT_OQ));

        const __m256d g2 = _mm256_loadu_pd(row.grad_g_norm2 + i);
        const __m256d gx = _mm256_loadu_pd(row.grad_g_x + i);
        const __m256d gy = _mm256_loadu_pd(row.grad_g_y + i);
        const __m256d gn = _mm256_sqrt_pd(g2);
        const __m256d q = _mm256_add_pd(
            _mm256_div_pd(_mm256_add_pd(_mm256_mul_pd(gx, vx), _mm256_mul_pd(gy, vy)), gn), gn);
        const __m256d control = _mm256_and_pd(_mm256_cmp_pd(g2, tol, _CMP_GE_OQ),
                                              _mm256_mul_pd(_mm256_mul_pd(q, q), inv_alpha));

        const __m256d rhs = _mm256_add_pd(_mm256_add_pd(_mm256_add_pd(control, g2), lap),
                                          _mm256_add_pd(adv_x, adv_y));
        _mm256_storeu_pd(row.v_out + i, _mm256_add_pd(c, _mm256_mul_pd(dt, rhs)));
    }

    hjb_point(p, row, 0);
    for (; i < n; ++i) hjb_point(p, row, i);
}

}  // namespace adaguide::kernels::avx2
