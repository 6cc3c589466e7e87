// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops of the HJB solver. Each kernel has a scalar
// reference implementation and, on x86-64, an AVX2 variant picked at runtime.
// tests/test_kernels.cpp checks the variants against each other.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace adaguide {
class MixtureModel;
}

namespace adaguide::kernels {

enum class Isa { scalar, avx2 };

[[nodiscard]] const char* isa_name(Isa isa) noexcept;
[[nodiscard]] bool isa_supported(Isa isa) noexcept;
/// Best ISA compiled in and supported by this CPU.
[[nodiscard]] Isa detected_isa() noexcept;
/// ISA used by the dispatching entry points. Defaults to detected_isa();
/// ADAGUIDE_ISA=scalar in the environment forces the reference path.
[[nodiscard]] Isa active_isa() noexcept;
/// Throws InvalidInput if `isa` is not available.
void set_active_isa(Isa isa);

/// A 2-D mixture frozen at one forward time, in structure-of-arrays form.
struct ComponentTable2d {
    std::vector<double> mean_x, mean_y;  // e^{-s} m_i
    std::vector<double> log_norm;        // log w_i - log(2 pi v_i)
    std::vector<double> half_inv_var;    // 1 / (2 v_i)
    std::vector<double> inv_var;         // 1 / v_i
    std::vector<unsigned char> in_class;

    static ComponentTable2d build(const MixtureModel& model, double forward_time, int c);
    [[nodiscard]] std::size_t size() const noexcept { return mean_x.size(); }
};

/// Outputs of mixture_fields_2d, one entry per point.
struct Fields2d {
    std::span<double> grad_g_x, grad_g_y;          // grad G
    std::span<double> cond_score_x, cond_score_y;  // grad log p_s(x | c)
};

/// Point-batched guiding-field gradient and conditional score.
void mixture_fields_2d(const ComponentTable2d& table, std::span<const double> x,
                       std::span<const double> y, const Fields2d& out);

/// One explicit backward step of the HJB equation on a grid row.
struct HjbRow {
    const double* v_down = nullptr;  // row j-1 (mirrored at the boundary)
    const double* v_mid = nullptr;   // row j
    const double* v_up = nullptr;    // row j+1 (mirrored at the boundary)
    const double* grad_g_x = nullptr;
    const double* grad_g_y = nullptr;
    const double* grad_g_norm2 = nullptr;
    const double* drift_x = nullptr;  // x + 2 grad log p(x | c)
    const double* drift_y = nullptr;
    double* v_out = nullptr;
    std::size_t n = 0;  // row length, >= 2
};

struct HjbStencil {
    double h = 0.0;
    double dt = 0.0;
    double inv_alpha = 0.0;
    double tol_g = 0.0;  // below this |grad G|^2 the control term is dropped
};

/// V_out = V + dt [ (1/alpha)(<grad G/|grad G|, grad V> + |grad G|)^2 + |grad G|^2
///                  + Laplacian V + <drift, grad V>_upwind ]
/// with zero-normal-derivative ghosts at both row ends.
void hjb_row_update(const HjbStencil& p, const HjbRow& row);

namespace scalar {
void mixture_fields_2d(const ComponentTable2d& table, std::span<const double> x,
                       std::span<const double> y, const Fields2d& out);
void hjb_row_update(const HjbStencil& p, const HjbRow& row);
double exp_reference(double x);
}  // namespace scalar

#if defined(ADAGUIDE_HAVE_AVX2)
namespace avx2 {
void mixture_fields_2d(const ComponentTable2d& table, std::span<const double> x,
                       std::span<const double> y, const Fields2d& out);
void hjb_row_update(const HjbStencil& p, const HjbRow& row);
/// Vectorized exp on four lanes; exposed for tests.
void exp4(const double* in, double* out);
}  // namespace avx2
#endif

}  // namespace adaguide::kernels
