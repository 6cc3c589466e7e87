// SPDX-License-Identifier: Apache-2.0
//
// Explicit finite-difference solver for the guidance HJB equation in two
// dimensions, in backward time t in [0, T - cutoff]:
//   -dV/dt = (1/alpha)(<grad G/|grad G|, grad V> + |grad G|)^2 + |grad G|^2
//            + Laplacian V + <x + 2 grad log p_{T-t}(x|c), grad V>,
//   V(T - cutoff, .) = 0,
// and the pointwise optimal guidance
//   w* = (grad G . grad V + |grad G|^2) / (alpha |grad G|^2),  w* = 1/alpha where |grad G|^2 < tol_g.
//
// Space: square [-L, L]^2 with n x n nodes, homogeneous Neumann boundary.
// Advection is upwinded, the Laplacian and the control term use central
// differences. The step size must satisfy
//   dt (4/h^2 + max(|b_x| + |b_y|)/h) <= safety,
// which keeps the linear part of the scheme monotone.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adaguide/mixture_model.hpp"
#include "adaguide/sde.hpp"

namespace adaguide {

struct HjbGeometry {
    std::size_t n = 0;  // nodes per axis
    double h = 0.0;

    /// Symmetric coordinate (2i - (n-1)) h / 2, exact under i -> n-1-i.
    [[nodiscard]] double coord(std::size_t i) const noexcept {
        return (2.0 * static_cast<double>(i) - static_cast<double>(n - 1)) * h * 0.5;
    }
    [[nodiscard]] double half_width() const noexcept { return 0.5 * static_cast<double>(n - 1) * h; }
    [[nodiscard]] std::size_t points() const noexcept { return n * n; }

    /// 2L / h must be an integer (within 1e-9 relative).
    static HjbGeometry from_box(double half_width, double h);
};

struct HjbConfig {
    double alpha = 10.0;
    double half_width = 4.0;
    double h = 0.05;
    double dt = 0.0;  // 0 picks the largest stable step
    double cutoff = 0.01;
    double safety = 0.9;
    double tol_g = 1e-12;
    std::vector<double> snapshot_times;  // backward times; the terminal slice is always kept
    std::size_t workers = 1;
};

struct ValueSlice {
    double t_back = 0.0;
    double t_forward = 0.0;
    std::vector<double> v;       // row-major, index j * n + i for (x_i, y_j)
    std::vector<double> w_star;
};

struct ValueGrid {
    HjbGeometry geom;
    int label = 0;
    double alpha = 0.0;
    double tol_g = 0.0;
    double horizon = 0.0;
    double t_end = 0.0;      // T - cutoff
    double dt_max = 0.0;     // stability limit used for the step count
    std::size_t steps = 0;   // total time steps taken
    std::vector<ValueSlice> slices;  // ascending t_back

    /// Slice whose t_back is nearest to t (ties go to the earlier slice).
    [[nodiscard]] const ValueSlice& nearest_slice(double t_back) const;
    /// Bilinear interpolation, arguments clamped to the box.
    [[nodiscard]] double interpolate(std::span<const double> field, double x, double y) const;
};

/// Largest step allowed by the monotonicity condition, scanning the drift at
/// `samples` backward times between 0 and T - cutoff.
[[nodiscard]] double hjb_stable_dt(const MixtureModel& model, int c, const HjbGeometry& geom,
                                   double cutoff, double safety, std::size_t samples = 65);

/// One explicit step from backward time t to t - dt: out = V + dt * H(t, V).
void hjb_backward_step(const MixtureModel& model, int c, const HjbGeometry& geom, double alpha,
                       double tol_g, double t_back, double dt, std::span<const double> v,
                       std::span<double> out, std::size_t workers = 1);

/// w* on one slice with central-difference grad V (mirrored at the boundary).
[[nodiscard]] std::vector<double> extract_w_star(const MixtureModel& model, int c,
                                                 const HjbGeometry& geom, double alpha,
                                                 double tol_g, double t_back,
                                                 std::span<const double> v);

/// Throws InvalidInput on a bad configuration or an unstable dt, and
/// DivergenceError if a slice becomes non-finite.
[[nodiscard]] ValueGrid solve_hjb(const MixtureModel& model, int c, const HjbConfig& cfg);

/// w(t, y) = bilinear w* on the nearest stored slice. Positions outside the
/// box are clamped for the lookup only.
[[nodiscard]] WeightFn policy_weight_fn(std::shared_ptr<const ValueGrid> grid);

/// Six panel times {0, 0.1, 0.5, 1, 2.5, 5}, the last clamped to T - cutoff.
[[nodiscard]] std::vector<double> figure_panel_times(double horizon, double cutoff);

/// CSV x1,x2,V,w_star with a header row.
void write_slice_csv(std::ostream& os, const ValueGrid& grid, const ValueSlice& slice);

/// Grid geometry plus both clocks of every slice, as JSON.
[[nodiscard]] std::string value_grid_metadata_json(const ValueGrid& grid);

}  // namespace adaguide
