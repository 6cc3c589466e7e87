// SPDX-License-Identifier: Apache-2.0
//
// Monte Carlo checks of the martingale structure of guided sampling.
//
// Along a guided path the process
//   S_k = p(c) / p_{T-t_k}(c | Y_k) * exp(I_k),  I_k = int_0^{t_k} 2 w |grad G|^2 ds
// is a positive martingale on [0, T) and a supermartingale on [0, T]. Every
// statistical check here reports a statistic, a bound and a standard error;
// pass means within three standard errors.
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adaguide/mixture_model.hpp"
#include "adaguide/schedule.hpp"
#include "adaguide/sde.hpp"
#include "adaguide/stats.hpp"

namespace adaguide {

struct CheckResult {
    std::string name;
    double statistic = 0.0;
    double bound = 0.0;
    double std_error = 0.0;
    bool pass = false;
    bool asserted = true;  // diagnostics that are only reported set this to false
};

/// Serialized as {"checks": [{name, statistic, bound, stderr, pass, asserted}], "all_pass"}.
[[nodiscard]] std::string checks_to_json(std::span<const CheckResult> checks);

/// I_k per node: left Riemann for Euler paths, trapezoid for Heun paths.
[[nodiscard]] std::vector<double> running_integral(const Trajectory& tr);

struct MartingaleDiagnostics {
    std::size_t paths = 0;
    std::size_t nodes = 0;
    std::vector<double> s;         // paths x nodes
    std::vector<double> integral;  // paths x nodes
    std::vector<MeanStderr> mean_s;  // per node
};

/// S_k along one path, using the analytic class posterior.
[[nodiscard]] std::vector<double> stochastic_exponential(const MixtureModel& model,
                                                         const Trajectory& tr);

[[nodiscard]] MartingaleDiagnostics martingale_diagnostics(const MixtureModel& model,
                                                           std::span<const Trajectory> batch,
                                                           std::size_t workers = 1);

/// E[S_k] within 3 stderr of 1 at nodes 0..N-1 and E[S_N] <= 1 + 3 stderr.
/// The statistic is the largest |E S_k - 1| / stderr over interior nodes.
[[nodiscard]] CheckResult martingale_check(const MartingaleDiagnostics& diag);

/// Fraction of paths with G_k - I_k < log(delta) at some node, against delta + 3 stderr.
[[nodiscard]] CheckResult doob_check(const MixtureModel& model, std::span<const Trajectory> batch,
                                     double delta);

struct ItoLevel {
    std::size_t intervals = 0;
    double dt = 0.0;
    MeanStderr abs_total_residual;
};

struct ItoStudy {
    std::vector<ItoLevel> levels;
    std::vector<double> ratios;  // level i over level i+1
    bool exact = false;          // residual identically zero at every level (no guidance signal)
    bool pass = false;           // exact, or every ratio inside [ratio_lo, ratio_hi]
};

/// Per-step residual G(Y_{k+1}) - G(Y_k) - (1 + 2 w_k) |grad G_k|^2 dt - sqrt(2) <grad G_k, dB_k>,
/// summed over a path. The grids are uniform with intervals coarse, 2 coarse, 4 coarse, ...
/// and share one Brownian path per sample.
struct ItoStudyOptions {
    std::size_t coarse_intervals = 16;
    std::size_t refinements = 3;
    std::size_t paths = 1000;
    double cutoff = 0.01;
    std::uint64_t seed = 0;
    Method method = Method::euler;
    std::size_t workers = 1;
    double ratio_lo = 1.3;
    double ratio_hi = 2.7;
};

[[nodiscard]] ItoStudy ito_residual_study(const MixtureModel& model,
                                          const GuidanceSchedule& schedule, int c,
                                          const ItoStudyOptions& opts);

/// Total residual of one path (see ItoStudyOptions).
[[nodiscard]] double total_ito_residual(const MixtureModel& model, const Trajectory& tr);

/// Batch mean of log p(c|Y_N) - log p(c|Y_0) against the quadrature of
/// (1 + 2w)|grad G|^2, compared through the per-path difference.
[[nodiscard]] CheckResult decomposition_check(const MixtureModel& model,
                                              std::span<const Trajectory> batch);

struct KlBound {
    MeanStderr empirical;  // per-path quadrature of w^2 |grad G|^2
    double cap = 0.0;      // max(C_max, C_max^2 / (2 C_min)) log(1 / p(c))
};

/// Requires C_min > 0 and C_min - 1/2 <= w <= C_max at every cached node value.
[[nodiscard]] KlBound kl_trajectory_bound(const MixtureModel& model,
                                          std::span<const Trajectory> batch, double c_max,
                                          double c_min);
[[nodiscard]] CheckResult kl_check(const KlBound& kl);

struct SupportReport {
    std::vector<double> distances;  // per path, terminal state to nearest class atom
    double delta = 0.0;
    double pass_fraction = 0.0;
    double q50 = 0.0, q90 = 0.0, q99 = 0.0, max = 0.0;
};

/// 5 sqrt(1 - e^{-2 cutoff}): five standard deviations of the forward noise left at the cutoff.
[[nodiscard]] double default_support_radius(double cutoff);

/// Point-mass models only.
[[nodiscard]] SupportReport support_check(const MixtureModel& model,
                                          std::span<const Trajectory> batch, double delta);

/// Fraction of terminal states inside the union of the class components'
/// q-probability balls. Gaussian models only; reported, never asserted.
[[nodiscard]] double mass_coverage(const MixtureModel& model, std::span<const Trajectory> batch,
                                   double q = 0.9999);

struct AlignmentOptions {
    std::size_t start_node = 0;  // restart node on `grid`
    std::size_t horizon_steps = 8;
    std::size_t paths = 2000;
    std::uint64_t seed = 0;
    Method method = Method::heun;
    std::size_t workers = 1;
};

/// From a common state x at t_k, compares E[1 / p(c | Y_{k+m})] under guidance w
/// and without guidance on common noise. Passes when guided - unguided <= 3 stderr.
[[nodiscard]] CheckResult conditional_alignment_check(const MixtureModel& model, int c, double w,
                                                      std::span<const double> x,
                                                      std::shared_ptr<const TimeGrid> grid,
                                                      const AlignmentOptions& opts);

}  // namespace adaguide
