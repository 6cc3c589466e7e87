// SPDX-License-Identifier: Apache-2.0
//
// Reward of a guidance schedule and its exact discrete gradient.
//
// Reward (constant term dropped):
//   R(w) = E sum_k q_k (1 + 2 w_k - alpha w_k^2) |grad G_k(Y_k)|^2
// with quadrature weights q_k matching the integrator: left Riemann for
// Euler, trapezoid for Heun.
//
// The adjoint lambda_k is dR/dY_k for the discrete scheme actually simulated.
// For Euler this is the recursion
//   lambda_N = 0,  lambda_k = lambda_{k+1} + dt_k (B_k + A_k^T lambda_{k+1}),
//   A_k = I + 2 grad^2 log p(.|c) + 2 w_k grad^2 G,  B_k = grad r_k,
// and the per-node gradient is
//   g_k = 2 (1 - alpha w_k) |grad G_k|^2 + 2 <lambda_{k+1}, grad G_k>.
// For Heun the same quantities are back-propagated through the
// predictor-corrector step, which needs Hessian products at the predictor.
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

/// q_k per node: dt_k (k < N), 0 at N for Euler; trapezoid weights for Heun.
[[nodiscard]] std::vector<double> quadrature_weights(const TimeGrid& grid, Method method);

/// sum_k q_k (1 + 2 w_k - alpha w_k^2) |grad G_k|^2 along one path.
[[nodiscard]] double path_reward(const Trajectory& tr, double alpha);

struct RewardEstimate {
    MeanStderr stats;
    std::vector<double> per_path;
};

/// Antithetic partners are averaged before the standard error is taken.
[[nodiscard]] RewardEstimate reward_estimate(std::span<const Trajectory> batch, double alpha,
                                             bool antithetic);

/// A^T v for the guided drift f(y) = y + 2 grad log p(y|c) + 2 w grad G(y).
/// The Hessians are symmetric, so this is also the Jacobian-vector product.
[[nodiscard]] std::vector<double> matrix_free_a_transpose(const MixtureModel& model,
                                                          double backward_time,
                                                          std::span<const double> x, int c,
                                                          double w, std::span<const double> v,
                                                          bool drop_guidance_hessian = false);

enum class GradientForm {
    step_consistent,    // exact derivative of the discrete reward (uses lambda_{k+1})
    algorithm_literal,  // Euler only: g_k with lambda_k, differs by O(dt)
};

struct AdjointOptions {
    double lambda_clip = 1e4;            // per-node norm bound on lambda
    bool drop_guidance_hessian = false;  // omit 2 w grad^2 G from A^T lambda
    GradientForm form = GradientForm::step_consistent;
};

struct AdjointRecord {
    std::size_t dim = 0;
    std::vector<double> lambda;      // nodes x dim, lambda_N = 0 for Euler
    std::vector<double> source;      // B_k, nodes x dim
    std::vector<double> a_t_lambda;  // A_k^T applied to the propagated adjoint, nodes x dim
    std::vector<double> dynamic_w_grad;  // part of dR/dw_k that flows through the states
    std::size_t clip_events = 0;

    [[nodiscard]] std::span<const double> lambda_at(std::size_t k) const {
        return {lambda.data() + k * dim, dim};
    }
    [[nodiscard]] std::span<const double> source_at(std::size_t k) const {
        return {source.data() + k * dim, dim};
    }
};

[[nodiscard]] AdjointRecord adjoint_backward(const MixtureModel& model, const Trajectory& tr,
                                             double alpha, const AdjointOptions& opts = {});

struct WeightGradient {
    std::vector<double> g;      // per node, dR/dw_k / q_k (0 where q_k = 0 and no dynamics term)
    std::vector<double> dr_dw;  // per node, dR/dw_k for this path
};

[[nodiscard]] WeightGradient grad_reward_wrt_w(const Trajectory& tr, const AdjointRecord& adj,
                                               double alpha);

/// Batch-mean dR/dtheta by the chain rule through the schedule.
[[nodiscard]] std::vector<double> reward_gradient_theta(const MixtureModel& model,
                                                        const GuidanceSchedule& schedule,
                                                        std::span<const Trajectory> batch,
                                                        double alpha,
                                                        const AdjointOptions& opts = {},
                                                        std::size_t workers = 1);

enum class Optimizer { sgd, adam };

struct TrainOptions {
    std::size_t iterations = 25;
    std::size_t paths_per_class = 256;
    double learning_rate = 0.05;
    Optimizer optimizer = Optimizer::adam;
    double clip_norm = 10.0;  // global norm bound on dR/dtheta, <= 0 disables
    std::uint64_t seed = 0;
    bool antithetic = true;
    Method method = Method::heun;
    std::size_t workers = 1;
    AdjointOptions adjoint{};
    double grad_w_quantile_clip = 0.0;  // q in (0, 0.5) clips dR/dw_k to [Q_q, Q_{1-q}] per node
};

struct IterationReport {
    std::size_t iteration = 0;
    double mean_reward = 0.0;
    double std_error = 0.0;
    double grad_norm = 0.0;  // before global clipping
    std::size_t clip_events = 0;  // lambda clips plus one if the global clip fired
    std::vector<double> mean_w;   // per node, averaged over classes
};

struct TrainResult {
    GuidanceSchedule schedule;
    std::vector<IterationReport> history;
    bool aborted = false;
    std::string error;
};

/// Iterates simulate -> adjoint -> chain rule -> clipped ascent step.
/// Divergence stops the run; the partial history and last good schedule are kept.
[[nodiscard]] TrainResult train(const MixtureModel& model, GuidanceSchedule schedule,
                                std::span<const int> classes, double alpha,
                                std::shared_ptr<const TimeGrid> grid, const TrainOptions& opts);

/// Seed for (base seed, iteration, class slot); a fixed mixing function.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

void write_training_log_csv(std::ostream& os, std::span<const IterationReport> history);

}  // namespace adaguide
