// SPDX-License-Identifier: Apache-2.0
//
// Guided reverse SDE in backward time t in [0, T - cutoff]:
//   dY = [Y + 2 grad log p_{T-t}(Y | c) + 2 w grad G_t(Y)] dt + sqrt(2) dB,
//   Y_0 ~ N(0, I).
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "adaguide/mixture_model.hpp"
#include "adaguide/noise.hpp"
#include "adaguide/schedule.hpp"
#include "adaguide/time_grid.hpp"

namespace adaguide {

enum class Method { euler, heun };

/// w(t, y). Schedules ignore y; the HJB policy adapter does not.
using WeightFn = std::function<double(double t, std::span<const double> y)>;

[[nodiscard]] WeightFn weight_fn(const GuidanceSchedule& schedule, int c);

struct Trajectory {
    std::shared_ptr<const TimeGrid> grid;
    int label = 0;
    Method method = Method::heun;
    std::size_t path_id = 0;
    std::size_t dim = 0;
    std::vector<double> states;       // nodes x dim
    std::vector<double> noise;        // (nodes - 1) x dim
    std::vector<double> w;            // w_k at (t_k, Y_k)
    std::vector<double> grad_g;       // nodes x dim, grad G_{t_k}(Y_k)
    std::vector<double> predictor;    // Heun only: (nodes - 1) x dim
    std::vector<double> w_predictor;  // Heun only: w at (t_{k+1}, predictor_k)

    [[nodiscard]] std::size_t size() const noexcept { return w.size(); }
    [[nodiscard]] std::span<const double> state(std::size_t k) const {
        return {states.data() + k * dim, dim};
    }
    [[nodiscard]] std::span<const double> grad_g_at(std::size_t k) const {
        return {grad_g.data() + k * dim, dim};
    }
    [[nodiscard]] std::span<const double> predictor_at(std::size_t k) const {
        return {predictor.data() + k * dim, dim};
    }
    [[nodiscard]] std::span<const double> increment(std::size_t k) const {
        return {noise.data() + k * dim, dim};
    }
    [[nodiscard]] std::span<const double> terminal() const { return state(size() - 1); }
    [[nodiscard]] double grad_g_norm2(std::size_t k) const;
};

/// Drift f(t, y) for a given w, written to `out`. `fields` is scratch space.
void guided_drift(const MixtureModel& model, int c, double t, std::span<const double> y, double w,
                  LocalFields& fields, std::span<double> out);

/// Integrates one path. Throws DivergenceError on a non-finite state.
Trajectory simulate(const MixtureModel& model, const WeightFn& w, int c,
                    std::shared_ptr<const TimeGrid> grid, const NoiseSource& noise,
                    std::size_t path_id, Method method);

Trajectory simulate(const MixtureModel& model, const GuidanceSchedule& schedule, int c,
                    std::shared_ptr<const TimeGrid> grid, const NoiseSource& noise,
                    std::size_t path_id, Method method);

struct BatchOptions {
    std::size_t n_paths = 0;
    bool antithetic = false;
    std::uint64_t base_seed = 0;
    Method method = Method::heun;
    std::size_t workers = 1;
};

/// Gaussian-noise batch. Paths 2m and 2m+1 are antithetic partners when enabled.
std::vector<Trajectory> simulate_batch(const MixtureModel& model, const WeightFn& w, int c,
                                       std::shared_ptr<const TimeGrid> grid,
                                       const BatchOptions& opts);

std::vector<Trajectory> simulate_batch(const MixtureModel& model,
                                       const GuidanceSchedule& schedule, int c,
                                       std::shared_ptr<const TimeGrid> grid,
                                       const BatchOptions& opts);

/// Batch over an arbitrary noise source (paths 0..n_paths-1).
std::vector<Trajectory> simulate_batch(const MixtureModel& model, const WeightFn& w, int c,
                                       std::shared_ptr<const TimeGrid> grid,
                                       const NoiseSource& noise, std::size_t n_paths,
                                       Method method, std::size_t workers);

/// CSV: path_id,k,t_k,y1..yd,w_k,grad_g_norm2 with a header row.
void write_trajectories_csv(std::ostream& os, std::span<const Trajectory> batch);

}  // namespace adaguide
