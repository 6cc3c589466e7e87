// SPDX-License-Identifier: Apache-2.0
#include "adaguide/sde.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "adaguide/errors.hpp"
#include "adaguide/io.hpp"
#include "adaguide/parallel.hpp"

namespace adaguide {

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

double Trajectory::grad_g_norm2(std::size_t k) const {
    double s = 0.0;
    for (double g : grad_g_at(k)) s += g * g;
    return s;
}

WeightFn weight_fn(const GuidanceSchedule& schedule, int c) {
    return [&schedule, c](double t, std::span<const double>) { return schedule.eval_w(t, c); };
}

void guided_drift(const MixtureModel& model, int c, double t, std::span<const double> y, double w,
                  LocalFields& f, std::span<double> out) {
    model.evaluate(model.forward_time_of(t), y, c, f);
    for (std::size_t j = 0; j < y.size(); ++j)
        out[j] = y[j] + 2.0 * f.cond_score[j] + 2.0 * w * f.grad_g[j];
}

Trajectory simulate(const MixtureModel& model, const WeightFn& weight, int c,
                    std::shared_ptr<const TimeGrid> grid, const NoiseSource& source,
                    std::size_t path_id, Method method) {
    if (!grid || grid->size() < 2) throw InvalidInput("simulation needs a time grid");
    if (!model.has_class(c)) throw InvalidInput("unknown class label " + std::to_string(c));
    if (std::abs(grid->horizon - model.horizon()) > 1e-12)
        throw InvalidInput("time grid horizon differs from the model horizon");
    const std::size_t d = model.dim();
    const std::size_t n = grid->size();
    PathNoise noise = source.draw(path_id, *grid, d);

    Trajectory tr;
    tr.grid = grid;
    tr.label = c;
    tr.method = method;
    tr.path_id = path_id;
    tr.dim = d;
    tr.states.resize(n * d);
    tr.w.resize(n);
    tr.grad_g.resize(n * d);
    if (method == Method::heun) {
        tr.predictor.resize((n - 1) * d);
        tr.w_predictor.resize(n - 1);
    }
    std::copy(noise.initial.begin(), noise.initial.end(), tr.states.begin());
    tr.noise = std::move(noise.increments);

    const double root2 = std::numbers::sqrt2;
    LocalFields f;
    std::vector<double> drift(d), drift_pred(d), pred(d);
    for (std::size_t k = 0;; ++k) {
        const double t = grid->nodes[k];
        std::span<double> y(tr.states.data() + k * d, d);
        if (!all_finite(y)) throw DivergenceError("non-finite state", k);
        const double wk = weight(t, y);
        tr.w[k] = wk;
        guided_drift(model, c, t, y, wk, f, drift);
        std::copy(f.grad_g.begin(), f.grad_g.end(), tr.grad_g.begin() + static_cast<std::ptrdiff_t>(k * d));
        if (k + 1 == n) break;

        const double dt = grid->dt(k);
        const double* db = tr.noise.data() + k * d;
        double* next = tr.states.data() + (k + 1) * d;
        if (method == Method::euler) {
            for (std::size_t j = 0; j < d; ++j) next[j] = y[j] + dt * drift[j] + root2 * db[j];
        } else {
            for (std::size_t j = 0; j < d; ++j) pred[j] = y[j] + dt * drift[j] + root2 * db[j];
            if (!all_finite(pred)) throw DivergenceError("non-finite predictor", k);
            const double t1 = grid->nodes[k + 1];
            const double wp = weight(t1, pred);
            guided_drift(model, c, t1, pred, wp, f, drift_pred);
            std::copy(pred.begin(), pred.end(), tr.predictor.begin() + static_cast<std::ptrdiff_t>(k * d));
            tr.w_predictor[k] = wp;
            for (std::size_t j = 0; j < d; ++j)
                next[j] = y[j] + 0.5 * dt * (drift[j] + drift_pred[j]) + root2 * db[j];
        }
    }
    return tr;
}

Trajectory simulate(const MixtureModel& model, const GuidanceSchedule& schedule, int c,
                    std::shared_ptr<const TimeGrid> grid, const NoiseSource& noise,
                    std::size_t path_id, Method method) {
    return simulate(model, weight_fn(schedule, c), c, std::move(grid), noise, path_id, method);
}

std::vector<Trajectory> simulate_batch(const MixtureModel& model, const WeightFn& w, int c,
                                       std::shared_ptr<const TimeGrid> grid,
                                       const NoiseSource& noise, std::size_t n_paths,
                                       Method method, std::size_t workers) {
    std::vector<Trajectory> out(n_paths);
    parallel_for(n_paths, workers, [&](std::size_t p) {
        out[p] = simulate(model, w, c, grid, noise, p, method);
    });
    return out;
}

std::vector<Trajectory> simulate_batch(const MixtureModel& model, const WeightFn& w, int c,
                                       std::shared_ptr<const TimeGrid> grid,
                                       const BatchOptions& opts) {
    if (opts.antithetic && opts.n_paths % 2 != 0)
        throw InvalidInput("antithetic sampling needs an even number of paths");
    const GaussianNoise noise(opts.base_seed, opts.antithetic);
    return simulate_batch(model, w, c, std::move(grid), noise, opts.n_paths, opts.method,
                          opts.workers);
}

std::vector<Trajectory> simulate_batch(const MixtureModel& model,
                                       const GuidanceSchedule& schedule, int c,
                                       std::shared_ptr<const TimeGrid> grid,
                                       const BatchOptions& opts) {
    return simulate_batch(model, weight_fn(schedule, c), c, std::move(grid), opts);
}

void write_trajectories_csv(std::ostream& os, std::span<const Trajectory> batch) {
    const std::size_t d = batch.empty() ? 0 : batch.front().dim;
    os << "path_id,k,t_k";
    for (std::size_t j = 0; j < d; ++j) os << ",y" << (j + 1);
    os << ",w_k,grad_g_norm2\n";
    for (const auto& tr : batch) {
        for (std::size_t k = 0; k < tr.size(); ++k) {
            os << tr.path_id << ',' << k << ',' << format_double(tr.grid->nodes[k]);
            for (double y : tr.state(k)) os << ',' << format_double(y);
            os << ',' << format_double(tr.w[k]) << ',' << format_double(tr.grad_g_norm2(k)) << '\n';
        }
    }
}

}  // namespace adaguide
