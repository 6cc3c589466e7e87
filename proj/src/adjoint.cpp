// SPDX-License-Identifier: Apache-2.0
#include "adaguide/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "adaguide/errors.hpp"
#include "adaguide/io.hpp"
#include "adaguide/parallel.hpp"

namespace adaguide {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// A^T v from already-evaluated fields. h1, h2 are scratch of length d.
void a_transpose(const LocalFields& f, double w, bool drop_g, std::span<const double> v,
                 std::span<double> out, std::span<double> h1, std::span<double> h2) {
    hess_log_conditional_vp(f, v, h1);
    if (!drop_g) hess_g_vp(f, v, h2);
    for (std::size_t j = 0; j < v.size(); ++j)
        out[j] = v[j] + 2.0 * h1[j] + (drop_g ? 0.0 : 2.0 * w * h2[j]);
}

// B = 2 (1 + 2w - alpha w^2) grad^2 G grad G.
void source_term(const LocalFields& f, double w, double alpha, std::span<double> out) {
    hess_g_vp(f, f.grad_g, out);
    const double coef = 2.0 * (1.0 + 2.0 * w - alpha * w * w);
    for (double& x : out) x *= coef;
}

bool clip_norm(std::span<double> v, double bound) {
    if (!(bound > 0.0)) return false;
    const double n = norm(v);
    if (n <= bound) return false;
    const double s = bound / n;
    for (double& x : v) x *= s;
    return true;
}

void check_finite(std::span<const double> v, std::size_t k) {
    for (double x : v)
        if (!std::isfinite(x)) throw DivergenceError("non-finite adjoint state", k);
}

}  // namespace

std::vector<double> quadrature_weights(const TimeGrid& grid, Method method) {
    const std::size_t n = grid.size();
    std::vector<double> q(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double dt = grid.dt(k);
        if (method == Method::euler) {
            q[k] += dt;
        } else {
            q[k] += 0.5 * dt;
            q[k + 1] += 0.5 * dt;
        }
    }
    return q;
}

double path_reward(const Trajectory& tr, double alpha) {
    const auto q = quadrature_weights(*tr.grid, tr.method);
    double r = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const double w = tr.w[k];
        r += q[k] * (1.0 + 2.0 * w - alpha * w * w) * tr.grad_g_norm2(k);
    }
    return r;
}

RewardEstimate reward_estimate(std::span<const Trajectory> batch, double alpha, bool antithetic) {
    RewardEstimate out;
    out.per_path.reserve(batch.size());
    for (const auto& tr : batch) out.per_path.push_back(path_reward(tr, alpha));
    out.stats = antithetic ? paired_mean_stderr(out.per_path) : mean_stderr(out.per_path);
    return out;
}

std::vector<double> matrix_free_a_transpose(const MixtureModel& model, double backward_time,
                                            std::span<const double> x, int c, double w,
                                            std::span<const double> v,
                                            bool drop_guidance_hessian) {
    if (v.size() != model.dim()) throw InvalidInput("vector dimension mismatch");
    LocalFields f;
    model.evaluate(model.forward_time_of(backward_time), x, c, f);
    const std::size_t d = model.dim();
    std::vector<double> out(d), h1(d), h2(d);
    a_transpose(f, w, drop_guidance_hessian, v, out, h1, h2);
    return out;
}

AdjointRecord adjoint_backward(const MixtureModel& model, const Trajectory& tr, double alpha,
                               const AdjointOptions& opts) {
    const std::size_t d = tr.dim;
    const std::size_t n = tr.size();
    const TimeGrid& grid = *tr.grid;
    const auto q = quadrature_weights(grid, tr.method);
    if (opts.form == GradientForm::algorithm_literal && tr.method != Method::euler)
        throw InvalidInput("the literal gradient form is defined for Euler trajectories only");

    AdjointRecord rec;
    rec.dim = d;
    rec.lambda.assign(n * d, 0.0);
    rec.source.assign(n * d, 0.0);
    rec.a_t_lambda.assign(n * d, 0.0);
    rec.dynamic_w_grad.assign(n, 0.0);

    LocalFields f, fp;
    std::vector<double> h1(d), h2(d), u(d), z(d), az(d);
    auto lam = [&](std::size_t k) { return std::span<double>(rec.lambda.data() + k * d, d); };
    auto src = [&](std::size_t k) { return std::span<double>(rec.source.data() + k * d, d); };
    auto atl = [&](std::size_t k) { return std::span<double>(rec.a_t_lambda.data() + k * d, d); };

    const int c = tr.label;
    auto eval_at = [&](std::size_t k, LocalFields& fields) {
        model.evaluate(model.forward_time_of(grid.nodes[k]), tr.state(k), c, fields);
    };

    eval_at(n - 1, f);
    source_term(f, tr.w[n - 1], alpha, src(n - 1));

    if (tr.method == Method::euler) {
        // lambda_N = 0; B_N only matters through q_N, which is zero.
        for (std::size_t k = n - 1; k-- > 0;) {
            const double dt = grid.dt(k);
            eval_at(k, f);
            const double w = tr.w[k];
            source_term(f, w, alpha, src(k));
            auto next = lam(k + 1);
            a_transpose(f, w, opts.drop_guidance_hessian, next, atl(k), h1, h2);
            auto cur = lam(k);
            for (std::size_t j = 0; j < d; ++j) cur[j] = next[j] + dt * (src(k)[j] + atl(k)[j]);
            check_finite(cur, k);
            if (clip_norm(cur, opts.lambda_clip)) ++rec.clip_events;
            const auto used = opts.form == GradientForm::step_consistent ? next : cur;
            rec.dynamic_w_grad[k] = dt * 2.0 * dot(used, tr.grad_g_at(k));
        }
        return rec;
    }

    // Heun: mu_k = dR/dY_k through Y_{k+1} = Y_k + dt/2 (f_k(Y_k) + f_{k+1}(P_k)) + noise,
    // P_k = Y_k + dt f_k(Y_k) + noise.
    {
        auto last = lam(n - 1);
        for (std::size_t j = 0; j < d; ++j) last[j] = q[n - 1] * src(n - 1)[j];
    }
    for (std::size_t k = n - 1; k-- > 0;) {
        const double dt = grid.dt(k);
        const double t1 = grid.nodes[k + 1];
        auto next = lam(k + 1);
        model.evaluate(model.forward_time_of(t1), tr.predictor_at(k), c, fp);
        a_transpose(fp, tr.w_predictor[k], opts.drop_guidance_hessian, next, u, h1, h2);
        for (std::size_t j = 0; j < d; ++j) z[j] = next[j] + dt * u[j];

        eval_at(k, f);
        const double w = tr.w[k];
        source_term(f, w, alpha, src(k));
        a_transpose(f, w, opts.drop_guidance_hessian, z, az, h1, h2);
        std::copy(az.begin(), az.end(), atl(k).begin());
        auto cur = lam(k);
        for (std::size_t j = 0; j < d; ++j)
            cur[j] = q[k] * src(k)[j] + next[j] + 0.5 * dt * (az[j] + u[j]);
        check_finite(cur, k);
        if (clip_norm(cur, opts.lambda_clip)) ++rec.clip_events;

        rec.dynamic_w_grad[k] += 0.5 * dt * 2.0 * dot(tr.grad_g_at(k), z);
        rec.dynamic_w_grad[k + 1] += 0.5 * dt * 2.0 * dot(fp.grad_g, next);
    }
    return rec;
}

WeightGradient grad_reward_wrt_w(const Trajectory& tr, const AdjointRecord& adj, double alpha) {
    const auto q = quadrature_weights(*tr.grid, tr.method);
    const std::size_t n = tr.size();
    WeightGradient out;
    out.g.assign(n, 0.0);
    out.dr_dw.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double direct = 2.0 * (1.0 - alpha * tr.w[k]) * tr.grad_g_norm2(k);
        out.dr_dw[k] = q[k] * direct + adj.dynamic_w_grad[k];
        if (q[k] > 0.0)
            out.g[k] = direct + adj.dynamic_w_grad[k] / q[k];
        else
            out.g[k] = direct;
    }
    return out;
}

namespace {

// Per-path dR/dw rows plus lambda clip count.
struct BatchSensitivity {
    std::vector<std::vector<double>> dr_dw;
    std::size_t clip_events = 0;
};

BatchSensitivity batch_sensitivity(const MixtureModel& model, std::span<const Trajectory> batch,
                                   double alpha, const AdjointOptions& opts, std::size_t workers) {
    BatchSensitivity out;
    out.dr_dw.resize(batch.size());
    std::vector<std::size_t> clips(batch.size(), 0);
    parallel_for(batch.size(), workers, [&](std::size_t p) {
        const auto rec = adjoint_backward(model, batch[p], alpha, opts);
        clips[p] = rec.clip_events;
        out.dr_dw[p] = grad_reward_wrt_w(batch[p], rec, alpha).dr_dw;
    });
    out.clip_events = std::accumulate(clips.begin(), clips.end(), std::size_t{0});
    return out;
}

void quantile_clip(std::vector<std::vector<double>>& rows, double q) {
    if (!(q > 0.0) || rows.empty()) return;
    if (q >= 0.5) throw InvalidInput("quantile clip level must lie in (0, 0.5)");
    const std::size_t n = rows.front().size();
    std::vector<double> col(rows.size());
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t p = 0; p < rows.size(); ++p) col[p] = rows[p][k];
        const double lo = quantile(col, q);
        const double hi = quantile(col, 1.0 - q);
        for (auto& r : rows) r[k] = std::clamp(r[k], lo, hi);
    }
}

// Accumulates mean_p sum_k dR/dw_k dw_k/dtheta into grad (scaled by `scale`).
void chain_rule(const GuidanceSchedule& schedule, std::span<const Trajectory> batch,
                const std::vector<std::vector<double>>& dr_dw, double scale,
                std::vector<double>& grad) {
    if (schedule.kind() == GuidanceSchedule::Kind::raw_constant) return;
    for (std::size_t p = 0; p < batch.size(); ++p) {
        const auto& tr = batch[p];
        for (std::size_t k = 0; k < tr.size(); ++k) {
            if (dr_dw[p][k] == 0.0) continue;
            const auto sg = schedule.grad_w_wrt_params(tr.grid->nodes[k], tr.label);
            grad[sg.index] += scale * dr_dw[p][k] * sg.value;
        }
    }
}

}  // namespace

std::vector<double> reward_gradient_theta(const MixtureModel& model,
                                          const GuidanceSchedule& schedule,
                                          std::span<const Trajectory> batch, double alpha,
                                          const AdjointOptions& opts, std::size_t workers) {
    std::vector<double> grad(schedule.params().size(), 0.0);
    if (batch.empty()) return grad;
    const auto sens = batch_sensitivity(model, batch, alpha, opts, workers);
    chain_rule(schedule, batch, sens.dr_dw, 1.0 / static_cast<double>(batch.size()), grad);
    return grad;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a simple combination.
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(base) ^ a) ^ (b + 0x632be59bd9b4e019ULL));
}

TrainResult train(const MixtureModel& model, GuidanceSchedule schedule,
                  std::span<const int> classes, double alpha,
                  std::shared_ptr<const TimeGrid> grid, const TrainOptions& opts) {
    if (!(alpha > 0.0)) throw InvalidInput("alpha must be positive");
    if (classes.empty()) throw InvalidInput("training needs at least one class");
    if (opts.paths_per_class == 0) throw InvalidInput("paths_per_class must be positive");
    if (opts.antithetic && opts.paths_per_class % 2 != 0)
        throw InvalidInput("antithetic sampling needs an even number of paths");
    if (!(opts.learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
    if (schedule.kind() == GuidanceSchedule::Kind::raw_constant)
        throw InvalidInput("raw constant schedules have no trainable parameters");
    for (int c : classes)
        if (!model.has_class(c)) throw InvalidInput("unknown class label " + std::to_string(c));

    TrainResult result{schedule, {}, false, {}};
    const std::size_t n_params = schedule.params().size();
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    for (std::size_t it = 0; it < opts.iterations; ++it) {
        IterationReport rep;
        rep.iteration = it;
        rep.mean_w.assign(grid->size(), 0.0);
        std::vector<double> grad(n_params, 0.0);
        std::vector<double> rewards;
        try {
            for (std::size_t ci = 0; ci < classes.size(); ++ci) {
                const int c = classes[ci];
                BatchOptions bo;
                bo.n_paths = opts.paths_per_class;
                bo.antithetic = opts.antithetic;
                bo.base_seed = derive_seed(opts.seed, it, ci);
                bo.method = opts.method;
                bo.workers = opts.workers;
                const auto batch = simulate_batch(model, schedule, c, grid, bo);
                const auto est = reward_estimate(batch, alpha, opts.antithetic);
                rewards.insert(rewards.end(), est.per_path.begin(), est.per_path.end());
                auto sens = batch_sensitivity(model, batch, alpha, opts.adjoint, opts.workers);
                rep.clip_events += sens.clip_events;
                quantile_clip(sens.dr_dw, opts.grad_w_quantile_clip);
                const double scale = 1.0 / static_cast<double>(batch.size() * classes.size());
                chain_rule(schedule, batch, sens.dr_dw, scale, grad);
                for (std::size_t k = 0; k < grid->size(); ++k)
                    rep.mean_w[k] += schedule.eval_w(grid->nodes[k], c) /
                                     static_cast<double>(classes.size());
            }
        } catch (const DivergenceError& e) {
            result.aborted = true;
            result.error = std::string(e.what()) + " at step " + std::to_string(e.step()) +
                           " in iteration " + std::to_string(it);
            break;
        }
        const MeanStderr ms = opts.antithetic ? paired_mean_stderr(rewards) : mean_stderr(rewards);
        rep.mean_reward = ms.mean;
        rep.std_error = ms.std_error;

        double gn = 0.0;
        for (double g : grad) gn += g * g;
        gn = std::sqrt(gn);
        rep.grad_norm = gn;
        if (opts.clip_norm > 0.0 && gn > opts.clip_norm) {
            const double s = opts.clip_norm / gn;
            for (double& g : grad) g *= s;
            ++rep.clip_events;
        }

        auto theta = schedule.params();
        if (opts.optimizer == Optimizer::sgd) {
            for (std::size_t i = 0; i < n_params; ++i) theta[i] += opts.learning_rate * grad[i];
        } else {
            const double t = static_cast<double>(it + 1);
            const double c1 = 1.0 - std::pow(beta1, t);
            const double c2 = 1.0 - std::pow(beta2, t);
            for (std::size_t i = 0; i < n_params; ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                theta[i] += opts.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
        }
        result.history.push_back(std::move(rep));
        result.schedule = schedule;
    }
    return result;
}

void write_training_log_csv(std::ostream& os, std::span<const IterationReport> history) {
    os << "iteration,mean_reward,stderr,grad_norm,clip_events\n";
    for (const auto& r : history)
        os << r.iteration << ',' << format_double(r.mean_reward) << ','
           << format_double(r.std_error) << ',' << format_double(r.grad_norm) << ','
           << r.clip_events << '\n';
}

}  // namespace adaguide
