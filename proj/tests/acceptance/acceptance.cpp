// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion, writes
// each criterion's numbers to <out>/run1, repeats everything into <out>/run2
// and requires the two sets of files to match byte for byte.
//
// Usage: adaguide_acceptance [out_dir] [--workers N] [--expect-fail 4,7]
// Criteria named in --expect-fail still print FAIL but do not fail the exit code.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adaguide/adjoint.hpp"
#include "adaguide/guarantees.hpp"
#include "adaguide/hjb.hpp"
#include "adaguide/io.hpp"
#include "adaguide/parallel.hpp"

using namespace adaguide;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;
constexpr int kClass = 0;            // the origin component is the conditioning class
constexpr double kW = 0.5;
constexpr std::size_t kNodes = 128;
constexpr std::size_t kPaths = 10000;
constexpr double kCutoff = 0.01;
constexpr double kHjbAlpha = 10.0;

// Key/value record for one criterion; every number is written with 17 digits.
class Record {
public:
    Record& put(const std::string& key, double v) {
        os_ << key << '=' << format_double(v) << '\n';
        return *this;
    }
    Record& put(const std::string& key, const std::string& v) {
        os_ << key << '=' << v << '\n';
        return *this;
    }
    [[nodiscard]] std::string str() const { return os_.str(); }

private:
    std::ostringstream os_;
};

struct Outcome {
    bool pass = false;
    std::string summary;
    Record record;
};

std::string sci(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

struct Context {
    std::size_t workers = 1;
    MixtureModel mixture = MixtureModel::four_gaussian_triangle();
    std::shared_ptr<const TimeGrid> grid =
        std::make_shared<const TimeGrid>(build_time_grid(5.0, kNodes, kCutoff));
    // Shared by criteria 3 to 6.
    std::vector<Trajectory> main_batch;
    // Shared by criteria 9 and 10.
    std::shared_ptr<const ValueGrid> hjb;

    const std::vector<Trajectory>& batch() {
        if (main_batch.empty()) {
            BatchOptions o;
            o.n_paths = kPaths;
            o.base_seed = derive_seed(kSeed, 3, 0);
            o.method = Method::heun;
            o.workers = workers;
            main_batch = simulate_batch(mixture, GuidanceSchedule::make_raw_constant(kW), kClass,
                                        grid, o);
        }
        return main_batch;
    }

    const ValueGrid& value_grid() {
        if (!hjb) {
            HjbConfig cfg;
            cfg.alpha = kHjbAlpha;
            cfg.half_width = 4.0;
            cfg.h = 0.05;
            cfg.cutoff = kCutoff;
            cfg.workers = workers;
            // Dense slices for the policy rollout; the figure panels are among them.
            for (int k = 0; k < 100; ++k) cfg.snapshot_times.push_back(0.05 * k);
            for (double t : figure_panel_times(5.0, kCutoff)) cfg.snapshot_times.push_back(t);
            hjb = std::make_shared<const ValueGrid>(solve_hjb(mixture, kClass, cfg));
        }
        return *hjb;
    }
};

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// 1. Analytic scores against central differences of the log densities.
Outcome score_correctness(Context& ctx) {
    const auto& m = ctx.mixture;
    std::mt19937_64 rng(derive_seed(kSeed, 1));
    std::uniform_real_distribution<double> ut(kCutoff, 5.0), ux(-3.0, 3.0);
    std::uniform_int_distribution<int> uc(0, 3);
    const double h = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double s = ut(rng);
        std::vector<double> x{ux(rng), ux(rng)};
        const int c = uc(rng);
        const auto sc = m.score(s, x);
        const auto cs = m.cond_score(s, x, c);
        std::vector<double> fd_s(2), fd_c(2);
        for (int j = 0; j < 2; ++j) {
            auto xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            fd_s[j] = (m.log_marginal(s, xp) - m.log_marginal(s, xm)) / (2 * h);
            fd_c[j] = (m.log_conditional(s, xp, c) - m.log_conditional(s, xm, c)) / (2 * h);
        }
        const double es = std::hypot(sc[0] - fd_s[0], sc[1] - fd_s[1]) / norm(sc);
        const double ec = std::hypot(cs[0] - fd_c[0], cs[1] - fd_c[1]) / norm(cs);
        worst = std::max({worst, es, ec});
    }
    Outcome o;
    o.pass = worst < 1e-6;
    o.summary = "score vs finite differences, max rel err " + sci(worst) + " (< 1e-6)";
    o.record.put("max_rel_err", worst);
    return o;
}

// 2. Ito residual halves under step halving.
Outcome ito_identity(Context& ctx) {
    ItoStudyOptions io;
    io.coarse_intervals = 16;
    io.refinements = 3;
    io.paths = 1000;
    io.cutoff = kCutoff;
    io.seed = derive_seed(kSeed, 2);
    io.method = Method::euler;
    io.workers = ctx.workers;
    const auto st = ito_residual_study(ctx.mixture, GuidanceSchedule::make_raw_constant(kW), kClass, io);
    Outcome o;
    o.pass = st.pass && st.ratios.size() == 3;
    std::string ratios;
    for (std::size_t i = 0; i < st.ratios.size(); ++i) {
        ratios += (i ? ", " : "") + sci(st.ratios[i]);
        o.record.put("ratio_" + std::to_string(i), st.ratios[i]);
    }
    for (const auto& l : st.levels)
        o.record.put("mean_abs_residual_" + std::to_string(l.intervals), l.abs_total_residual.mean);
    o.summary = "Ito residual halving ratios [" + ratios + "] (each in [1.3, 2.7])";
    return o;
}

// 3. Log-posterior decomposition.
Outcome decomposition(Context& ctx) {
    const auto r = decomposition_check(ctx.mixture, ctx.batch());
    Outcome o;
    o.pass = r.pass;
    o.summary = "mean log-posterior gain minus quadrature " + sci(r.statistic) + ", bound 3 stderr = " +
                sci(r.bound);
    o.record.put("difference", r.statistic).put("stderr", r.std_error);
    return o;
}

// 4. Stochastic exponential martingale and supermartingale property.
Outcome martingale(Context& ctx) {
    const auto d = martingale_diagnostics(ctx.mixture, ctx.batch(), ctx.workers);
    const auto r = martingale_check(d);
    Outcome o;
    o.pass = r.pass;
    const auto& last = d.mean_s.back();
    o.summary = "worst interior z " + sci(r.statistic) + " (<= 3), last node mean " + sci(last.mean, 4) +
                " +- " + sci(last.std_error);
    o.record.put("worst_z", r.statistic).put("last_mean", last.mean).put("last_stderr", last.std_error);
    for (std::size_t k = 0; k < d.mean_s.size(); ++k) {
        o.record.put("mean_s_" + std::to_string(k), d.mean_s[k].mean);
        o.record.put("stderr_s_" + std::to_string(k), d.mean_s[k].std_error);
    }
    return o;
}

// 5. Doob maximal bound.
Outcome doob(Context& ctx) {
    Outcome o;
    o.pass = true;
    std::string parts;
    for (double delta : {0.05, 0.1, 0.5}) {
        const auto r = doob_check(ctx.mixture, ctx.batch(), delta);
        o.pass = o.pass && r.pass;
        parts += (parts.empty() ? "" : ", ") + sci(delta) + ": " + sci(r.statistic) + " <= " + sci(r.bound);
        o.record.put("exceedance_" + sci(delta), r.statistic);
    }
    o.summary = "Doob exceedance " + parts;
    return o;
}

// 6. Girsanov KL cap with the tightest constants admitted by w = 0.5.
Outcome kl_cap(Context& ctx) {
    const auto kl = kl_trajectory_bound(ctx.mixture, ctx.batch(), kW, kW + 0.5);
    const auto r = kl_check(kl);
    Outcome o;
    o.pass = r.pass;
    o.summary = "path KL integral " + sci(kl.empirical.mean) + " +- " + sci(kl.empirical.std_error) +
                " vs cap " + sci(kl.cap);
    o.record.put("kl", kl.empirical.mean).put("stderr", kl.empirical.std_error).put("cap", kl.cap);
    return o;
}

// 7. Support recovery on two point masses.
Outcome support(Context& ctx) {
    const MixtureModel atoms(2, {{0.5, {1.0, 0.0}, 0.0, 0}, {0.5, {-1.0, 0.0}, 0.0, 1}});
    auto grid = std::make_shared<const TimeGrid>(build_time_grid(5.0, 512, kCutoff));
    const double delta = default_support_radius(kCutoff);
    Outcome o;
    o.pass = true;
    double base = 0.0, base_se = 0.0;
    std::string parts;
    for (double w : {0.0, 1.0, 2.0}) {
        BatchOptions b;
        b.n_paths = kPaths;
        b.base_seed = derive_seed(kSeed, 7);  // common noise across w
        b.method = Method::heun;
        b.workers = ctx.workers;
        const auto batch = simulate_batch(atoms, GuidanceSchedule::make_raw_constant(w), 0, grid, b);
        const auto rep = support_check(atoms, batch, delta);
        if (w == 0.0) {
            base = rep.pass_fraction;
            base_se = binomial_stderr(base, batch.size());
        }
        const bool ok = rep.pass_fraction >= 0.99 && rep.pass_fraction >= base - 3.0 * base_se;
        o.pass = o.pass && ok;
        parts += (parts.empty() ? "" : ", ") + ("w=" + sci(w)) + ": " + sci(rep.pass_fraction, 5) +
                 " (q99 " + sci(rep.q99) + ")";
        o.record.put("pass_fraction_w" + sci(w), rep.pass_fraction).put("q99_w" + sci(w), rep.q99);
    }
    o.summary = "fraction within " + sci(delta) + " of the atom, " + parts + " (>= 0.99, >= unguided - 3 se)";
    return o;
}

// 8. Terminal control identity and one backward step.
Outcome hjb_terminal(Context& ctx) {
    const auto& m = ctx.mixture;
    const auto geom = HjbGeometry::from_box(4.0, 0.05);
    const double t_end = 5.0 - kCutoff, tol_g = 1e-12, alpha = kHjbAlpha;
    const std::vector<double> zero(geom.points(), 0.0);
    const auto w = extract_w_star(m, kClass, geom, alpha, tol_g, t_end, zero);
    const double dt = hjb_stable_dt(m, kClass, geom, kCutoff, 0.9);
    std::vector<double> v(geom.points());
    hjb_backward_step(m, kClass, geom, alpha, tol_g, t_end, dt, zero, v, ctx.workers);
    double w_err = 0.0, step_err = 0.0;
    std::size_t active = 0;
    bool zero_ok = true;
    for (std::size_t j = 0; j < geom.n; ++j) {
        for (std::size_t i = 0; i < geom.n; ++i) {
            const std::vector<double> x{geom.coord(i), geom.coord(j)};
            const auto g = m.grad_g(t_end, x, kClass);
            const double g2 = g[0] * g[0] + g[1] * g[1];
            const std::size_t p = j * geom.n + i;
            if (g2 >= tol_g) {
                ++active;
                w_err = std::max(w_err, std::abs(w[p] - 1.0 / alpha));
            }
            const double expect = dt * (1.0 + 1.0 / alpha) * g2;
            if (expect > 0.0)
                step_err = std::max(step_err, std::abs(v[p] - expect) / expect);
            else
                zero_ok = zero_ok && v[p] == 0.0;
        }
    }
    const double ulp = std::nextafter(1.0 / alpha, 1.0) - 1.0 / alpha;
    Outcome o;
    o.pass = w_err <= ulp && step_err < 1e-10 && zero_ok && active > 0;
    o.summary = "terminal |w* - 1/alpha| max " + sci(w_err) + " over " + std::to_string(active) +
                " nodes (<= 1 ulp), one-step rel err " + sci(step_err) + " (< 1e-10)";
    o.record.put("w_err", w_err).put("step_rel_err", step_err).put("dt", dt);
    return o;
}

// 9. HJB slice structure and mirror symmetry.
Outcome hjb_structure(Context& ctx) {
    const auto& vg = ctx.value_grid();
    const std::size_t n = vg.geom.n;
    const auto panels = figure_panel_times(5.0, kCutoff);
    std::vector<const ValueSlice*> interior;
    for (double t : panels)
        if (t > 0.0 && t < vg.t_end) interior.push_back(&vg.nearest_slice(t));
    Outcome o;
    bool spatial = true;
    std::string cvs;
    std::vector<std::vector<double>> region_w;
    std::vector<std::size_t> region_idx;
    for (const auto* s : interior) {
        // High-density region: marginal density at least 10% of its grid maximum.
        std::vector<double> dens(vg.geom.points());
        double peak = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                const std::vector<double> x{vg.geom.coord(i), vg.geom.coord(j)};
                dens[j * n + i] = std::exp(ctx.mixture.log_marginal(s->t_forward, x));
                peak = std::max(peak, dens[j * n + i]);
            }
        double sum = 0.0, sq = 0.0;
        std::size_t cnt = 0;
        for (std::size_t p = 0; p < dens.size(); ++p)
            if (dens[p] >= 0.1 * peak) {
                sum += s->w_star[p];
                sq += s->w_star[p] * s->w_star[p];
                ++cnt;
            }
        const double mean = sum / static_cast<double>(cnt);
        const double cv = std::sqrt(std::max(0.0, sq / static_cast<double>(cnt) - mean * mean)) / std::abs(mean);
        spatial = spatial && cv > 0.05;
        cvs += (cvs.empty() ? "" : ", ") + ("t=" + sci(s->t_back)) + ": " + sci(cv);
        o.record.put("cv_t" + sci(s->t_back), cv).put("mean_w_t" + sci(s->t_back), mean);
    }
    // Time variation: relative L2 change between consecutive interior slices.
    double change = 0.0;
    for (std::size_t a = 0; a + 1 < interior.size(); ++a) {
        const auto& u = interior[a]->w_star;
        const auto& v = interior[a + 1]->w_star;
        double num = 0.0, den = 0.0;
        for (std::size_t p = 0; p < u.size(); ++p) {
            num += (u[p] - v[p]) * (u[p] - v[p]);
            den += v[p] * v[p];
        }
        change = std::max(change, std::sqrt(num / den));
    }
    // Mirror x1 -> -x1 maps the triangle, and the origin component, onto itself.
    double asym = 0.0;
    for (const auto& s : vg.slices)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i)
                asym = std::max(asym, std::abs(s.v[j * n + i] - s.v[j * n + (n - 1 - i)]));
    o.pass = spatial && change > 0.05 && asym <= 1e-6;
    o.summary = "w* CV over high-density region [" + cvs + "] (> 0.05), max slice change " + sci(change) +
                " (> 0.05), reflection asymmetry " + sci(asym) + " (<= 1e-6)";
    o.record.put("time_change", change).put("asymmetry", asym).put("steps", static_cast<double>(vg.steps));
    return o;
}

// 10. Interpolated HJB policy against constant guidance, common noise.
Outcome hjb_policy(Context& ctx) {
    ctx.value_grid();
    const double alpha = kHjbAlpha;
    BatchOptions b;
    b.n_paths = kPaths;
    b.base_seed = derive_seed(kSeed, 10);
    b.method = Method::heun;
    b.workers = ctx.workers;
    const auto run = [&](const WeightFn& w) {
        return reward_estimate(simulate_batch(ctx.mixture, w, kClass, ctx.grid, b), alpha, false);
    };
    const auto pol = run(policy_weight_fn(ctx.hjb));
    const auto inv = run(weight_fn(GuidanceSchedule::make_raw_constant(1.0 / alpha), kClass));
    const auto off = run(weight_fn(GuidanceSchedule::make_raw_constant(0.0), kClass));
    const auto d_inv = difference_mean_stderr(pol.per_path, inv.per_path, false);
    const auto d_off = difference_mean_stderr(pol.per_path, off.per_path, false);
    Outcome o;
    o.pass = d_inv.mean >= -3.0 * d_inv.std_error && d_off.mean >= -3.0 * d_off.std_error;
    o.summary = "reward w* " + sci(pol.stats.mean, 5) + ", 1/alpha " + sci(inv.stats.mean, 5) + ", zero " +
                sci(off.stats.mean, 5) + "; paired gains " + sci(d_inv.mean) + " +- " + sci(d_inv.std_error) +
                " and " + sci(d_off.mean) + " +- " + sci(d_off.std_error);
    o.record.put("reward_policy", pol.stats.mean).put("reward_inv_alpha", inv.stats.mean)
        .put("reward_zero", off.stats.mean).put("gain_inv", d_inv.mean).put("gain_zero", d_off.mean);
    return o;
}

double batch_reward(const MixtureModel& m, const GuidanceSchedule& s,
                    std::shared_ptr<const TimeGrid> g, std::size_t paths, std::uint64_t seed,
                    double alpha, std::size_t workers) {
    BatchOptions b;
    b.n_paths = paths;
    b.base_seed = seed;
    b.method = Method::euler;
    b.workers = workers;
    return reward_estimate(simulate_batch(m, s, kClass, g, b), alpha, false).stats.mean;
}

// 11. Adjoint gradient against frozen-noise finite differences, and discrete duality.
Outcome adjoint_gradient(Context& ctx) {
    const auto& m = ctx.mixture;
    const double alpha = 10.0;
    auto g = std::make_shared<const TimeGrid>(build_time_grid(5.0, 33, kCutoff));
    auto s = GuidanceSchedule::make_table(*g, 0.1);
    std::mt19937_64 rng(derive_seed(kSeed, 11));
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double& th : s.params()) th += u(rng);
    const std::uint64_t seed = derive_seed(kSeed, 11, 1);
    BatchOptions b;
    b.n_paths = 512;
    b.base_seed = seed;
    b.method = Method::euler;
    b.workers = ctx.workers;
    const auto batch = simulate_batch(m, s, kClass, g, b);
    const auto adj = reward_gradient_theta(m, s, batch, alpha, {}, ctx.workers);
    double num = 0.0, den = 0.0;
    const double eps = 1e-4;
    for (std::size_t i = 0; i < adj.size(); ++i) {
        auto sp = s, sm = s;
        sp.params()[i] += eps;
        sm.params()[i] -= eps;
        const double fd = (batch_reward(m, sp, g, 512, seed, alpha, ctx.workers) -
                           batch_reward(m, sm, g, 512, seed, alpha, ctx.workers)) / (2 * eps);
        num += (adj[i] - fd) * (adj[i] - fd);
        den += fd * fd;
    }
    const double grad_err = std::sqrt(num / den);

    // Duality: <lambda_k, Z_k> against the forward sensitivity sum with explicit A and B.
    auto g16 = std::make_shared<const TimeGrid>(build_time_grid(5.0, 17, kCutoff));
    double dual_err = 0.0;
    for (std::size_t path = 0; path < 4; ++path) {
        const auto tr = simulate(m, s, kClass, g16, GaussianNoise(derive_seed(kSeed, 11, 2)), path,
                                 Method::euler);
        const auto rec = adjoint_backward(m, tr, alpha);
        const std::size_t n = tr.size();
        std::vector<std::vector<double>> bj(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double w = tr.w[j];
            const auto gg = m.grad_g(tr.grid->nodes[j], tr.state(j), kClass);
            bj[j] = m.hess_g_vp(tr.grid->nodes[j], tr.state(j), kClass, gg);
            for (double& x : bj[j]) x *= 2.0 * (1.0 + 2.0 * w - alpha * w * w);
        }
        for (std::size_t k = 0; k + 1 < n; ++k) {
            std::vector<double> z{2.0 * tr.grad_g_at(k)[0], 2.0 * tr.grad_g_at(k)[1]};
            const double lhs = rec.lambda_at(k)[0] * z[0] + rec.lambda_at(k)[1] * z[1];
            double rhs = 0.0;
            for (std::size_t j = k; j + 1 < n; ++j) {
                rhs += tr.grid->dt(j) * (bj[j][0] * z[0] + bj[j][1] * z[1]);
                const auto az = matrix_free_a_transpose(m, tr.grid->nodes[j], tr.state(j), kClass, tr.w[j], z);
                for (int i = 0; i < 2; ++i) z[i] += tr.grid->dt(j) * az[i];
            }
            if (rhs != 0.0) dual_err = std::max(dual_err, std::abs(lhs - rhs) / std::abs(rhs));
        }
    }
    Outcome o;
    o.pass = grad_err < 1e-3 && dual_err < 1e-8;
    o.summary = "adjoint vs finite differences rel err " + sci(grad_err) + " (< 1e-3), duality rel err " +
                sci(dual_err) + " (< 1e-8)";
    o.record.put("grad_rel_err", grad_err).put("duality_rel_err", dual_err);
    return o;
}

// 12. Training improves on the initial and the constant 1/alpha schedules.
Outcome training(Context& ctx) {
    auto g = std::make_shared<const TimeGrid>(build_time_grid(5.0, 64, kCutoff));
    const std::vector<int> classes{kClass};
    Outcome o;
    o.pass = true;
    std::string parts;
    for (double alpha : {2.5, 5.0, 10.0}) {
        const auto init = GuidanceSchedule::make_class_table(*g, classes, 1.0 / alpha);
        TrainOptions t;
        t.iterations = 25;
        t.paths_per_class = 256;
        t.learning_rate = 0.1;
        t.optimizer = Optimizer::adam;
        t.clip_norm = 10.0;
        t.seed = derive_seed(kSeed, 12, static_cast<std::uint64_t>(alpha * 10));
        t.method = Method::heun;
        t.antithetic = true;
        t.workers = ctx.workers;
        const auto res = train(ctx.mixture, init, classes, alpha, g, t);
        BatchOptions b;
        b.n_paths = kPaths;
        b.base_seed = derive_seed(kSeed, 12, 1000);
        b.method = Method::heun;
        b.workers = ctx.workers;
        const auto eval = [&](const GuidanceSchedule& s) {
            return reward_estimate(simulate_batch(ctx.mixture, s, kClass, g, b), alpha, false);
        };
        const auto r_init = eval(init);
        const auto r_final = eval(res.schedule);
        const auto r_base = eval(GuidanceSchedule::make_raw_constant(1.0 / alpha));
        const auto d_init = difference_mean_stderr(r_final.per_path, r_init.per_path, false);
        const auto d_base = difference_mean_stderr(r_final.per_path, r_base.per_path, false);
        const bool ok = !res.aborted && d_init.mean >= -3.0 * d_init.std_error &&
                        d_base.mean >= -3.0 * d_base.std_error;
        o.pass = o.pass && ok;
        parts += (parts.empty() ? "" : "; ") + ("alpha=" + sci(alpha)) + ": " + sci(r_init.stats.mean, 5) +
                 " -> " + sci(r_final.stats.mean, 5) + " (gain " + sci(d_init.mean) + " +- " +
                 sci(d_init.std_error) + ")";
        const std::string a = sci(alpha);
        o.record.put("initial_" + a, r_init.stats.mean).put("final_" + a, r_final.stats.mean)
            .put("baseline_" + a, r_base.stats.mean).put("gain_init_" + a, d_init.mean)
            .put("gain_base_" + a, d_base.mean);
        for (const auto& it : res.history)
            o.record.put("train_reward_" + a + "_" + std::to_string(it.iteration), it.mean_reward);
    }
    o.summary = "trained reward " + parts;
    return o;
}

struct Criterion {
    int id;
    const char* title;
    std::function<Outcome(Context&)> run;
};

std::vector<Criterion> criteria() {
    return {{1, "score correctness", score_correctness},
            {2, "Ito identity under refinement", ito_identity},
            {3, "log-posterior decomposition", decomposition},
            {4, "stochastic exponential martingale", martingale},
            {5, "Doob bound", doob},
            {6, "Girsanov KL cap", kl_cap},
            {7, "support recovery", support},
            {8, "HJB terminal identity", hjb_terminal},
            {9, "HJB slice structure", hjb_structure},
            {10, "HJB policy optimality", hjb_policy},
            {11, "adjoint gradient", adjoint_gradient},
            {12, "training improvement", training}};
}

std::string file_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "criterion_%02d.txt", id);
    return buf;
}

// Runs every criterion once, writing result files into dir.
std::vector<Outcome> run_all(const fs::path& dir, std::size_t workers, bool verbose) {
    fs::create_directories(dir);
    Context ctx;
    ctx.workers = workers;
    std::vector<Outcome> out;
    for (const auto& c : criteria()) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(ctx);
        } catch (const std::exception& e) {
            o.pass = false;
            o.summary = std::string("error: ") + e.what();
            o.record.put("error", e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_file(dir / file_name(c.id), o.record.str());
        if (verbose) {
            std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): "
                      << o.summary << " [" << sci(secs, 3) << " s]" << std::endl;
        }
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    fs::path out = "acceptance_results";
    std::size_t workers = default_workers();
    std::set<int> expected_fail;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--workers" && i + 1 < argc) {
            workers = std::stoul(argv[++i]);
        } else if (a == "--expect-fail" && i + 1 < argc) {
            std::stringstream ids(argv[++i]);
            for (std::string id; std::getline(ids, id, ',');) expected_fail.insert(std::stoi(id));
        } else {
            out = a;
        }
    }
    const auto first = run_all(out / "run1", workers, true);
    const auto second = run_all(out / "run2", workers, false);
    std::vector<std::string> differing;
    for (const auto& c : criteria()) {
        const auto a = read_file(out / "run1" / file_name(c.id));
        const auto b = read_file(out / "run2" / file_name(c.id));
        if (a != b) differing.push_back(std::to_string(c.id));
    }
    const bool repro = differing.empty();
    std::string diff_list;
    for (const auto& d : differing) diff_list += (diff_list.empty() ? "" : ",") + d;
    std::cout << (repro ? "PASS" : "FAIL") << " criterion 13 (reproducibility): "
              << (repro ? "all 12 result files byte-identical on a repeated run"
                        : "result files differ for criteria " + diff_list)
              << std::endl;

    std::vector<int> failed;
    for (std::size_t i = 0; i < first.size(); ++i)
        if (!first[i].pass) failed.push_back(criteria()[i].id);
    if (!repro) failed.push_back(13);
    bool unexpected = false;
    std::string list;
    for (int id : failed) {
        list += (list.empty() ? "" : ", ") + std::to_string(id);
        unexpected = unexpected || !expected_fail.count(id);
    }
    std::cout << (13 - failed.size()) << " of 13 criteria pass";
    if (!failed.empty()) std::cout << "; failed: " << list;
    if (!failed.empty() && !unexpected) std::cout << " (all listed as expected failures)";
    std::cout << std::endl;
    return unexpected ? 1 : 0;
}
