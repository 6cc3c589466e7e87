// SPDX-License-Identifier: Apache-2.0
#include "adaguide/guarantees.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include "adaguide/adjoint.hpp"
#include "adaguide/errors.hpp"
#include "adaguide/parallel.hpp"

namespace adaguide {

namespace {

double posterior_at(const MixtureModel& model, const Trajectory& tr, std::size_t k) {
    return model.log_posterior(model.forward_time_of(tr.grid->nodes[k]), tr.state(k), tr.label);
}

double guiding_at(const MixtureModel& model, const Trajectory& tr, std::size_t k) {
    return model.guiding_field(tr.grid->nodes[k], tr.state(k), tr.label);
}

// Pins Y_0 to x and draws Gaussian increments from the wrapped stream.
class PinnedNoise final : public NoiseSource {
public:
    PinnedNoise(std::vector<double> x, std::uint64_t seed) : x_(std::move(x)), inner_(seed) {}
    PathNoise draw(std::size_t path, const TimeGrid& grid, std::size_t dim) const override {
        PathNoise n = inner_.draw(path, grid, dim);
        n.initial = x_;
        return n;
    }

private:
    std::vector<double> x_;
    GaussianNoise inner_;
};

}  // namespace

std::string checks_to_json(std::span<const CheckResult> checks) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    bool all = true;
    for (const auto& c : checks) {
        nlohmann::ordered_json j;
        j["name"] = c.name;
        j["statistic"] = c.statistic;
        j["bound"] = c.bound;
        j["stderr"] = c.std_error;
        j["pass"] = c.pass;
        j["asserted"] = c.asserted;
        arr.push_back(std::move(j));
        if (c.asserted && !c.pass) all = false;
    }
    nlohmann::ordered_json doc;
    doc["checks"] = std::move(arr);
    doc["all_pass"] = all;
    return doc.dump(2) + "\n";
}

std::vector<double> running_integral(const Trajectory& tr) {
    const std::size_t n = tr.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double dt = tr.grid->dt(k);
        const double a = 2.0 * tr.w[k] * tr.grad_g_norm2(k);
        double inc = dt * a;
        if (tr.method == Method::heun) inc = 0.5 * dt * (a + 2.0 * tr.w[k + 1] * tr.grad_g_norm2(k + 1));
        out[k + 1] = out[k] + inc;
    }
    return out;
}

std::vector<double> stochastic_exponential(const MixtureModel& model, const Trajectory& tr) {
    const auto integral = running_integral(tr);
    const double log_prior = std::log(model.class_prior(tr.label));
    std::vector<double> s(tr.size());
    for (std::size_t k = 0; k < tr.size(); ++k)
        s[k] = std::exp(log_prior - posterior_at(model, tr, k) + integral[k]);
    return s;
}

MartingaleDiagnostics martingale_diagnostics(const MixtureModel& model,
                                             std::span<const Trajectory> batch,
                                             std::size_t workers) {
    MartingaleDiagnostics d;
    d.paths = batch.size();
    if (batch.empty()) return d;
    d.nodes = batch.front().size();
    d.s.assign(d.paths * d.nodes, 0.0);
    d.integral.assign(d.paths * d.nodes, 0.0);
    parallel_for(d.paths, workers, [&](std::size_t p) {
        if (batch[p].size() != d.nodes) throw InvalidInput("batch paths differ in length");
        const auto s = stochastic_exponential(model, batch[p]);
        const auto i = running_integral(batch[p]);
        std::copy(s.begin(), s.end(), d.s.begin() + static_cast<std::ptrdiff_t>(p * d.nodes));
        std::copy(i.begin(), i.end(), d.integral.begin() + static_cast<std::ptrdiff_t>(p * d.nodes));
    });
    std::vector<double> col(d.paths);
    for (std::size_t k = 0; k < d.nodes; ++k) {
        for (std::size_t p = 0; p < d.paths; ++p) col[p] = d.s[p * d.nodes + k];
        d.mean_s.push_back(mean_stderr(col));
    }
    return d;
}

CheckResult martingale_check(const MartingaleDiagnostics& diag) {
    CheckResult r;
    r.name = "martingale_mean";
    r.bound = 3.0;
    r.pass = !diag.mean_s.empty();
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < diag.mean_s.size(); ++k) {
        const auto& m = diag.mean_s[k];
        const double z = m.std_error > 0.0 ? std::abs(m.mean - 1.0) / m.std_error
                                           : (std::abs(m.mean - 1.0) > 1e-12 ? INFINITY : 0.0);
        if (z > worst) {
            worst = z;
            r.std_error = m.std_error;
        }
        if (!(z <= 3.0)) r.pass = false;
    }
    if (!diag.mean_s.empty()) {
        const auto& last = diag.mean_s.back();
        if (!(last.mean <= 1.0 + 3.0 * last.std_error + 1e-12)) r.pass = false;
    }
    r.statistic = worst;
    return r;
}

CheckResult doob_check(const MixtureModel& model, std::span<const Trajectory> batch,
                       double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("delta must lie in (0, 1)");
    const double log_delta = std::log(delta);
    std::size_t hits = 0;
    for (const auto& tr : batch) {
        const auto integral = running_integral(tr);
        for (std::size_t k = 0; k < tr.size(); ++k) {
            if (guiding_at(model, tr, k) - integral[k] < log_delta) {
                ++hits;
                break;
            }
        }
    }
    CheckResult r;
    r.name = "doob_exceedance_delta_" + std::to_string(delta).substr(0, 4);
    r.statistic = batch.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(batch.size());
    r.std_error = binomial_stderr(delta, batch.size());
    r.bound = delta + 3.0 * r.std_error;
    r.pass = r.statistic <= r.bound;
    return r;
}

double total_ito_residual(const MixtureModel& model, const Trajectory& tr) {
    const double root2 = std::sqrt(2.0);
    double total = 0.0;
    double g_prev = guiding_at(model, tr, 0);
    for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
        const double g_next = guiding_at(model, tr, k + 1);
        const double dt = tr.grid->dt(k);
        double mart = 0.0;
        const auto gg = tr.grad_g_at(k);
        const auto db = tr.increment(k);
        for (std::size_t j = 0; j < tr.dim; ++j) mart += gg[j] * db[j];
        total += (g_next - g_prev) - (1.0 + 2.0 * tr.w[k]) * tr.grad_g_norm2(k) * dt - root2 * mart;
        g_prev = g_next;
    }
    return total;
}

ItoStudy ito_residual_study(const MixtureModel& model, const GuidanceSchedule& schedule, int c,
                            const ItoStudyOptions& opts) {
    if (opts.coarse_intervals == 0 || opts.paths == 0)
        throw InvalidInput("study needs intervals and paths");
    const std::size_t finest = opts.coarse_intervals << opts.refinements;
    const RefinedGaussianNoise noise(opts.seed, finest);
    ItoStudy study;
    for (std::size_t level = 0; level <= opts.refinements; ++level) {
        const std::size_t m = opts.coarse_intervals << level;
        auto grid = std::make_shared<const TimeGrid>(
            build_time_grid(model.horizon(), m + 1, opts.cutoff));
        std::vector<double> abs_res(opts.paths);
        parallel_for(opts.paths, opts.workers, [&](std::size_t p) {
            const auto tr = simulate(model, schedule, c, grid, noise, p, opts.method);
            abs_res[p] = std::abs(total_ito_residual(model, tr));
        });
        study.levels.push_back({m, grid->dt(0), mean_stderr(abs_res)});
    }
    study.exact = std::all_of(study.levels.begin(), study.levels.end(),
                              [](const ItoLevel& l) { return l.abs_total_residual.mean == 0.0; });
    study.pass = true;
    for (std::size_t i = 0; i + 1 < study.levels.size(); ++i) {
        const double a = study.levels[i].abs_total_residual.mean;
        const double b = study.levels[i + 1].abs_total_residual.mean;
        const double ratio = b > 0.0 ? a / b : (a == 0.0 ? 1.0 : INFINITY);
        study.ratios.push_back(ratio);
        if (!study.exact && !(ratio >= opts.ratio_lo && ratio <= opts.ratio_hi)) study.pass = false;
    }
    return study;
}

CheckResult decomposition_check(const MixtureModel& model, std::span<const Trajectory> batch) {
    std::vector<double> diff(batch.size());
    for (std::size_t p = 0; p < batch.size(); ++p) {
        const auto& tr = batch[p];
        const auto q = quadrature_weights(*tr.grid, tr.method);
        double integral = 0.0;
        for (std::size_t k = 0; k < tr.size(); ++k)
            integral += q[k] * (1.0 + 2.0 * tr.w[k]) * tr.grad_g_norm2(k);
        const double lhs = posterior_at(model, tr, tr.size() - 1) - posterior_at(model, tr, 0);
        diff[p] = lhs - integral;
    }
    const auto ms = mean_stderr(diff);
    CheckResult r;
    r.name = "log_posterior_decomposition";
    r.statistic = ms.mean;
    r.std_error = ms.std_error;
    r.bound = 3.0 * ms.std_error;
    r.pass = std::abs(ms.mean) <= r.bound;
    return r;
}

KlBound kl_trajectory_bound(const MixtureModel& model, std::span<const Trajectory> batch,
                            double c_max, double c_min) {
    if (!(c_min > 0.0) || !(c_max > 0.0) || !std::isfinite(c_min) || !std::isfinite(c_max))
        throw InvalidInput("need finite positive C_min and C_max");
    std::vector<double> per_path(batch.size());
    int label = batch.empty() ? 0 : batch.front().label;
    for (std::size_t p = 0; p < batch.size(); ++p) {
        const auto& tr = batch[p];
        if (tr.label != label) throw InvalidInput("batch mixes classes");
        auto in_range = [&](double w) { return w >= c_min - 0.5 && w <= c_max; };
        for (double w : tr.w)
            if (!in_range(w)) throw InvalidInput("guidance outside [C_min - 1/2, C_max]");
        for (double w : tr.w_predictor)
            if (!in_range(w)) throw InvalidInput("guidance outside [C_min - 1/2, C_max]");
        const auto q = quadrature_weights(*tr.grid, tr.method);
        double s = 0.0;
        for (std::size_t k = 0; k < tr.size(); ++k) s += q[k] * tr.w[k] * tr.w[k] * tr.grad_g_norm2(k);
        per_path[p] = s;
    }
    KlBound kl;
    kl.empirical = mean_stderr(per_path);
    kl.cap = std::max(c_max, c_max * c_max / (2.0 * c_min)) * -std::log(model.class_prior(label));
    return kl;
}

CheckResult kl_check(const KlBound& kl) {
    CheckResult r;
    r.name = "girsanov_kl_cap";
    r.statistic = kl.empirical.mean;
    r.std_error = kl.empirical.std_error;
    r.bound = kl.cap;
    r.pass = kl.empirical.mean <= kl.cap + 3.0 * kl.empirical.std_error;
    return r;
}

double default_support_radius(double cutoff) {
    if (!(cutoff > 0.0)) throw InvalidInput("cutoff must be positive");
    return 5.0 * std::sqrt(-std::expm1(-2.0 * cutoff));
}

SupportReport support_check(const MixtureModel& model, std::span<const Trajectory> batch,
                            double delta) {
    if (!model.all_point_masses())
        throw InvalidInput("support check needs a model made only of point masses");
    if (!(delta > 0.0)) throw InvalidInput("support radius must be positive");
    SupportReport rep;
    rep.delta = delta;
    std::size_t inside = 0;
    for (const auto& tr : batch) {
        const auto y = tr.terminal();
        double best = std::numeric_limits<double>::infinity();
        for (const auto& comp : model.components()) {
            if (comp.label != tr.label) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) s += (y[j] - comp.mean[j]) * (y[j] - comp.mean[j]);
            best = std::min(best, std::sqrt(s));
        }
        rep.distances.push_back(best);
        if (best <= delta) ++inside;
    }
    if (!batch.empty()) {
        rep.pass_fraction = static_cast<double>(inside) / static_cast<double>(batch.size());
        rep.q50 = quantile(rep.distances, 0.5);
        rep.q90 = quantile(rep.distances, 0.9);
        rep.q99 = quantile(rep.distances, 0.99);
        rep.max = *std::max_element(rep.distances.begin(), rep.distances.end());
    }
    return rep;
}

double mass_coverage(const MixtureModel& model, std::span<const Trajectory> batch, double q) {
    if (model.has_point_masses())
        throw InvalidInput("mass coverage is defined for Gaussian components only");
    if (!(q > 0.0 && q < 1.0)) throw InvalidInput("coverage level must lie in (0, 1)");
    const boost::math::chi_squared chi2(static_cast<double>(model.dim()));
    const double r2_unit = boost::math::quantile(chi2, q);
    std::size_t inside = 0;
    for (const auto& tr : batch) {
        const auto y = tr.terminal();
        for (const auto& comp : model.components()) {
            if (comp.label != tr.label) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) s += (y[j] - comp.mean[j]) * (y[j] - comp.mean[j]);
            if (s <= comp.variance * r2_unit) {
                ++inside;
                break;
            }
        }
    }
    return batch.empty() ? 0.0 : static_cast<double>(inside) / static_cast<double>(batch.size());
}

CheckResult conditional_alignment_check(const MixtureModel& model, int c, double w,
                                        std::span<const double> x,
                                        std::shared_ptr<const TimeGrid> grid,
                                        const AlignmentOptions& opts) {
    if (!(w > 0.0)) throw InvalidInput("alignment check needs w > 0");
    if (x.size() != model.dim()) throw InvalidInput("start state has wrong dimension");
    const std::size_t end = opts.start_node + opts.horizon_steps;
    if (opts.horizon_steps == 0 || end >= grid->size())
        throw InvalidInput("restart window exceeds the grid");
    auto sub = std::make_shared<TimeGrid>();
    sub->horizon = grid->horizon;
    sub->cutoff = grid->horizon - grid->nodes[end];
    sub->nodes.assign(grid->nodes.begin() + static_cast<std::ptrdiff_t>(opts.start_node),
                      grid->nodes.begin() + static_cast<std::ptrdiff_t>(end + 1));
    std::shared_ptr<const TimeGrid> sub_c = sub;

    const PinnedNoise noise({x.begin(), x.end()}, opts.seed);
    const auto guided_s = GuidanceSchedule::make_constant(w, std::max(w, GuidanceSchedule::kDefaultCap));
    const auto plain_s = GuidanceSchedule::make_raw_constant(0.0);
    std::vector<double> guided(opts.paths), plain(opts.paths);
    const double s_end = model.forward_time_of(sub->nodes.back());
    parallel_for(opts.paths, opts.workers, [&](std::size_t p) {
        const auto a = simulate(model, guided_s, c, sub_c, noise, p, opts.method);
        const auto b = simulate(model, plain_s, c, sub_c, noise, p, opts.method);
        guided[p] = std::exp(-model.log_posterior(s_end, a.terminal(), c));
        plain[p] = std::exp(-model.log_posterior(s_end, b.terminal(), c));
    });
    const auto ms = difference_mean_stderr(guided, plain);
    CheckResult r;
    r.name = "conditional_alignment";
    r.statistic = ms.mean;
    r.std_error = ms.std_error;
    r.bound = 3.0 * ms.std_error;
    r.pass = ms.mean <= r.bound;
    return r;
}

}  // namespace adaguide
