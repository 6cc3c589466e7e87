// SPDX-License-Identifier: Apache-2.0
#include "adaguide/mixture_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "adaguide/errors.hpp"

namespace adaguide {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s;
}

void hess_vp_impl(const LocalFields& f, const std::vector<double>& resp,
                  const std::vector<double>& mean_score, std::span<const double> v,
                  std::span<double> out) {
    const std::size_t d = f.dim;
    double diag = 0.0;
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < resp.size(); ++i) {
        const double r = resp[i];
        if (r == 0.0) continue;
        diag += r * f.inv_var[i];
        const double* si = f.comp_score.data() + i * d;
        double sv = 0.0;
        for (std::size_t j = 0; j < d; ++j) sv += si[j] * v[j];
        for (std::size_t j = 0; j < d; ++j) out[j] += r * sv * si[j];
    }
    const double gv = dot(mean_score, v);
    for (std::size_t j = 0; j < d; ++j) out[j] += -diag * v[j] - gv * mean_score[j];
}

}  // namespace

double LocalFields::grad_g_norm2() const {
    double s = 0.0;
    for (double g : grad_g) s += g * g;
    return s;
}

MixtureModel::MixtureModel(std::size_t dim, std::vector<Component> components, double horizon)
    : dim_(dim), components_(std::move(components)), horizon_(horizon) {
    if (dim_ == 0) throw InvalidInput("mixture dimension must be positive");
    if (!(horizon_ > 0.0) || !std::isfinite(horizon_))
        throw InvalidInput("horizon T must be positive and finite");
    if (components_.empty()) throw InvalidInput("mixture needs at least one component");
    double total = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
        const auto& c = components_[i];
        if (!(c.weight > 0.0) || !std::isfinite(c.weight))
            throw InvalidInput("component " + std::to_string(i) + ": weight must be positive");
        if (!(c.variance >= 0.0) || !std::isfinite(c.variance))
            throw InvalidInput("component " + std::to_string(i) + ": variance must be >= 0");
        if (c.mean.size() != dim_)
            throw InvalidInput("component " + std::to_string(i) + ": mean has wrong dimension");
        for (double m : c.mean)
            if (!std::isfinite(m))
                throw InvalidInput("component " + std::to_string(i) + ": mean is not finite");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream os;
        os.precision(17);
        os << "component weights sum to " << total << ", expected 1";
        throw InvalidInput(os.str());
    }
}

MixtureModel MixtureModel::four_gaussian_triangle(double circumradius, double variance,
                                                  double horizon) {
    const double s3 = std::sqrt(3.0) / 2.0;
    std::vector<Component> comps;
    comps.push_back({0.25, {0.0, 0.0}, variance, 0});
    comps.push_back({0.25, {0.0, circumradius}, variance, 1});
    comps.push_back({0.25, {-s3 * circumradius, -0.5 * circumradius}, variance, 2});
    comps.push_back({0.25, {s3 * circumradius, -0.5 * circumradius}, variance, 3});
    return MixtureModel(2, std::move(comps), horizon);
}

std::vector<int> MixtureModel::classes() const {
    std::set<int> s;
    for (const auto& c : components_) s.insert(c.label);
    return {s.begin(), s.end()};
}

bool MixtureModel::has_class(int c) const {
    return std::any_of(components_.begin(), components_.end(),
                       [c](const Component& k) { return k.label == c; });
}

double MixtureModel::class_prior(int c) const {
    double p = 0.0;
    for (const auto& k : components_)
        if (k.label == c) p += k.weight;
    if (p == 0.0) throw InvalidInput("unknown class label " + std::to_string(c));
    return p;
}

bool MixtureModel::has_point_masses() const {
    return std::any_of(components_.begin(), components_.end(),
                       [](const Component& k) { return k.variance == 0.0; });
}

bool MixtureModel::all_point_masses() const {
    return std::all_of(components_.begin(), components_.end(),
                       [](const Component& k) { return k.variance == 0.0; });
}

double MixtureModel::support_radius() const {
    double r = 0.0;
    for (const auto& k : components_) {
        const double norm = std::sqrt(dot(k.mean, k.mean));
        r = std::max(r, norm + 3.0 * std::sqrt(k.variance));
    }
    return r;
}

ForwardLaw MixtureModel::forward_law(double forward_time) const {
    check_time(forward_time);
    ForwardLaw law;
    law.forward_time = forward_time;
    const double a = std::exp(-forward_time);
    const double noise = -std::expm1(-2.0 * forward_time);
    for (const auto& k : components_) {
        std::vector<double> m(k.mean);
        for (double& v : m) v *= a;
        law.means.push_back(std::move(m));
        law.variances.push_back(k.variance * a * a + noise);
    }
    return law;
}

void MixtureModel::check_time(double forward_time) const {
    if (!(forward_time >= 0.0) || forward_time > horizon_)
        throw InvalidInput("forward time outside [0, T]");
    if (forward_time == 0.0 && has_point_masses())
        throw InvalidInput("point-mass component evaluated at forward time 0");
}

void MixtureModel::check_point(std::span<const double> x) const {
    if (x.size() != dim_) throw InvalidInput("point has wrong dimension");
    for (double v : x)
        if (!std::isfinite(v)) throw InvalidInput("point is not finite");
}

void MixtureModel::evaluate(double forward_time, std::span<const double> x, int c,
                            LocalFields& f) const {
    check_time(forward_time);
    check_point(x);
    const std::size_t d = dim_;
    const std::size_t k = components_.size();
    f.dim = d;
    f.score.assign(d, 0.0);
    f.cond_score.assign(d, 0.0);
    f.grad_g.assign(d, 0.0);
    f.resp.assign(k, 0.0);
    f.resp_cond.assign(k, 0.0);
    f.comp_score.assign(k * d, 0.0);
    f.inv_var.assign(k, 0.0);

    const double a = std::exp(-forward_time);
    const double noise = -std::expm1(-2.0 * forward_time);
    const double log_2pi = std::log(2.0 * std::numbers::pi);

    // Log joint terms l_i = log w_i + log N(x; a m_i, v_i I), kept in resp for now.
    double max_all = kNegInf;
    double max_cls = kNegInf;
    bool class_seen = false;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& comp = components_[i];
        const double var = comp.variance * a * a + noise;
        const double iv = 1.0 / var;
        f.inv_var[i] = iv;
        double r2 = 0.0;
        double* si = f.comp_score.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = a * comp.mean[j] - x[j];
            si[j] = diff * iv;
            r2 += diff * diff;
        }
        const double l = std::log(comp.weight) - 0.5 * static_cast<double>(d) * (log_2pi + std::log(var)) -
                         0.5 * r2 * iv;
        f.resp[i] = l;
        max_all = std::max(max_all, l);
        if (comp.label == c) {
            class_seen = true;
            max_cls = std::max(max_cls, l);
        }
    }
    if (!class_seen) throw InvalidInput("unknown class label " + std::to_string(c));

    // Both responsibility sets use the same formula, so a class covering every
    // component yields bitwise equal sets and an exactly zero grad G.
    double sum_all = 0.0;
    double sum_cls = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double l = f.resp[i];
        f.resp[i] = std::exp(l - max_all);
        sum_all += f.resp[i];
        if (components_[i].label == c) {
            f.resp_cond[i] = std::exp(l - max_cls);
            sum_cls += f.resp_cond[i];
        }
    }
    const double lse_all = max_all + std::log(sum_all);
    const double lse_cls = max_cls + std::log(sum_cls);
    double prior = 0.0;
    for (const auto& comp : components_)
        if (comp.label == c) prior += comp.weight;

    f.log_p = lse_all;
    f.log_p_cond = lse_cls - std::log(prior);
    f.log_post = lse_cls - lse_all;

    for (std::size_t i = 0; i < k; ++i) {
        f.resp[i] /= sum_all;
        f.resp_cond[i] /= sum_cls;
        const double* si = f.comp_score.data() + i * d;
        const double diff_r = f.resp_cond[i] - f.resp[i];
        for (std::size_t j = 0; j < d; ++j) {
            f.score[j] += f.resp[i] * si[j];
            f.cond_score[j] += f.resp_cond[i] * si[j];
            f.grad_g[j] += diff_r * si[j];
        }
    }
}

double MixtureModel::log_marginal(double forward_time, std::span<const double> x) const {
    LocalFields f;
    evaluate(forward_time, x, components_.front().label, f);
    return f.log_p;
}

double MixtureModel::log_conditional(double forward_time, std::span<const double> x, int c) const {
    LocalFields f;
    evaluate(forward_time, x, c, f);
    return f.log_p_cond;
}

double MixtureModel::log_posterior(double forward_time, std::span<const double> x, int c) const {
    LocalFields f;
    evaluate(forward_time, x, c, f);
    return f.log_post;
}

std::vector<double> MixtureModel::score(double forward_time, std::span<const double> x) const {
    LocalFields f;
    evaluate(forward_time, x, components_.front().label, f);
    return f.score;
}

std::vector<double> MixtureModel::cond_score(double forward_time, std::span<const double> x,
                                             int c) const {
    LocalFields f;
    evaluate(forward_time, x, c, f);
    return f.cond_score;
}

double MixtureModel::guiding_field(double backward_time, std::span<const double> x, int c) const {
    LocalFields f;
    evaluate(forward_time_of(backward_time), x, c, f);
    return f.log_p_cond - f.log_p;
}

std::vector<double> MixtureModel::grad_g(double backward_time, std::span<const double> x,
                                         int c) const {
    LocalFields f;
    evaluate(forward_time_of(backward_time), x, c, f);
    return f.grad_g;
}

std::vector<double> MixtureModel::hess_g_vp(double backward_time, std::span<const double> x, int c,
                                            std::span<const double> v) const {
    if (v.size() != dim_) throw InvalidInput("direction has wrong dimension");
    LocalFields f;
    evaluate(forward_time_of(backward_time), x, c, f);
    std::vector<double> out(dim_);
    adaguide::hess_g_vp(f, v, out);
    return out;
}

std::vector<double> MixtureModel::hess_log_cond_vp(double backward_time, std::span<const double> x,
                                                   int c, std::span<const double> v) const {
    if (v.size() != dim_) throw InvalidInput("direction has wrong dimension");
    LocalFields f;
    evaluate(forward_time_of(backward_time), x, c, f);
    std::vector<double> out(dim_);
    hess_log_conditional_vp(f, v, out);
    return out;
}

double MixtureModel::grad_g_bound(double backward_time) const {
    if (!(backward_time >= 0.0)) throw InvalidInput("backward time must be >= 0");
    if (backward_time >= horizon_) return std::numeric_limits<double>::infinity();
    const double e = std::exp(2.0 * (backward_time - horizon_));
    const double denom = -std::expm1(2.0 * (backward_time - horizon_));
    const double r = support_radius();
    return 4.0 * e * r * r / (denom * denom);
}

void hess_log_marginal_vp(const LocalFields& f, std::span<const double> v, std::span<double> out) {
    hess_vp_impl(f, f.resp, f.score, v, out);
}

void hess_log_conditional_vp(const LocalFields& f, std::span<const double> v,
                             std::span<double> out) {
    hess_vp_impl(f, f.resp_cond, f.cond_score, v, out);
}

void hess_g_vp(const LocalFields& f, std::span<const double> v, std::span<double> out) {
    std::vector<double> marginal(f.dim);
    hess_vp_impl(f, f.resp_cond, f.cond_score, v, out);
    hess_vp_impl(f, f.resp, f.score, v, marginal);
    for (std::size_t j = 0; j < f.dim; ++j) out[j] -= marginal[j];
}

}  // namespace adaguide
