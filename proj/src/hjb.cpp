// SPDX-License-Identifier: Apache-2.0
#include "adaguide/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "adaguide/errors.hpp"
#include "adaguide/io.hpp"
#include "adaguide/kernels.hpp"
#include "adaguide/parallel.hpp"

namespace adaguide {

namespace {

struct FieldPlanes {
    std::vector<double> gx, gy, g2, bx, by;
    explicit FieldPlanes(std::size_t n) : gx(n), gy(n), g2(n), bx(n), by(n) {}
};

// grad G, |grad G|^2 and drift x + 2 grad log p(x|c) at every node.
void fill_fields(const MixtureModel& model, int c, const HjbGeometry& g, double t_back,
                 FieldPlanes& f, std::size_t workers) {
    const auto table = kernels::ComponentTable2d::build(model, model.forward_time_of(t_back), c);
    const std::size_t n = g.n;
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = g.coord(i);
    parallel_for(n, workers, [&](std::size_t j) {
        std::vector<double> ys(n, g.coord(j)), cx(n), cy(n);
        const std::size_t off = j * n;
        kernels::Fields2d out{{f.gx.data() + off, n}, {f.gy.data() + off, n}, cx, cy};
        kernels::mixture_fields_2d(table, xs, ys, out);
        for (std::size_t i = 0; i < n; ++i) {
            const double gx = f.gx[off + i], gy = f.gy[off + i];
            f.g2[off + i] = gx * gx + gy * gy;
            f.bx[off + i] = xs[i] + 2.0 * cx[i];
            f.by[off + i] = ys[i] + 2.0 * cy[i];
        }
    });
}

void step_with_fields(const HjbGeometry& g, const FieldPlanes& f, const kernels::HjbStencil& p,
                      std::span<const double> v, std::span<double> out, std::size_t workers) {
    const std::size_t n = g.n;
    parallel_for(n, workers, [&](std::size_t j) {
        const std::size_t down = j > 0 ? j - 1 : 1;
        const std::size_t up = j + 1 < n ? j + 1 : n - 2;
        const std::size_t off = j * n;
        kernels::HjbRow row;
        row.v_down = v.data() + down * n;
        row.v_mid = v.data() + off;
        row.v_up = v.data() + up * n;
        row.grad_g_x = f.gx.data() + off;
        row.grad_g_y = f.gy.data() + off;
        row.grad_g_norm2 = f.g2.data() + off;
        row.drift_x = f.bx.data() + off;
        row.drift_y = f.by.data() + off;
        row.v_out = out.data() + off;
        row.n = n;
        kernels::hjb_row_update(p, row);
    });
}

std::vector<double> w_star_from_fields(const HjbGeometry& g, const FieldPlanes& f, double alpha,
                                       double tol_g, std::span<const double> v) {
    const std::size_t n = g.n;
    const double inv_2h = 0.5 / g.h;
    std::vector<double> w(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t down = j > 0 ? j - 1 : 1;
        const std::size_t up = j + 1 < n ? j + 1 : n - 2;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = j * n + i;
            const double g2 = f.g2[idx];
            if (g2 < tol_g) {
                w[idx] = 1.0 / alpha;
                continue;
            }
            const std::size_t left = i > 0 ? i - 1 : 1;
            const std::size_t right = i + 1 < n ? i + 1 : n - 2;
            const double vx = (v[j * n + right] - v[j * n + left]) * inv_2h;
            const double vy = (v[up * n + i] - v[down * n + i]) * inv_2h;
            const double dot = f.gx[idx] * vx + f.gy[idx] * vy;
            // (dot + g2) / (alpha g2) written so dot = 0 gives 1/alpha exactly.
            w[idx] = (1.0 + dot / g2) / alpha;
        }
    }
    return w;
}

void check_common(const MixtureModel& model, int c, double alpha) {
    if (model.dim() != 2) throw InvalidInput("the HJB solver is two-dimensional");
    if (!model.has_class(c)) throw InvalidInput("unknown class label " + std::to_string(c));
    if (!(alpha > 0.0)) throw InvalidInput("alpha must be positive");
}

}  // namespace

HjbGeometry HjbGeometry::from_box(double half_width, double h) {
    if (!(half_width > 0.0) || !(h > 0.0)) throw InvalidInput("box and spacing must be positive");
    const double cells = 2.0 * half_width / h;
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells) || rounded < 2.0)
        throw InvalidInput("2L/h must be an integer of at least 2");
    return {static_cast<std::size_t>(rounded) + 1, h};
}

const ValueSlice& ValueGrid::nearest_slice(double t_back) const {
    if (slices.empty()) throw InvalidInput("value grid has no slices");
    const auto it = std::lower_bound(slices.begin(), slices.end(), t_back,
                                     [](const ValueSlice& s, double t) { return s.t_back < t; });
    if (it == slices.begin()) return *it;
    if (it == slices.end()) return slices.back();
    const auto prev = std::prev(it);
    return (t_back - prev->t_back <= it->t_back - t_back) ? *prev : *it;
}

double ValueGrid::interpolate(std::span<const double> field, double x, double y) const {
    const std::size_t n = geom.n;
    const double L = geom.half_width();
    // Snap positions that are a node up to rounding so node lookups are exact.
    const auto frac = [&](double u) {
        const double f = (std::clamp(u, -L, L) + L) / geom.h;
        const double r = std::round(f);
        return std::abs(f - r) < 1e-9 ? r : f;
    };
    const double fx = frac(x), fy = frac(y);
    const std::size_t i = std::min(static_cast<std::size_t>(fx), n - 2);
    const std::size_t j = std::min(static_cast<std::size_t>(fy), n - 2);
    const double ax = fx - static_cast<double>(i);
    const double ay = fy - static_cast<double>(j);
    const double f00 = field[j * n + i], f10 = field[j * n + i + 1];
    const double f01 = field[(j + 1) * n + i], f11 = field[(j + 1) * n + i + 1];
    return (1.0 - ay) * ((1.0 - ax) * f00 + ax * f10) + ay * ((1.0 - ax) * f01 + ax * f11);
}

double hjb_stable_dt(const MixtureModel& model, int c, const HjbGeometry& geom, double cutoff,
                     double safety, std::size_t samples) {
    const double t_end = model.horizon() - cutoff;
    if (!(t_end > 0.0)) throw InvalidInput("cutoff must be below the horizon");
    FieldPlanes f(geom.points());
    double max_b = 0.0;
    samples = std::max<std::size_t>(samples, 2);
    for (std::size_t s = 0; s < samples; ++s) {
        const double t = t_end * static_cast<double>(s) / static_cast<double>(samples - 1);
        fill_fields(model, c, geom, t, f, 1);
        for (std::size_t p = 0; p < geom.points(); ++p)
            max_b = std::max(max_b, std::abs(f.bx[p]) + std::abs(f.by[p]));
    }
    return safety / (4.0 / (geom.h * geom.h) + max_b / geom.h);
}

void hjb_backward_step(const MixtureModel& model, int c, const HjbGeometry& geom, double alpha,
                       double tol_g, double t_back, double dt, std::span<const double> v,
                       std::span<double> out, std::size_t workers) {
    check_common(model, c, alpha);
    if (v.size() != geom.points() || out.size() != geom.points())
        throw InvalidInput("value slice has the wrong size");
    FieldPlanes f(geom.points());
    fill_fields(model, c, geom, t_back, f, workers);
    step_with_fields(geom, f, {geom.h, dt, 1.0 / alpha, tol_g}, v, out, workers);
}

std::vector<double> extract_w_star(const MixtureModel& model, int c, const HjbGeometry& geom,
                                   double alpha, double tol_g, double t_back,
                                   std::span<const double> v) {
    check_common(model, c, alpha);
    FieldPlanes f(geom.points());
    fill_fields(model, c, geom, t_back, f, 1);
    return w_star_from_fields(geom, f, alpha, tol_g, v);
}

ValueGrid solve_hjb(const MixtureModel& model, int c, const HjbConfig& cfg) {
    check_common(model, c, cfg.alpha);
    if (!(cfg.cutoff > 0.0) || cfg.cutoff >= model.horizon())
        throw InvalidInput("cutoff must lie in (0, T)");
    if (!(cfg.safety > 0.0 && cfg.safety <= 1.0)) throw InvalidInput("safety must lie in (0, 1]");
    if (cfg.tol_g < 0.0) throw InvalidInput("tol_g must be nonnegative");
    const HjbGeometry geom = HjbGeometry::from_box(cfg.half_width, cfg.h);
    const double t_end = model.horizon() - cfg.cutoff;

    ValueGrid vg;
    vg.geom = geom;
    vg.label = c;
    vg.alpha = cfg.alpha;
    vg.tol_g = cfg.tol_g;
    vg.horizon = model.horizon();
    vg.t_end = t_end;
    vg.dt_max = hjb_stable_dt(model, c, geom, cfg.cutoff, cfg.safety);
    double dt_target = vg.dt_max;
    if (cfg.dt > 0.0) {
        if (cfg.dt > vg.dt_max)
            throw InvalidInput("dt " + format_double(cfg.dt) + " violates the stability limit " +
                               format_double(vg.dt_max));
        dt_target = cfg.dt;
    } else if (cfg.dt < 0.0) {
        throw InvalidInput("dt must be nonnegative");
    }

    // Stored times, descending, each hit exactly by the step sequence.
    std::vector<double> times{t_end};
    for (double t : cfg.snapshot_times) {
        if (!(t >= 0.0) || t > t_end + 1e-12)
            throw InvalidInput("snapshot time " + format_double(t) + " outside [0, T - cutoff]");
        times.push_back(std::min(t, t_end));
    }
    std::sort(times.begin(), times.end(), std::greater<>());
    times.erase(std::unique(times.begin(), times.end(),
                            [](double a, double b) { return std::abs(a - b) <= 1e-12; }),
                times.end());

    const std::size_t pts = geom.points();
    std::vector<double> v(pts, 0.0), next(pts);
    FieldPlanes f(pts);
    auto store = [&](double t) {
        fill_fields(model, c, geom, t, f, cfg.workers);
        ValueSlice s;
        s.t_back = t;
        s.t_forward = model.horizon() - t;
        s.v = v;
        s.w_star = w_star_from_fields(geom, f, cfg.alpha, cfg.tol_g, v);
        vg.slices.push_back(std::move(s));
    };
    store(t_end);

    const kernels::HjbStencil base{geom.h, 0.0, 1.0 / cfg.alpha, cfg.tol_g};
    double t = t_end;
    for (std::size_t seg = 1; seg < times.size(); ++seg) {
        const double target = times[seg];
        const double span = t - target;
        const auto m = static_cast<std::size_t>(std::ceil(span / dt_target - 1e-9));
        const double dt = span / static_cast<double>(std::max<std::size_t>(m, 1));
        for (std::size_t s = 0; s < m; ++s) {
            fill_fields(model, c, geom, t, f, cfg.workers);
            kernels::HjbStencil p = base;
            p.dt = dt;
            step_with_fields(geom, f, p, v, next, cfg.workers);
            v.swap(next);
            ++vg.steps;
            t = (s + 1 == m) ? target : t - dt;
            for (double x : v)
                if (!std::isfinite(x)) throw DivergenceError("non-finite value slice", vg.steps);
        }
        store(target);
    }
    std::reverse(vg.slices.begin(), vg.slices.end());
    return vg;
}

WeightFn policy_weight_fn(std::shared_ptr<const ValueGrid> grid) {
    if (!grid || grid->slices.empty()) throw InvalidInput("policy needs a solved value grid");
    return [grid](double t, std::span<const double> y) {
        const auto& slice = grid->nearest_slice(t);
        return grid->interpolate(slice.w_star, y[0], y[1]);
    };
}

std::vector<double> figure_panel_times(double horizon, double cutoff) {
    const double t_end = horizon - cutoff;
    std::vector<double> out;
    for (double t : {0.0, 0.1, 0.5, 1.0, 2.5, 5.0}) out.push_back(std::min(t, t_end));
    return out;
}

void write_slice_csv(std::ostream& os, const ValueGrid& grid, const ValueSlice& slice) {
    const std::size_t n = grid.geom.n;
    os << "x1,x2,V,w_star\n";
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
            os << format_double(grid.geom.coord(i)) << ',' << format_double(grid.geom.coord(j))
               << ',' << format_double(slice.v[j * n + i]) << ','
               << format_double(slice.w_star[j * n + i]) << '\n';
}

std::string value_grid_metadata_json(const ValueGrid& grid) {
    nlohmann::ordered_json j;
    j["bounds"] = {-grid.geom.half_width(), grid.geom.half_width()};
    j["h"] = grid.geom.h;
    j["nodes_per_axis"] = grid.geom.n;
    j["class"] = grid.label;
    j["alpha"] = grid.alpha;
    j["tol_g"] = grid.tol_g;
    j["horizon"] = grid.horizon;
    j["t_end"] = grid.t_end;
    j["dt_max"] = grid.dt_max;
    j["steps"] = grid.steps;
    j["kernel_isa"] = kernels::isa_name(kernels::active_isa());
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : grid.slices)
        arr.push_back({{"t_backward", s.t_back}, {"t_forward", s.t_forward}});
    j["slices"] = std::move(arr);
    return j.dump(2);
}

}  // namespace adaguide
