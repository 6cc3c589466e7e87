// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "adaguide/errors.hpp"
#include "adaguide/hjb.hpp"

using namespace adaguide;

namespace {

MixtureModel two_blobs() {
    return MixtureModel(2, {{0.5, {1.0, 0.0}, 0.4, 0}, {0.5, {-1.0, 0.0}, 0.4, 1}});
}

HjbConfig coarse(double h = 0.2) {
    HjbConfig cfg;
    cfg.h = h;
    cfg.half_width = 3.0;
    return cfg;
}

}  // namespace

TEST(Hjb, GeometryIsSymmetric) {
    const auto g = HjbGeometry::from_box(4.0, 0.05);
    EXPECT_EQ(g.n, 161u);
    EXPECT_EQ(g.coord(0), -4.0);
    EXPECT_EQ(g.coord(160), 4.0);
    EXPECT_EQ(g.coord(80), 0.0);
    for (std::size_t i = 0; i < g.n; ++i) EXPECT_EQ(g.coord(i), -g.coord(g.n - 1 - i));
    EXPECT_THROW((void)HjbGeometry::from_box(1.0, 0.3), InvalidInput);
    EXPECT_THROW((void)HjbGeometry::from_box(1.0, -0.1), InvalidInput);
}

TEST(Hjb, UninformativeClassGivesZeroValue) {
    const MixtureModel m(2, {{0.5, {1.0, 0.0}, 0.5, 2}, {0.5, {-1.0, 0.0}, 0.5, 2}});
    auto cfg = coarse(0.25);
    cfg.alpha = 4.0;
    cfg.snapshot_times = {0.0, 2.5};
    const auto vg = solve_hjb(m, 2, cfg);
    ASSERT_GE(vg.slices.size(), 3u);
    for (const auto& s : vg.slices) {
        for (double v : s.v) EXPECT_EQ(v, 0.0);
        for (double w : s.w_star) EXPECT_EQ(w, 0.25);
    }
}

TEST(Hjb, OneStepFromTerminalMatchesSource) {
    const auto m = two_blobs();
    const auto geom = HjbGeometry::from_box(3.0, 0.1);
    const double alpha = 10.0, t = 4.0, dt = 1e-3;
    std::vector<double> v(geom.points(), 0.0), out(geom.points());
    hjb_backward_step(m, 0, geom, alpha, 1e-12, t, dt, v, out);
    double worst = 0.0;
    for (std::size_t j = 0; j < geom.n; ++j) {
        for (std::size_t i = 0; i < geom.n; ++i) {
            const std::vector<double> x{geom.coord(i), geom.coord(j)};
            const auto g = m.grad_g(t, x, 0);
            const double g2 = g[0] * g[0] + g[1] * g[1];
            const double expect = dt * g2 * (1.0 + 1.0 / alpha);
            worst = std::max(worst, std::abs(out[j * geom.n + i] - expect) / std::max(expect, 1e-300));
        }
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(Hjb, ValueIsNonnegativeAndReflectionSymmetric) {
    const auto m = two_blobs();
    auto cfg = coarse();
    cfg.snapshot_times = figure_panel_times(5.0, 0.01);
    const auto vg = solve_hjb(m, 0, cfg);
    EXPECT_EQ(vg.slices.size(), 6u);
    const std::size_t n = vg.geom.n;
    for (const auto& s : vg.slices) {
        for (double v : s.v) EXPECT_GE(v, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                const double a = s.v[j * n + i], b = s.v[(n - 1 - j) * n + i];
                EXPECT_NEAR(a, b, 1e-12 * (1.0 + std::abs(a)));
            }
    }
    // Value accumulates backward in time.
    EXPECT_GT(vg.slices.front().v[n * n / 2], vg.slices.back().v[n * n / 2]);
    EXPECT_EQ(vg.slices.back().t_back, 4.99);
}

TEST(Hjb, SnapshotsHitRequestedTimesExactly) {
    const auto m = two_blobs();
    auto cfg = coarse(0.3);
    cfg.snapshot_times = {0.0, 0.1, 0.5, 1.0, 2.5};
    const auto vg = solve_hjb(m, 0, cfg);
    ASSERT_EQ(vg.slices.size(), 6u);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(vg.slices[k].t_back, cfg.snapshot_times[k]);
    for (const auto& s : vg.slices) EXPECT_NEAR(s.t_forward, 5.0 - s.t_back, 1e-15);
    EXPECT_EQ(&vg.nearest_slice(0.3), &vg.slices[1]);
    EXPECT_EQ(&vg.nearest_slice(0.31), &vg.slices[2]);
    EXPECT_EQ(&vg.nearest_slice(100.0), &vg.slices.back());
}

TEST(Hjb, RejectsUnstableStep) {
    const auto m = two_blobs();
    auto cfg = coarse();
    const auto geom = HjbGeometry::from_box(cfg.half_width, cfg.h);
    const double limit = hjb_stable_dt(m, 0, geom, cfg.cutoff, cfg.safety);
    EXPECT_GT(limit, 0.0);
    EXPECT_LE(limit, cfg.safety * cfg.h * cfg.h / 4.0);
    cfg.dt = 2.0 * limit;
    EXPECT_THROW((void)solve_hjb(m, 0, cfg), InvalidInput);
    cfg.dt = 0.0;
    cfg.alpha = 0.0;
    EXPECT_THROW((void)solve_hjb(m, 0, cfg), InvalidInput);
    EXPECT_THROW((void)solve_hjb(m, 7, coarse()), InvalidInput);
    EXPECT_THROW((void)solve_hjb(MixtureModel(3, {{1.0, {0.0, 0.0, 0.0}, 1.0, 0}}), 0, coarse()),
                 InvalidInput);
}

TEST(Hjb, RefinementConverges) {
    const auto m = two_blobs();
    std::vector<double> at;
    for (double h : {0.4, 0.2, 0.1}) {
        auto cfg = coarse(h);
        cfg.snapshot_times = {4.0};
        const auto vg = solve_hjb(m, 0, cfg);
        const auto& s = vg.nearest_slice(4.0);
        ASSERT_EQ(s.t_back, 4.0);
        at.push_back(vg.interpolate(s.v, 0.6, 0.2));
    }
    const double d1 = std::abs(at[1] - at[0]), d2 = std::abs(at[2] - at[1]);
    EXPECT_LT(d2, d1) << at[0] << " " << at[1] << " " << at[2];
}

TEST(Hjb, WorkerCountDoesNotChangeResult) {
    const auto m = MixtureModel::four_gaussian_triangle();
    auto cfg = coarse(0.25);
    cfg.snapshot_times = {0.0};
    const auto a = solve_hjb(m, 1, cfg);
    cfg.workers = 3;
    const auto b = solve_hjb(m, 1, cfg);
    ASSERT_EQ(a.slices.size(), b.slices.size());
    for (std::size_t k = 0; k < a.slices.size(); ++k) {
        EXPECT_TRUE(a.slices[k].v == b.slices[k].v);
        EXPECT_TRUE(a.slices[k].w_star == b.slices[k].w_star);
    }
}

TEST(Hjb, InterpolationAndPolicy) {
    const auto m = two_blobs();
    auto cfg = coarse();
    cfg.snapshot_times = {1.0};
    auto vg = std::make_shared<ValueGrid>(solve_hjb(m, 0, cfg));
    const auto& s = vg->nearest_slice(1.0);
    const std::size_t n = vg->geom.n;
    // Exact at nodes, clamped outside.
    EXPECT_EQ(vg->interpolate(s.w_star, vg->geom.coord(3), vg->geom.coord(5)), s.w_star[5 * n + 3]);
    EXPECT_EQ(vg->interpolate(s.w_star, -50.0, 50.0), s.w_star[(n - 1) * n]);
    // Midpoint is the average of the neighbours along a grid line.
    const double mid = 0.5 * (vg->geom.coord(3) + vg->geom.coord(4));
    EXPECT_NEAR(vg->interpolate(s.v, mid, vg->geom.coord(5)),
                0.5 * (s.v[5 * n + 3] + s.v[5 * n + 4]), 1e-15);
    const auto w = policy_weight_fn(vg);
    const std::vector<double> y{vg->geom.coord(3), vg->geom.coord(5)};
    EXPECT_EQ(w(1.02, y), s.w_star[5 * n + 3]);
}

TEST(Hjb, PanelTimesAndExports) {
    const auto times = figure_panel_times(5.0, 0.01);
    ASSERT_EQ(times.size(), 6u);
    EXPECT_EQ(times.front(), 0.0);
    EXPECT_EQ(times.back(), 4.99);
    const auto m = two_blobs();
    auto cfg = coarse(0.5);
    cfg.half_width = 1.0;
    const auto vg = solve_hjb(m, 0, cfg);
    std::ostringstream os;
    write_slice_csv(os, vg, vg.slices.back());
    const std::string csv = os.str();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "x1,x2,V,w_star");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 25);
    const auto meta = nlohmann::json::parse(value_grid_metadata_json(vg));
    EXPECT_EQ(meta["nodes_per_axis"].get<int>(), 5);
    EXPECT_EQ(meta["alpha"].get<double>(), 10.0);
    EXPECT_TRUE(meta.contains("slices"));
}
