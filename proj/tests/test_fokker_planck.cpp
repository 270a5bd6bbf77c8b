#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "sdde/analytic.hpp"
#include "sdde/errors.hpp"
#include "sdde/fokker_planck.hpp"
#include "sdde/grid.hpp"
#include "sdde/kernel.hpp"
#include "sdde/model.hpp"

using namespace sdde;
using Catch::Approx;

namespace {

SDDEModel brownian() {
    SDDEModel m = reference_example_model();
    m.b = 0.0;
    return m;
}

double mean_along(const DensityField& f, int axis) {
    const Grid& g = f.grid;
    double num = 0.0, den = 0.0;
    for (std::size_t flat = 0; flat < g.size(); ++flat) {
        const auto idx = g.unflatten(flat);
        double w = 1.0;
        for (int d = 0; d < g.dim(); ++d) w *= trapezoid_weight(g.axis(d), idx[static_cast<std::size_t>(d)]);
        num += w * f.values[flat] * g.axis(axis).node(idx[static_cast<std::size_t>(axis)]);
        den += w * f.values[flat];
    }
    return num / den;
}

double central_moment(const DensityField& f, int axis, double mean) {
    const Grid& g = f.grid;
    double num = 0.0, den = 0.0;
    for (std::size_t flat = 0; flat < g.size(); ++flat) {
        const auto idx = g.unflatten(flat);
        double w = 1.0;
        for (int d = 0; d < g.dim(); ++d) w *= trapezoid_weight(g.axis(d), idx[static_cast<std::size_t>(d)]);
        const double z = g.axis(axis).node(idx[static_cast<std::size_t>(axis)]) - mean;
        num += w * f.values[flat] * z * z;
        den += w * f.values[flat];
    }
    return num / den;
}

double heat_linf(int n, double dt, double lo = -6.0, double hi = 6.0) {
    const auto aug = build_augmented(reference_example_model(), 1);
    const Grid grid({Axis{-8.0, 8.0, n}});
    SolverConfig cfg;
    cfg.dt = dt;
    const std::vector<double> v{0.0};
    const DensityField f = solve_kernel(aug, v, 0.0, 1.0, grid, cfg);
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = grid.axis(0).node(i);
        if (x < lo || x > hi) continue;
        err = std::max(err, std::abs(f.values[static_cast<std::size_t>(i)] - heat_kernel_q1(x, 1, 0, 0)));
    }
    return err;
}

}  // namespace

TEST_CASE("mollified point mass is a normalized short-time gaussian") {
    const auto aug = build_augmented(reference_example_model(), 1);
    const Grid grid({Axis{-8.0, 8.0, 801}});
    const std::vector<double> v{0.0};
    const DensityField f = init_delta(grid, v, aug, 0.0, 1e-3);
    CHECK(f.values[400] == Approx(1.0 / std::sqrt(2.0 * std::numbers::pi * 1e-3)).epsilon(1e-12));
    CHECK(f.values[400] == Approx(12.6157).margin(1e-4));
    CHECK(mass(f) == Approx(1.0).margin(1e-6));
    CHECK(f.time == 1e-3);
}

TEST_CASE("mollified start moves along the drift") {
    const auto aug = build_augmented(reference_example_model(), 2);
    const Grid grid = Grid::uniform(2, Axis{-4.0, 4.0, 401});
    const double eps = 0.01;
    const std::vector<double> v{0.5, 1.0};
    const DensityField f = init_delta(grid, v, aug, 0.0, eps);
    CHECK(mass(f) == Approx(1.0).margin(1e-6));
    CHECK(mean_along(f, 0) == Approx(0.5).margin(1e-9));
    CHECK(mean_along(f, 1) == Approx(1.0 + 0.5 * eps).margin(1e-9));
}

TEST_CASE("mass of a uniform field") {
    DensityField f;
    f.grid = Grid({Axis{-1.0, 1.0, 11}});
    f.values.assign(11, 0.5);
    CHECK(mass(f) == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("interpolation conventions") {
    DensityField f;
    f.grid = Grid({Axis{0.0, 1.0, 11}, Axis{-1.0, 1.0, 9}});
    f.values.resize(f.grid.size());
    for (std::size_t flat = 0; flat < f.grid.size(); ++flat) {
        const auto idx = f.grid.unflatten(flat);
        f.values[flat] = 3.0 * f.grid.axis(0).node(idx[0]) - 2.0 * f.grid.axis(1).node(idx[1]) + 0.1 * flat;
    }
    const std::size_t node = 3 * f.grid.stride(0) + 5;
    const std::vector<double> at{f.grid.axis(0).node(3), f.grid.axis(1).node(5)};
    CHECK(interpolate(f, at) == f.values[node]);

    DensityField lin;
    lin.grid = Grid({Axis{0.0, 1.0, 11}});
    for (int i = 0; i < 11; ++i) lin.values.push_back(2.0 + 5.0 * lin.grid.axis(0).node(i));
    const std::vector<double> mid{0.35};
    CHECK(interpolate(lin, mid) == Approx(0.5 * (lin.values[3] + lin.values[4])).epsilon(1e-14));
    const std::vector<double> outside{1.5};
    CHECK(interpolate(lin, outside) == 0.0);
}

TEST_CASE("one-segment kernel reproduces the heat kernel") {
    const auto aug = build_augmented(reference_example_model(), 1);
    const Grid grid({Axis{-8.0, 8.0, 801}});
    SolverConfig cfg;
    cfg.dt = 1e-3;
    const std::vector<double> v{0.0};
    const DensityField f = solve_kernel(aug, v, 0.0, 1.0, grid, cfg);
    CHECK(f.values[400] == Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).margin(1e-3));
    CHECK(heat_linf(801, 1e-3) <= 1e-3);
    CHECK(mass(f) == Approx(1.0).margin(1e-4));
    CHECK(f.worst_negative_ratio >= -1e-6);
    CHECK(f.warnings.empty());
}

TEST_CASE("pure diffusion converges at second order") {
    const double coarse = heat_linf(201, 4e-3);
    const double fine = heat_linf(401, 2e-3);
    CHECK(coarse / fine >= 3.5);
}

TEST_CASE("pure diffusion step keeps the mean") {
    const auto aug = build_augmented(brownian(), 1);
    const Grid grid({Axis{-8.0, 8.0, 401}});
    const std::vector<double> v{0.3};
    DensityField f = init_delta(grid, v, aug, 0.0, 0.05);
    const double m0 = mean_along(f, 0);
    for (int n = 0; n < 20; ++n) f = step(f, aug, 1e-3);
    CHECK(std::abs(mean_along(f, 0) - m0) <= 1e-8);
}

TEST_CASE("Chapman-Kolmogorov through interpolated grid kernels") {
    const Grid grid({Axis{-8.0, 8.0, 401}});
    SolverConfig cfg;
    cfg.dt = 1e-3;
    GridKernel gk(reference_example_model(), 1, grid, cfg);
    const auto q = gk.handle();
    const std::vector<double> zero{0.0};
    const auto direct = gk.field(zero, 0.0, 1.0);
    const auto first = gk.field(zero, 0.0, 0.5);

    std::vector<Point> nodes;
    std::vector<double> weights;
    for (int i = 0; i < 161; ++i) {
        const double w = -4.0 + 0.05 * i;
        nodes.push_back({w});
        weights.push_back((i == 0 || i == 160) ? 0.025 : 0.05);
    }
    q.prefetch(nodes, 0.5, 1.0);
    double worst = 0.0;
    for (double x = -4.0; x <= 4.0 + 1e-12; x += 0.25) {
        const std::vector<double> u{x};
        double acc = 0.0;
        for (std::size_t j = 0; j < nodes.size(); ++j)
            acc += weights[j] * q(u, 1.0, nodes[j], 0.5) * interpolate(*first, nodes[j]);
        worst = std::max(worst, std::abs(acc - interpolate(*direct, u)));
    }
    CHECK(worst <= 2e-3);
}

TEST_CASE("two-segment kernel at the origin") {
    const auto aug = build_augmented(reference_example_model(), 2);
    const Grid grid = Grid::uniform(2, Axis{-8.0, 8.0, 129});
    SolverConfig cfg;
    cfg.dt = 1e-3;
    const std::vector<double> v{0.0, 0.0};
    const DensityField f = solve_kernel(aug, v, 0.0, 1.0, grid, cfg);
    const std::vector<double> origin{0.0, 0.0};
    CHECK(interpolate(f, origin) == Approx(0.152912).margin(2e-3));
    CHECK(mass(f) == Approx(1.0).margin(1e-3));
}

TEST_CASE("two-segment kernel moments over half a delay") {
    const auto aug = build_augmented(reference_example_model(), 2);
    const Grid grid = Grid::uniform(2, Axis{-6.0, 6.0, 121});
    SolverConfig cfg;
    cfg.dt = 1e-3;
    const std::vector<double> v{0.0, 0.7};
    const DensityField f = solve_kernel(aug, v, 0.0, 0.5, grid, cfg);
    const double m1 = mean_along(f, 0);
    CHECK(m1 == Approx(0.0).margin(2e-3));
    CHECK(mean_along(f, 1) == Approx(0.7).margin(2e-3));
    CHECK(central_moment(f, 0, m1) == Approx(0.5).margin(1e-2));
}

TEST_CASE("solver results do not depend on the thread count") {
    const auto aug = build_augmented(reference_example_model(), 2);
    const Grid grid = Grid::uniform(2, Axis{-6.0, 6.0, 49});
    SolverConfig cfg;
    cfg.dt = 2e-3;
    const std::vector<double> v{0.2, -0.1};
    const DensityField a = solve_kernel(aug, v, 0.0, 0.3, grid, cfg);
    cfg.threads = 3;
    const DensityField b = solve_kernel(aug, v, 0.0, 0.3, grid, cfg);
    CHECK(a.values == b.values);
}

TEST_CASE("solver error paths") {
    const auto aug = build_augmented(reference_example_model(), 1);
    const Grid grid({Axis{-8.0, 8.0, 161}});
    SolverConfig cfg;
    const std::vector<double> v{0.0};
    CHECK_THROWS_AS(solve_kernel(aug, v, 0.5, 0.5, grid, cfg), InvalidInput);
    CHECK_THROWS_AS(solve_kernel(aug, v, 0.0, 1.5, grid, cfg), InvalidInput);

    SDDEModel degenerate = reference_example_model();
    degenerate.s0 = 0.0;
    degenerate.s1 = 1.0;
    CHECK_THROWS_AS(solve_kernel(build_augmented(degenerate, 1), std::vector<double>{1.0}, 0.0, 1.0, grid, cfg),
                    AssumptionViolation);

    SDDEModel fast = reference_example_model();
    fast.a = 50.0;
    cfg.dt = 0.05;
    CHECK_THROWS_AS(solve_kernel(build_augmented(fast, 1), v, 0.0, 1.0, grid, cfg), NumericFailure);
}
