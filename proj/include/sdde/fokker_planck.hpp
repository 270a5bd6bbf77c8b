#pragma once

// Grid solver for the forward (Fokker-Planck) equation of the augmented system
//   dQ/dt' = -sum_i d/dx_i (F_i Q) + 1/2 sum_i d^2/dx_i^2 (G_i^2 Q)
// started from a point mass. Each step applies explicit flux-form advection
// axis by axis, then a theta-scheme diffusion sweep per axis (one tridiagonal
// solve per grid line). Boundary nodes are held at zero (absorbing).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdde/errors.hpp"
#include "sdde/grid.hpp"
#include "sdde/model.hpp"
#include "sdde/parallel.hpp"

namespace sdde {

enum class AdvectionScheme {
    upwind,          // first-order donor cell
    limited_upwind,  // upwind-biased second order with a van Leer limiter
};

enum class Boundary { absorbing };

struct SolverConfig {
    double dt = 1e-3;
    /// Mollification time of the point initial condition; <= 0 selects 3 * dt.
    double delta_init_eps = 0.0;
    Boundary boundary = Boundary::absorbing;
    bool renormalize_each_step = false;
    AdvectionScheme advection = AdvectionScheme::limited_upwind;
    /// 0.5 is Crank-Nicolson, 1.0 backward Euler.
    double theta = 0.5;
    /// The initial Gaussian is widened until its standard deviation spans at
    /// least this many grid spacings on every axis; 0 disables.
    double min_init_width = 1.0;
    unsigned threads = 1;
};

namespace detail {

inline void check_field_dim(const Grid& grid, const AugmentedSystem& aug) {
    if (grid.dim() != aug.k()) {
        std::ostringstream msg;
        msg << "grid has " << grid.dim() << " axes, augmented system has k=" << aug.k();
        throw InvalidInput(msg.str());
    }
    if (grid.dim() > kMaxSolveDim) throw InvalidInput("grid solver supports total dimension <= 3");
}

inline void node_coords(const Grid& grid, std::size_t flat, std::span<double> out) {
    const auto idx = grid.unflatten(flat);
    for (int d = 0; d < grid.dim(); ++d)
        out[static_cast<std::size_t>(d)] = grid.axis(d).node(idx[static_cast<std::size_t>(d)]);
}

/// max |F_d| over the grid box at time t_prime. F_d is affine in the box
/// coordinates it depends on, so the extremum sits on a corner.
inline double max_abs_drift(const AugmentedSystem& aug, const Grid& grid, int d, double t_prime) {
    std::array<double, kMaxSolveDim> state{};
    double worst = 0.0;
    const unsigned corners = 1u << static_cast<unsigned>(grid.dim());
    for (unsigned corner = 0; corner < corners; ++corner) {
        for (int e = 0; e < grid.dim(); ++e) {
            const bool up = (corner >> static_cast<unsigned>(e)) & 1u;
            state[static_cast<std::size_t>(e)] = up ? grid.axis(e).max : grid.axis(e).min;
        }
        const std::span<const double> s(state.data(), static_cast<std::size_t>(grid.dim()));
        worst = std::max(worst, std::abs(aug.drift_component(d, s, t_prime)));
    }
    return worst;
}

/// Flux-form explicit advection along one line. u[j] is the velocity on the
/// face between nodes j and j+1; boundary nodes are zero on entry and exit.
inline void advect_line(std::span<double> q, std::span<const double> u, double dt, double h,
                        AdvectionScheme scheme, std::span<double> flux) {
    const std::size_t n = q.size();
    const auto at = [&](std::ptrdiff_t j) -> double {
        return (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) ? 0.0 : q[static_cast<std::size_t>(j)];
    };
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const double vel = u[j];
        const auto jj = static_cast<std::ptrdiff_t>(j);
        double face;
        if (vel >= 0.0) {
            face = q[j];
            if (scheme == AdvectionScheme::limited_upwind) {
                const double down = at(jj + 1) - at(jj);
                const double up = at(jj) - at(jj - 1);
                const double prod = up * down;
                const double slope = prod > 0.0 ? 2.0 * prod / (up + down) : 0.0;
                face += 0.5 * (1.0 - vel * dt / h) * slope;
            }
        } else {
            face = q[j + 1];
            if (scheme == AdvectionScheme::limited_upwind) {
                const double down = at(jj + 1) - at(jj);
                const double up = at(jj + 2) - at(jj + 1);
                const double prod = up * down;
                const double slope = prod > 0.0 ? 2.0 * prod / (up + down) : 0.0;
                face -= 0.5 * (1.0 + vel * dt / h) * slope;
            }
        }
        flux[j] = vel * face;
    }
    const double r = dt / h;
    for (std::size_t j = 1; j + 1 < n; ++j) q[j] -= r * (flux[j] - flux[j - 1]);
    q[0] = 0.0;
    q[n - 1] = 0.0;
}

/// Theta-scheme for dq/dt = (w q)'' / h^2 with q = 0 on both ends, w = G^2 / 2.
/// Solved with the Thomas algorithm over the n-2 interior nodes.
inline void diffuse_line(std::span<double> q, std::span<const double> w, double theta, double dt, double h,
                         std::span<double> rhs, std::span<double> cprime) {
    const std::size_t n = q.size();
    const double r = dt / (h * h);
    const double expl = (1.0 - theta) * r;
    const double impl = theta * r;
    for (std::size_t j = 1; j + 1 < n; ++j) {
        const double lap = w[j + 1] * q[j + 1] - 2.0 * w[j] * q[j] + w[j - 1] * q[j - 1];
        rhs[j] = q[j] + expl * lap;
    }
    // Forward elimination on rows 1..n-2; q[0] = q[n-1] = 0 drop out.
    double prev_c = 0.0;
    double prev_d = 0.0;
    for (std::size_t j = 1; j + 1 < n; ++j) {
        const double lower = j > 1 ? -impl * w[j - 1] : 0.0;
        const double diag = 1.0 + 2.0 * impl * w[j];
        const double upper = j + 2 < n ? -impl * w[j + 1] : 0.0;
        const double denom = diag - lower * prev_c;
        prev_c = upper / denom;
        prev_d = (rhs[j] - lower * prev_d) / denom;
        cprime[j] = prev_c;
        rhs[j] = prev_d;
    }
    q[n - 1] = 0.0;
    double next = 0.0;
    for (std::size_t j = n - 2; j >= 1; --j) {
        next = rhs[j] - cprime[j] * next;
        q[j] = next;
    }
    q[0] = 0.0;
}

struct LineScratch {
    std::vector<double> q, coef, a, b;
    void resize(std::size_t n) {
        q.resize(n);
        coef.resize(n);
        a.resize(n);
        b.resize(n);
    }
};

/// Applies `op(line values, line coordinates base, scratch)` to every grid line along axis d.
template <typename LineOp>
void for_each_line(const Grid& grid, int d, std::vector<double>& values, unsigned threads, LineOp&& op) {
    const std::size_t stride = grid.stride(d);
    const auto n = static_cast<std::size_t>(grid.axis(d).n);
    const std::size_t lines = grid.size() / n;
    parallel_for(lines, threads, [&](std::size_t line) {
        thread_local LineScratch scratch;
        scratch.resize(n);
        const std::size_t base = (line / stride) * stride * n + (line % stride);
        for (std::size_t j = 0; j < n; ++j) scratch.q[j] = values[base + j * stride];
        op(base, scratch);
        for (std::size_t j = 0; j < n; ++j) values[base + j * stride] = scratch.q[j];
    });
}

inline void zero_boundary(const Grid& grid, std::vector<double>& values) {
    for (std::size_t flat = 0; flat < grid.size(); ++flat) {
        const auto idx = grid.unflatten(flat);
        for (int d = 0; d < grid.dim(); ++d) {
            const int i = idx[static_cast<std::size_t>(d)];
            if (i == 0 || i == grid.axis(d).n - 1) {
                values[flat] = 0.0;
                break;
            }
        }
    }
}

}  // namespace detail

/// Short-time Gaussian standing in for the point mass at v: mean v + F(v,s) eps,
/// diagonal covariance G(v,s)^2 eps. The returned field sits at time s + eps.
inline DensityField init_delta(const Grid& grid, std::span<const double> v, const AugmentedSystem& aug,
                               double s, double eps) {
    detail::check_field_dim(grid, aug);
    aug.check_state(v);
    if (!(eps > 0.0)) throw InvalidInput("delta mollification time must be > 0");
    if (!grid.strictly_inside(v)) throw InvalidInput("initial point lies outside the grid interior");

    const int k = grid.dim();
    std::vector<std::vector<double>> factors(static_cast<std::size_t>(k));
    for (int d = 0; d < k; ++d) {
        const double g = aug.diffusion_component(d, v, s);
        const double var = g * g * eps;
        if (!(var > 0.0)) {
            std::ostringstream msg;
            msg << "diffusion G_" << (d + 1) << " vanishes at the initial point";
            throw AssumptionViolation(msg.str());
        }
        const double mean = v[static_cast<std::size_t>(d)] + aug.drift_component(d, v, s) * eps;
        const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * var);
        const Axis& ax = grid.axis(d);
        auto& f = factors[static_cast<std::size_t>(d)];
        f.resize(static_cast<std::size_t>(ax.n));
        for (int i = 0; i < ax.n; ++i) {
            const double z = ax.node(i) - mean;
            f[static_cast<std::size_t>(i)] = norm * std::exp(-0.5 * z * z / var);
        }
        f.front() = 0.0;
        f.back() = 0.0;
    }

    DensityField field;
    field.grid = grid;
    field.time = s + eps;
    field.values.resize(grid.size());
    for (std::size_t flat = 0; flat < grid.size(); ++flat) {
        const auto idx = grid.unflatten(flat);
        double val = 1.0;
        for (int d = 0; d < k; ++d)
            val *= factors[static_cast<std::size_t>(d)][static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
        field.values[flat] = val;
    }
    return field;
}

/// Largest dt the explicit advection accepts on this grid at time t_prime.
inline double advection_dt_limit(const DensityField& field, const AugmentedSystem& aug, double t_prime) {
    double limit = std::numeric_limits<double>::infinity();
    for (int d = 0; d < field.grid.dim(); ++d) {
        const double umax = detail::max_abs_drift(aug, field.grid, d, t_prime);
        if (umax > 0.0) limit = std::min(limit, 0.5 * field.grid.axis(d).spacing() / umax);
    }
    return limit;
}

/// Advances the field by dt.
inline DensityField step(const DensityField& field, const AugmentedSystem& aug, double dt,
                         const SolverConfig& cfg = {}) {
    const Grid& grid = field.grid;
    detail::check_field_dim(grid, aug);
    if (!(dt > 0.0)) throw InvalidInput("time step must be > 0");
    const double t_mid = field.time + 0.5 * dt;
    const double t_limit = std::clamp(t_mid, 0.0, aug.tau());

    if (const double limit = advection_dt_limit(field, aug, t_limit); dt > limit * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "advection CFL violated: dt=" << dt << " exceeds " << limit;
        throw NumericFailure(msg.str());
    }

    DensityField out = field;
    std::vector<double>& values = out.values;
    const int k = grid.dim();

    for (int d = 0; d < k; ++d) {
        const Axis& ax = grid.axis(d);
        const double h = ax.spacing();
        detail::for_each_line(grid, d, values, cfg.threads, [&](std::size_t base, detail::LineScratch& sc) {
            std::array<double, kMaxSolveDim> state{};
            const std::span<double> st(state.data(), static_cast<std::size_t>(k));
            detail::node_coords(grid, base, st);
            const auto n = static_cast<std::size_t>(ax.n);
            for (std::size_t j = 0; j + 1 < n; ++j) {
                st[static_cast<std::size_t>(d)] = 0.5 * (ax.node(static_cast<int>(j)) + ax.node(static_cast<int>(j) + 1));
                sc.coef[j] = aug.drift_component(d, st, t_limit);
            }
            detail::advect_line(sc.q, std::span<const double>(sc.coef.data(), n - 1), dt, h, cfg.advection,
                                sc.a);
        });
    }

    for (int d = 0; d < k; ++d) {
        const Axis& ax = grid.axis(d);
        const double h = ax.spacing();
        detail::for_each_line(grid, d, values, cfg.threads, [&](std::size_t base, detail::LineScratch& sc) {
            std::array<double, kMaxSolveDim> state{};
            const std::span<double> st(state.data(), static_cast<std::size_t>(k));
            detail::node_coords(grid, base, st);
            const auto n = static_cast<std::size_t>(ax.n);
            for (std::size_t j = 0; j < n; ++j) {
                st[static_cast<std::size_t>(d)] = ax.node(static_cast<int>(j));
                const double g = aug.diffusion_component(d, st, t_limit);
                sc.coef[j] = 0.5 * g * g;
            }
            detail::diffuse_line(sc.q, sc.coef, cfg.theta, dt, h, sc.a, sc.b);
        });
    }

    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -vmin;
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericFailure("non-finite density value after step");
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (vmax > 0.0) out.worst_negative_ratio = std::min(out.worst_negative_ratio, vmin / vmax);
    if (cfg.renormalize_each_step) {
        const double m = mass(out);
        if (m > 0.0)
            for (double& v : values) v /= m;
    }
    out.time = field.time + dt;
    return out;
}

/// Mollification time solve_kernel will use for a start at (v, s).
inline double effective_init_eps(const Grid& grid, std::span<const double> v, const AugmentedSystem& aug, double s,
                                 const SolverConfig& cfg) {
    double eps = cfg.delta_init_eps > 0.0 ? cfg.delta_init_eps : 3.0 * cfg.dt;
    if (cfg.min_init_width > 0.0) {
        for (int d = 0; d < grid.dim(); ++d) {
            const double g = std::abs(aug.diffusion_component(d, v, s));
            if (g > 0.0) {
                const double width = cfg.min_init_width * grid.axis(d).spacing() / g;
                eps = std::max(eps, width * width);
            }
        }
    }
    return eps;
}

/// Grid approximation of Q_k(. ; t | v ; s).
inline DensityField solve_kernel(const AugmentedSystem& aug, std::span<const double> v, double s, double t,
                                 const Grid& grid, const SolverConfig& cfg) {
    detail::check_field_dim(grid, aug);
    aug.check_state(v);
    const double tau = aug.tau();
    const double slack = 1e-12 * std::max(1.0, tau);
    if (!(s >= -slack && t <= tau + slack)) throw InvalidInput("kernel times must satisfy 0 <= s < t <= tau");
    if (!(t > s))
        throw InvalidInput("kernel at t == s is a point mass; use the delta-limit convention instead");
    if (!(cfg.dt > 0.0)) throw InvalidInput("solver dt must be > 0");

    std::vector<std::pair<double, double>> box;
    for (const auto& a : grid.axes()) box.emplace_back(a.min, a.max);
    require_valid(validate(aug.model(), diffusion_domain(aug.model(), box)));

    const double eps = std::min(effective_init_eps(grid, v, aug, s, cfg), t - s);
    DensityField field = init_delta(grid, v, aug, s, eps);
    const double initial_mass = mass(field);

    const double remaining = t - field.time;
    if (remaining > 1e-15) {
        const auto steps = static_cast<long>(std::ceil(remaining / cfg.dt - 1e-9));
        const double dt = remaining / static_cast<double>(steps);
        const double start = field.time;
        for (long n = 0; n < steps; ++n) {
            field = step(field, aug, dt, cfg);
            field.time = start + dt * static_cast<double>(n + 1);
        }
    }
    field.time = t;

    const double final_mass = mass(field);
    if (std::abs(final_mass - 1.0) > 0.01) {
        std::ostringstream msg;
        msg << "kernel mass " << final_mass << " deviates from 1 by more than 1% (initial " << initial_mass << ")";
        field.warnings.push_back(msg.str());
    }
    if (field.worst_negative_ratio < -1e-6) {
        std::ostringstream msg;
        msg << "positivity monitor: min/max reached " << field.worst_negative_ratio;
        field.warnings.push_back(msg.str());
    }
    return field;
}

}  // namespace sdde
