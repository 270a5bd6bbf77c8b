#pragma once

// Orchestration shared by the CLI: picks the time segment, builds kernels for
// the chosen backend and evaluates P_A(., t) on the configured abscissae.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sdde/composition.hpp"
#include "sdde/config.hpp"
#include "sdde/errors.hpp"
#include "sdde/kernel.hpp"
#include "sdde/montecarlo.hpp"

namespace sdde {

enum class Method { analytic, fp, mc };

inline Method parse_method(const std::string& name) {
    if (name == "analytic") return Method::analytic;
    if (name == "fp") return Method::fp;
    if (name == "mc") return Method::mc;
    throw InvalidInput("unknown method '" + name + "' (expected analytic, fp or mc)");
}

inline const char* method_name(Method m) {
    switch (m) {
        case Method::analytic: return "analytic";
        case Method::fp: return "fp";
        case Method::mc: return "mc";
    }
    return "unknown";
}

struct SegmentPlan {
    enum class Kind { first_interval, multiple, general };
    Kind kind = Kind::first_interval;
    int k = 1;
    double t_prime = 0.0;
};

inline SegmentPlan plan_segment(double t, double tau) {
    if (!(t > 0.0)) throw InvalidInput("density time must be > 0");
    const double slack = 1e-12;
    if (t <= tau * (1.0 + slack)) return {SegmentPlan::Kind::first_interval, 1, std::min(t, tau)};
    const double ratio = t / tau;
    const double nearest = std::round(ratio);
    SegmentPlan p;
    if (std::abs(ratio - nearest) <= slack * nearest) {
        p.kind = SegmentPlan::Kind::multiple;
        p.k = static_cast<int>(nearest);
        p.t_prime = tau;
    } else {
        p.kind = SegmentPlan::Kind::general;
        p.k = static_cast<int>(std::ceil(ratio));
        p.t_prime = t - (p.k - 1) * tau;
    }
    if (p.k > kMaxSegments) throw InvalidInput("times beyond 3 tau are not supported (k <= 3)");
    return p;
}

/// Kernel handles Q_1..Q_k for one backend, owning any grid caches.
struct KernelSet {
    std::vector<TransitionKernelHandle> handles;  // handles[j-1] is Q_j
    std::vector<GridKernel> grids;

    [[nodiscard]] const TransitionKernelHandle& q(int j) const { return handles.at(static_cast<std::size_t>(j - 1)); }
    [[nodiscard]] std::vector<std::string> warnings() const {
        std::vector<std::string> out;
        for (const auto& g : grids)
            for (auto& w : g.warnings()) out.push_back(std::move(w));
        return out;
    }
};

inline KernelSet make_kernels(const RunConfig& cfg, Method method, int k) {
    KernelSet set;
    const SDDEModel& m = cfg.model;
    if (method == Method::analytic) {
        if (is_reference_example(m) && k <= 2) {
            set.handles.push_back(make_heat_kernel_handle(m.tau));
            if (k == 2) set.handles.push_back(make_example_q2_handle(m.tau));
        } else if (m.additive_noise()) {
            for (int j = 1; j <= k; ++j) set.handles.push_back(make_gaussian_moment_handle(m, j));
        } else {
            throw InvalidInput("analytic method needs an additive-noise model (s1 = s2 = 0)");
        }
    } else if (method == Method::fp) {
        const SolverConfig& solver = cfg.solver_or_throw();
        for (int j = 1; j <= k; ++j) {
            set.grids.emplace_back(m, j, cfg.grid_for(j), solver, cfg.threads);
            set.handles.push_back(set.grids.back().handle());
        }
    } else {
        throw InvalidInput("monte-carlo kernels are built per conditioning point; use the kernel subcommand");
    }
    return set;
}

/// Mean and standard deviation of X at the given times from a small fixed-seed pilot run.
inline std::vector<std::pair<double, double>> pilot_moments(const SDDEModel& model, double dt,
                                                            const std::vector<double>& times) {
    SimConfig sim;
    sim.dt = dt;
    sim.n_paths = 4000;
    sim.seed = 0x5EED5EEDull;
    sim.t_max = *std::max_element(times.begin(), times.end());
    const PathEnsemble ens = simulate_sdde(model, sim, times);
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const auto col = ens.column(i);
        double mean = 0.0;
        for (double x : col) mean += x;
        mean /= static_cast<double>(col.size());
        double var = 0.0;
        for (double x : col) var += (x - mean) * (x - mean);
        var /= static_cast<double>(col.size() - 1);
        out.emplace_back(mean, std::sqrt(var));
    }
    return out;
}

/// Quadrature for the segment plan: explicit windows when configured (a single
/// window repeats), otherwise mean +- sigmas * sd from the pilot run.
inline QuadratureGrid quadrature_for(const RunConfig& cfg, const SegmentPlan& plan, Method method) {
    const int k = plan.k;
    const int axes = plan.kind == SegmentPlan::Kind::general ? 2 * (k - 1) : k - 1;
    QuadratureConfig qc = cfg.quadrature.value_or(QuadratureConfig{});
    const int points = qc.points > 0 ? qc.points : (axes <= 2 ? 64 : 32);
    std::vector<Axis> out;
    if (!qc.axes.empty()) {
        for (int d = 0; d < axes; ++d) {
            Axis a = qc.axes[std::min<std::size_t>(static_cast<std::size_t>(d), qc.axes.size() - 1)];
            if (a.n <= 0) a.n = points;
            out.push_back(a);
        }
    } else {
        const double tau = cfg.model.tau;
        std::vector<double> times;
        if (plan.kind == SegmentPlan::Kind::general)
            for (int i = 1; i < k; ++i) times.push_back(plan.t_prime + (i - 1) * tau);
        for (int i = 1; i < k; ++i) times.push_back(i * tau);
        double dt = cfg.mc ? cfg.mc->sim.dt : (cfg.solver ? cfg.solver->dt : tau / 1000.0);
        if (std::abs(tau / dt - std::round(tau / dt)) > 1e-9 * (tau / dt)) dt = tau / 1000.0;
        // Pilot times must lie on the pilot grid.
        for (double& t : times) t = std::round(t / dt) * dt;
        const auto mom = pilot_moments(cfg.model, dt, times);
        for (const auto& [mean, sd] : mom) {
            const double half = std::max(qc.sigmas * sd, 1e-6);
            out.push_back(Axis{mean - half, mean + half, points});
        }
    }
    if (method == Method::fp) {
        // Conditioning points must sit strictly inside the solver grids.
        // x_ conditions Q_{k-1} on axes 0..k-2; y (or x_i at i*tau) conditions Q_k on axes 1..k-1.
        for (int d = 0; d < axes; ++d) {
            const bool conditions_qk = plan.kind != SegmentPlan::Kind::general || d >= k - 1;
            const int grid_axis = plan.kind == SegmentPlan::Kind::general ? (conditions_qk ? d - (k - 1) + 1 : d) : d + 1;
            const Grid g = cfg.grid_for(conditions_qk ? k : k - 1);
            const Axis& ga = g.axis(grid_axis);
            Axis& a = out[static_cast<std::size_t>(d)];
            a.min = std::max(a.min, ga.min + ga.spacing());
            a.max = std::min(a.max, ga.max - ga.spacing());
            if (!(a.min < a.max)) throw InvalidInput("quadrature window does not overlap the solver grid");
        }
    }
    return QuadratureGrid(std::move(out));
}

inline DensityCurve density_curve(const RunConfig& cfg, Method method, double t) {
    const std::vector<double> xs = cfg.output.abscissae();
    const SegmentPlan plan = plan_segment(t, cfg.model.tau);
    const double g0 = cfg.model.gamma0();

    if (method == Method::mc) {
        McConfig mc = cfg.mc_or_throw();
        mc.sim.t_max = t;
        mc.sim.threads = cfg.threads;
        const double times[1] = {t};
        const PathEnsemble ens = simulate_sdde(cfg.model, mc.sim, times);
        const auto col = ens.column(0);
        const HistogramDensity hist = estimate_density(col, mc.bins, cfg.output.x_min, cfg.output.x_max);
        DensityCurve curve;
        curve.t = t;
        curve.x = xs;
        curve.values.resize(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) curve.values[i] = hist.smooth_at(xs[i]);
        curve.backends = {"monte-carlo:euler-maruyama"};
        curve.mass = trapezoid(curve.x, curve.values);
        if (hist.in_window < hist.sample_count) {
            curve.warnings.push_back(std::to_string(hist.sample_count - hist.in_window) +
                                     " samples fell outside the output window");
        }
        return curve;
    }

    const KernelSet kernels = make_kernels(cfg, method, plan.k);
    DensityCurve curve;
    switch (plan.kind) {
        case SegmentPlan::Kind::first_interval:
            curve = density_first_interval(kernels.q(1), g0, xs, plan.t_prime);
            break;
        case SegmentPlan::Kind::multiple:
            curve = density_at_multiple(kernels.q(plan.k), g0, xs, plan.k, quadrature_for(cfg, plan, method),
                                        cfg.threads);
            break;
        case SegmentPlan::Kind::general:
            curve = density_general(kernels.q(plan.k), kernels.q(plan.k - 1), g0, xs, t, plan.k,
                                    quadrature_for(cfg, plan, method), cfg.threads);
            break;
    }
    curve.t = t;
    // Grid warnings repeat per solve; keep each distinct message once.
    std::set<std::string> seen(curve.warnings.begin(), curve.warnings.end());
    for (auto& w : kernels.warnings())
        if (seen.insert(w).second && seen.size() <= 8) curve.warnings.push_back(w);
    return curve;
}

struct PairMetrics {
    std::string a, b;
    double l1 = 0.0;
    double linf = 0.0;
    double ks = 0.0;
};

struct ComparisonReport {
    double t = 0.0;
    std::vector<std::string> methods;
    std::vector<DensityCurve> curves;
    std::vector<double> runtime_seconds;
    std::vector<PairMetrics> pairs;
};

/// L1, Linf and max CDF gap between two curves on the same abscissae.
inline PairMetrics compare_curves(const DensityCurve& p, const DensityCurve& q) {
    if (p.x != q.x) throw InvalidInput("curves must share abscissae");
    PairMetrics m;
    std::vector<double> diff(p.x.size());
    for (std::size_t i = 0; i < diff.size(); ++i) {
        diff[i] = std::abs(p.values[i] - q.values[i]);
        m.linf = std::max(m.linf, diff[i]);
    }
    m.l1 = trapezoid(p.x, diff);
    double cp = 0.0, cq = 0.0;
    for (std::size_t i = 1; i < p.x.size(); ++i) {
        const double h = p.x[i] - p.x[i - 1];
        cp += 0.5 * h * (p.values[i] + p.values[i - 1]);
        cq += 0.5 * h * (q.values[i] + q.values[i - 1]);
        m.ks = std::max(m.ks, std::abs(cp - cq));
    }
    return m;
}

inline ComparisonReport run_compare(const RunConfig& cfg, double t, const std::vector<Method>& methods) {
    if (methods.size() < 2) throw InvalidInput("compare needs at least two methods");
    ComparisonReport report;
    report.t = t;
    for (Method m : methods) {
        const auto start = std::chrono::steady_clock::now();
        report.curves.push_back(density_curve(cfg, m, t));
        report.runtime_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        report.methods.emplace_back(method_name(m));
    }
    for (std::size_t i = 0; i < methods.size(); ++i)
        for (std::size_t j = i + 1; j < methods.size(); ++j) {
            PairMetrics pm = compare_curves(report.curves[i], report.curves[j]);
            pm.a = report.methods[i];
            pm.b = report.methods[j];
            report.pairs.push_back(pm);
        }
    return report;
}

}  // namespace sdde
