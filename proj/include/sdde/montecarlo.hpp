#pragma once

// Euler-Maruyama simulation of the delay equation and of its augmented
// segments, driven by counter-based noise so every path is reproducible
// independently of scheduling.
//
// Noise convention: path p at global step j draws xi(p, j). Segment i (0-based)
// of the augmented system at local step n uses global step i*m + n, m = tau/dt,
// so segments consume disjoint slices of one stream and coincide with the
// delay-equation path driven by the same increments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sdde/errors.hpp"
#include "sdde/grid.hpp"
#include "sdde/kernel.hpp"
#include "sdde/model.hpp"
#include "sdde/parallel.hpp"
#include "sdde/rng.hpp"

namespace sdde {

struct SimConfig {
    double dt = 1e-3;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 0;
    double t_max = 1.0;
    unsigned threads = 1;
};

/// Philox-backed standard normal increments.
class PhiloxNoise {
public:
    explicit PhiloxNoise(std::uint64_t seed) : stream_(seed) {}
    double operator()(std::size_t path, std::uint64_t step) const noexcept { return stream_.normal(path, step); }

private:
    NormalStream stream_;
};

/// Increments of a coarse grid assembled from `factor` consecutive fine
/// increments: xi_c(j) = sum_l xi_f(factor*j + l) / sqrt(factor). Driving a
/// dt*factor simulation with this reproduces the Brownian path of the fine run.
template <typename Fine>
class CoarsenedNoise {
public:
    CoarsenedNoise(Fine fine, int factor) : fine_(std::move(fine)), factor_(factor), scale_(1.0 / std::sqrt(factor)) {
        if (factor < 1) throw InvalidInput("coarsening factor must be >= 1");
    }
    double operator()(std::size_t path, std::uint64_t step) const {
        double acc = 0.0;
        const auto f = static_cast<std::uint64_t>(factor_);
        for (std::uint64_t l = 0; l < f; ++l) acc += fine_(path, step * f + l);
        return acc * scale_;
    }

private:
    Fine fine_;
    int factor_;
    double scale_;
};

struct PathEnsemble {
    std::vector<double> times;
    std::size_t n_paths = 0;
    std::vector<double> samples;  // row-major n_paths x times.size()

    [[nodiscard]] double at(std::size_t path, std::size_t time_index) const {
        return samples[path * times.size() + time_index];
    }
    [[nodiscard]] std::vector<double> column(std::size_t time_index) const {
        std::vector<double> out(n_paths);
        for (std::size_t p = 0; p < n_paths; ++p) out[p] = at(p, time_index);
        return out;
    }
};

/// Full segment paths of the augmented system under the continuous condition.
struct AugmentedEnsemble {
    int k = 1;
    std::size_t steps_per_segment = 0;
    std::size_t n_paths = 0;
    std::vector<double> values;  // [path][segment][0..m]

    [[nodiscard]] double at(std::size_t path, int segment, std::size_t n) const {
        return values[(path * static_cast<std::size_t>(k) + static_cast<std::size_t>(segment)) *
                          (steps_per_segment + 1) +
                      n];
    }
};

namespace detail {

inline std::size_t grid_steps(double t, double dt, const char* what) {
    const double ratio = t / dt;
    const double r = std::round(ratio);
    if (r < 0.0 || std::abs(ratio - r) > 1e-9 * std::max(1.0, ratio)) {
        std::ostringstream msg;
        msg << what << " " << t << " is not an integer multiple of dt=" << dt;
        throw InvalidInput(msg.str());
    }
    return static_cast<std::size_t>(r);
}

inline void check_sim(const SimConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw InvalidInput("simulation dt must be > 0");
    if (cfg.n_paths < 1) throw InvalidInput("simulation needs n_paths >= 1");
}

/// History values gamma((m - j) dt) for the first m steps.
inline std::vector<double> delayed_history(const SDDEModel& model, std::size_t m, double dt) {
    std::vector<double> h(m);
    for (std::size_t j = 0; j < m; ++j) h[j] = model.gamma(static_cast<double>(m - j) * dt);
    return h;
}

inline double em_update(const SDDEModel& model, double x, double delayed, double dt, double sqrt_dt,
                        double xi) noexcept {
    return x + model.drift(x, delayed) * dt + model.diffusion(x, delayed) * sqrt_dt * xi;
}

}  // namespace detail

/// Explicit Euler-Maruyama for the delay equation, observed at `times`.
template <typename Noise>
PathEnsemble simulate_sdde(const SDDEModel& model, const SimConfig& cfg, std::span<const double> times,
                           const Noise& noise) {
    model.check();
    detail::check_sim(cfg);
    const std::size_t m = detail::grid_steps(model.tau, cfg.dt, "delay tau");
    if (m == 0) throw InvalidInput("delay tau must span at least one step");
    std::vector<std::size_t> obs(times.size());
    std::size_t last = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < 0.0 || times[i] > cfg.t_max * (1.0 + 1e-12))
            throw InvalidInput("observation time outside [0, t_max]");
        obs[i] = detail::grid_steps(times[i], cfg.dt, "observation time");
        last = std::max(last, obs[i]);
    }
    const std::vector<double> hist = detail::delayed_history(model, m, cfg.dt);
    const double dt = cfg.dt;
    const double sqrt_dt = std::sqrt(dt);

    PathEnsemble out;
    out.times.assign(times.begin(), times.end());
    out.n_paths = cfg.n_paths;
    out.samples.resize(cfg.n_paths * times.size());

    // Observation slots sorted by step for a single forward pass.
    std::vector<std::size_t> order(times.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return obs[a] < obs[b]; });

    parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t path) {
        std::vector<double> ring(m + 1);
        const double x0 = model.gamma0();
        ring[0] = x0;
        double x = x0;
        std::size_t next = 0;
        double* row = out.samples.data() + path * times.size();
        while (next < order.size() && obs[order[next]] == 0) row[order[next++]] = x;
        for (std::size_t j = 0; j < last; ++j) {
            const double delayed = j < m ? hist[j] : ring[(j - m) % (m + 1)];
            x = detail::em_update(model, x, delayed, dt, sqrt_dt, noise(path, j));
            if (!std::isfinite(x)) throw NumericFailure("simulated path became non-finite");
            ring[(j + 1) % (m + 1)] = x;
            while (next < order.size() && obs[order[next]] == j + 1) row[order[next++]] = x;
        }
    });
    return out;
}

inline PathEnsemble simulate_sdde(const SDDEModel& model, const SimConfig& cfg, std::span<const double> times) {
    return simulate_sdde(model, cfg, times, PhiloxNoise(cfg.seed));
}

/// Method-of-steps simulation: segment 1 starts at gamma0, segment i starts at
/// the end value of segment i-1, each driven by its own slice of the noise.
template <typename Noise>
AugmentedEnsemble simulate_augmented(const AugmentedSystem& aug, const SimConfig& cfg, const Noise& noise) {
    detail::check_sim(cfg);
    const SDDEModel& model = aug.model();
    const std::size_t m = detail::grid_steps(model.tau, cfg.dt, "delay tau");
    if (m == 0) throw InvalidInput("delay tau must span at least one step");
    const std::vector<double> hist = detail::delayed_history(model, m, cfg.dt);
    const double dt = cfg.dt;
    const double sqrt_dt = std::sqrt(dt);

    AugmentedEnsemble out;
    out.k = aug.k();
    out.steps_per_segment = m;
    out.n_paths = cfg.n_paths;
    out.values.resize(cfg.n_paths * static_cast<std::size_t>(aug.k()) * (m + 1));

    parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t path) {
        for (int i = 0; i < aug.k(); ++i) {
            double* seg = out.values.data() + (path * static_cast<std::size_t>(aug.k()) + static_cast<std::size_t>(i)) * (m + 1);
            const double* prev = i == 0 ? nullptr : seg - (m + 1);
            seg[0] = i == 0 ? model.gamma0() : prev[m];
            const std::uint64_t offset = static_cast<std::uint64_t>(i) * m;
            for (std::size_t n = 0; n < m; ++n) {
                const double delayed = i == 0 ? hist[n] : prev[n];
                seg[n + 1] = detail::em_update(model, seg[n], delayed, dt, sqrt_dt, noise(path, offset + n));
            }
        }
    });
    return out;
}

inline AugmentedEnsemble simulate_augmented(const AugmentedSystem& aug, const SimConfig& cfg) {
    return simulate_augmented(aug, cfg, PhiloxNoise(cfg.seed));
}

/// Samples of the augmented state at t, all segments stepped together from v at s.
/// Returns n_paths rows of k values.
template <typename Noise>
std::vector<double> sample_augmented(const AugmentedSystem& aug, std::span<const double> v, double s, double t,
                                     const SimConfig& cfg, const Noise& noise) {
    detail::check_sim(cfg);
    aug.check_state(v);
    const SDDEModel& model = aug.model();
    const std::size_t m = detail::grid_steps(model.tau, cfg.dt, "delay tau");
    const std::size_t n0 = detail::grid_steps(s, cfg.dt, "start time");
    const std::size_t n1 = detail::grid_steps(t, cfg.dt, "end time");
    if (!(n1 > n0) || n1 > m) throw InvalidInput("kernel sampling needs 0 <= s < t <= tau");
    const std::vector<double> hist = detail::delayed_history(model, m, cfg.dt);
    const auto k = static_cast<std::size_t>(aug.k());
    const double dt = cfg.dt;
    const double sqrt_dt = std::sqrt(dt);

    std::vector<double> out(cfg.n_paths * k);
    parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t path) {
        std::vector<double> x(v.begin(), v.end());
        std::vector<double> next(k);
        for (std::size_t n = n0; n < n1; ++n) {
            for (std::size_t i = 0; i < k; ++i) {
                const double delayed = i == 0 ? hist[n] : x[i - 1];
                next[i] = detail::em_update(model, x[i], delayed, dt, sqrt_dt, noise(path, i * m + n));
            }
            x.swap(next);
        }
        std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(path * k));
    });
    return out;
}

struct HistogramDensity {
    double min = 0.0;
    double max = 1.0;
    std::vector<double> heights;
    std::size_t sample_count = 0;
    std::size_t in_window = 0;

    [[nodiscard]] std::size_t bins() const noexcept { return heights.size(); }
    [[nodiscard]] double width() const noexcept { return (max - min) / static_cast<double>(heights.size()); }
    [[nodiscard]] double center(std::size_t i) const noexcept {
        return min + (static_cast<double>(i) + 0.5) * width();
    }
    /// Piecewise-constant value; zero outside the window.
    [[nodiscard]] double at(double x) const noexcept {
        if (!(x >= min && x < max)) return x == max && !heights.empty() ? heights.back() : 0.0;
        const auto i = std::min(static_cast<std::size_t>((x - min) / width()), heights.size() - 1);
        return heights[i];
    }
    /// Linear interpolation between bin centres, constant in the outer half bins.
    [[nodiscard]] double smooth_at(double x) const noexcept {
        if (!(x >= min && x <= max) || heights.empty()) return 0.0;
        const double pos = (x - min) / width() - 0.5;
        if (pos <= 0.0) return heights.front();
        const auto i = static_cast<std::size_t>(pos);
        if (i + 1 >= heights.size()) return heights.back();
        const double f = pos - static_cast<double>(i);
        return (1.0 - f) * heights[i] + f * heights[i + 1];
    }
    [[nodiscard]] double mass() const noexcept {
        double m = 0.0;
        for (double h : heights) m += h * width();
        return m;
    }
};

/// Normalized histogram over [lo, hi) (the last bin includes hi); samples
/// outside the window are excluded from the normalization.
inline HistogramDensity estimate_density(std::span<const double> samples, std::size_t bins, double lo, double hi) {
    if (samples.size() < 1000) throw InvalidInput("density estimation needs at least 1000 samples");
    if (bins < 1) throw InvalidInput("density estimation needs at least one bin");
    if (!(lo < hi)) throw InvalidInput("density estimation window is empty");
    HistogramDensity h;
    h.min = lo;
    h.max = hi;
    h.sample_count = samples.size();
    std::vector<std::size_t> counts(bins, 0);
    const double w = (hi - lo) / static_cast<double>(bins);
    for (double x : samples) {
        if (!(x >= lo && x <= hi)) continue;
        const auto i = std::min(static_cast<std::size_t>((x - lo) / w), bins - 1);
        ++counts[i];
        ++h.in_window;
    }
    if (h.in_window == 0) throw InvalidInput("no samples fall inside the density window");
    h.heights.resize(bins);
    for (std::size_t i = 0; i < bins; ++i)
        h.heights[i] = static_cast<double>(counts[i]) / (static_cast<double>(h.in_window) * w);
    return h;
}

/// Histogram of k-dimensional samples on grid nodes: each sample goes to its
/// nearest node, value = count / (N * cell volume).
inline DensityField histogram_on_grid(std::span<const double> samples, std::size_t n_samples, const Grid& grid) {
    const auto k = static_cast<std::size_t>(grid.dim());
    if (samples.size() != n_samples * k) throw InvalidInput("sample matrix does not match grid dimension");
    DensityField field;
    field.grid = grid;
    field.values.assign(grid.size(), 0.0);
    const double scale = 1.0 / (static_cast<double>(n_samples) * grid.cell_volume());
    for (std::size_t p = 0; p < n_samples; ++p) {
        std::size_t flat = 0;
        bool inside = true;
        for (std::size_t d = 0; d < k && inside; ++d) {
            const Axis& a = grid.axis(static_cast<int>(d));
            const double pos = std::round((samples[p * k + d] - a.min) / a.spacing());
            if (pos < 0.0 || pos > static_cast<double>(a.n - 1)) inside = false;
            else flat += static_cast<std::size_t>(pos) * grid.stride(static_cast<int>(d));
        }
        if (inside) field.values[flat] += scale;
    }
    return field;
}

/// Empirical Q_k(. ; t | v; s) wrapped as a kernel handle valid only for the
/// conditioning point and times it was built for.
inline TransitionKernelHandle estimate_kernel(const AugmentedSystem& aug, std::span<const double> v, double s,
                                              double t, const Grid& grid, const SimConfig& cfg) {
    if (grid.dim() != aug.k()) throw InvalidInput("kernel estimate: grid dimension must equal k");
    const std::vector<double> samples = sample_augmented(aug, v, s, t, cfg, PhiloxNoise(cfg.seed));
    auto field = std::make_shared<DensityField>(histogram_on_grid(samples, cfg.n_paths, grid));
    field->time = t;
    const Point built(v.begin(), v.end());
    return TransitionKernelHandle(
        aug.k(), aug.tau(), Backend::monte_carlo, "monte-carlo:histogram",
        [field, built, s, t](std::span<const double> u, double tq, std::span<const double> vq, double sq) {
            const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); };
            bool same = close(sq, s) && close(tq, t);
            for (std::size_t i = 0; i < built.size() && same; ++i) same = close(vq[i], built[i]);
            if (!same) throw InvalidInput("monte-carlo kernel queried away from the point it was estimated for");
            return interpolate(*field, u);
        });
}

/// Kolmogorov-Smirnov distance between samples and a continuous CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf) {
    std::sort(samples.begin(), samples.end());
    const auto n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

}  // namespace sdde
