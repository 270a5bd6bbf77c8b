#pragma once

// Transition kernel handles: a uniform evaluator Q_k(u; t | v; s) over
// interchangeable backends (closed forms, grid Fokker-Planck solves, Monte Carlo
// histograms), so the composition formulas never depend on how a kernel is computed.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sdde/analytic.hpp"
#include "sdde/errors.hpp"
#include "sdde/fokker_planck.hpp"
#include "sdde/grid.hpp"
#include "sdde/model.hpp"
#include "sdde/parallel.hpp"

namespace sdde {

enum class Backend { analytic, grid, monte_carlo };

inline const char* backend_name(Backend b) {
    switch (b) {
        case Backend::analytic: return "analytic";
        case Backend::grid: return "grid";
        case Backend::monte_carlo: return "monte-carlo";
    }
    return "unknown";
}

using Point = std::vector<double>;
using KernelFn = std::function<double(std::span<const double> u, double t, std::span<const double> v, double s)>;
/// Optional batch hook: the caller announces the conditioning points it is about to query.
using PrefetchFn = std::function<void(std::span<const Point> points, double s, double t)>;

class TransitionKernelHandle {
public:
    TransitionKernelHandle(int k, double tau, Backend backend, std::string label, KernelFn eval,
                           PrefetchFn prefetch = {})
        : k_(k), tau_(tau), backend_(backend), label_(std::move(label)), eval_(std::move(eval)),
          prefetch_(std::move(prefetch)) {
        if (k_ < 1) throw InvalidInput("kernel handle needs k >= 1");
        if (!eval_) throw InvalidInput("kernel handle needs an evaluator");
    }

    [[nodiscard]] int k() const noexcept { return k_; }
    [[nodiscard]] double tau() const noexcept { return tau_; }
    [[nodiscard]] Backend backend() const noexcept { return backend_; }
    [[nodiscard]] const std::string& label() const noexcept { return label_; }

    double operator()(std::span<const double> u, double t, std::span<const double> v, double s) const {
        const auto k = static_cast<std::size_t>(k_);
        if (u.size() != k || v.size() != k) {
            std::ostringstream msg;
            msg << "kernel " << label_ << " expects vectors of length " << k_;
            throw InvalidInput(msg.str());
        }
        return eval_(u, t, v, s);
    }

    void prefetch(std::span<const Point> points, double s, double t) const {
        if (prefetch_) prefetch_(points, s, t);
    }

private:
    int k_;
    double tau_;
    Backend backend_;
    std::string label_;
    KernelFn eval_;
    PrefetchFn prefetch_;
};

/// Closed-form heat kernel (the k = 1 kernel of the reference example).
inline TransitionKernelHandle make_heat_kernel_handle(double tau = 1.0) {
    return TransitionKernelHandle(1, tau, Backend::analytic, "analytic:heat",
                                  [](std::span<const double> u, double t, std::span<const double> v, double s) {
                                      return heat_kernel_q1(u[0], t, v[0], s);
                                  });
}

/// Closed-form two-segment kernel of the reference example.
inline TransitionKernelHandle make_example_q2_handle(double tau = 1.0) {
    return TransitionKernelHandle(2, tau, Backend::analytic, "analytic:example-q2",
                                  [](std::span<const double> u, double t, std::span<const double> v, double s) {
                                      return example_q2(u[0], u[1], t, v[0], v[1], s);
                                  });
}

namespace detail {

/// Gaussian kernel with its Cholesky factor precomputed for repeated evaluation.
struct PreparedGaussian {
    GaussianKernel kernel;
    Eigen::MatrixXd chol_lower;
    double log_norm = 0.0;

    explicit PreparedGaussian(GaussianKernel k) : kernel(std::move(k)) {
        const Eigen::LLT<Eigen::MatrixXd> llt(kernel.cov);
        if (llt.info() != Eigen::Success) throw NumericFailure("moment covariance is not positive definite");
        chol_lower = llt.matrixL();
        double log_det = 0.0;
        for (int i = 0; i < kernel.k; ++i) log_det += 2.0 * std::log(chol_lower(i, i));
        log_norm = -0.5 * (static_cast<double>(kernel.k) * std::log(2.0 * std::numbers::pi) + log_det);
    }

    [[nodiscard]] double operator()(std::span<const double> u, std::span<const double> v) const {
        const int k = kernel.k;
        double r[kMaxSolveDim + 1];
        for (int i = 0; i < k; ++i) {
            double m = kernel.offset(i);
            for (int j = 0; j < k; ++j) m += kernel.mean_map(i, j) * v[static_cast<std::size_t>(j)];
            r[i] = u[static_cast<std::size_t>(i)] - m;
        }
        // Forward substitution L z = r.
        double q = 0.0;
        for (int i = 0; i < k; ++i) {
            double acc = r[i];
            for (int j = 0; j < i; ++j) acc -= chol_lower(i, j) * r[j];
            r[i] = acc / chol_lower(i, i);
            q += r[i] * r[i];
        }
        return std::exp(log_norm - 0.5 * q);
    }
};

struct MomentCache {
    AugmentedSystem aug;
    std::mutex mutex;
    std::map<std::pair<double, double>, std::shared_ptr<const PreparedGaussian>> entries;

    explicit MomentCache(AugmentedSystem a) : aug(std::move(a)) {}

    std::shared_ptr<const PreparedGaussian> get(double s, double t) {
        {
            std::lock_guard lock(mutex);
            if (auto it = entries.find({s, t}); it != entries.end()) return it->second;
        }
        auto made = std::make_shared<const PreparedGaussian>(gaussian_kernel_via_moments(aug, s, t));
        std::lock_guard lock(mutex);
        return entries.emplace(std::make_pair(s, t), std::move(made)).first->second;
    }
};

}  // namespace detail

/// Exact Gaussian kernel of an additive-noise model from the moment ODEs,
/// cached per (s, t) pair.
inline TransitionKernelHandle make_gaussian_moment_handle(const SDDEModel& model, int k) {
    if (!model.additive_noise()) throw InvalidInput("moment kernels need additive noise (s1 = s2 = 0)");
    if (k > kMaxSolveDim + 1) throw InvalidInput("moment kernels support k <= 4");
    auto cache = std::make_shared<detail::MomentCache>(build_augmented(model, k));
    return TransitionKernelHandle(
        k, model.tau, Backend::analytic, "analytic:moments",
        [cache](std::span<const double> u, double t, std::span<const double> v, double s) {
            return (*cache->get(s, t))(u, v);
        },
        [cache](std::span<const Point>, double s, double t) { cache->get(s, t); });
}

namespace detail {

struct GridKernelCache {
    AugmentedSystem aug;
    Grid grid;
    SolverConfig cfg;
    unsigned threads;
    std::mutex mutex;
    std::map<std::vector<double>, std::shared_ptr<const DensityField>> entries;
    std::vector<std::string> warnings;

    GridKernelCache(AugmentedSystem a, Grid g, SolverConfig c, unsigned th)
        : aug(std::move(a)), grid(std::move(g)), cfg(c), threads(th) {}

    static std::vector<double> key(std::span<const double> v, double s, double t) {
        std::vector<double> out(v.begin(), v.end());
        out.push_back(s);
        out.push_back(t);
        return out;
    }

    std::shared_ptr<const DensityField> find(const std::vector<double>& k) {
        std::lock_guard lock(mutex);
        auto it = entries.find(k);
        return it == entries.end() ? nullptr : it->second;
    }

    std::shared_ptr<const DensityField> solve(std::span<const double> v, double s, double t) {
        SolverConfig inner = cfg;
        inner.threads = 1;
        auto field = std::make_shared<const DensityField>(solve_kernel(aug, v, s, t, grid, inner));
        std::lock_guard lock(mutex);
        for (const auto& w : field->warnings) warnings.push_back(w);
        return entries.emplace(key(v, s, t), std::move(field)).first->second;
    }

    std::shared_ptr<const DensityField> get(std::span<const double> v, double s, double t) {
        if (auto hit = find(key(v, s, t))) return hit;
        return solve(v, s, t);
    }

    void prefetch(std::span<const Point> points, double s, double t) {
        std::vector<Point> missing;
        for (const auto& p : points)
            if (!find(key(p, s, t))) missing.push_back(p);
        std::vector<std::shared_ptr<const DensityField>> solved(missing.size());
        parallel_for(missing.size(), threads, [&](std::size_t i) {
            SolverConfig inner = cfg;
            inner.threads = 1;
            solved[i] = std::make_shared<const DensityField>(solve_kernel(aug, missing[i], s, t, grid, inner));
        });
        std::lock_guard lock(mutex);
        for (std::size_t i = 0; i < missing.size(); ++i) {
            for (const auto& w : solved[i]->warnings) warnings.push_back(w);
            entries.emplace(key(missing[i], s, t), solved[i]);
        }
    }
};

}  // namespace detail

/// Kernel evaluated from grid Fokker-Planck solves, one solve per distinct
/// (v, s, t) request, interpolated multilinearly in u.
class GridKernel {
public:
    GridKernel(const SDDEModel& model, int k, Grid grid, SolverConfig cfg, unsigned threads = 1)
        : cache_(std::make_shared<detail::GridKernelCache>(build_augmented(model, k), std::move(grid), cfg,
                                                           threads)) {
        if (cache_->grid.dim() != k) throw InvalidInput("grid kernel: grid dimension must equal k");
    }

    [[nodiscard]] TransitionKernelHandle handle() const {
        auto cache = cache_;
        return TransitionKernelHandle(
            cache->aug.k(), cache->aug.tau(), Backend::grid, "grid:fokker-planck",
            [cache](std::span<const double> u, double t, std::span<const double> v, double s) {
                return interpolate(*cache->get(v, s, t), u);
            },
            [cache](std::span<const Point> points, double s, double t) { cache->prefetch(points, s, t); });
    }

    [[nodiscard]] std::shared_ptr<const DensityField> field(std::span<const double> v, double s, double t) const {
        return cache_->get(v, s, t);
    }

    [[nodiscard]] std::vector<std::string> warnings() const {
        std::lock_guard lock(cache_->mutex);
        return cache_->warnings;
    }

    [[nodiscard]] std::size_t solves() const {
        std::lock_guard lock(cache_->mutex);
        return cache_->entries.size();
    }

private:
    std::shared_ptr<detail::GridKernelCache> cache_;
};

}  // namespace sdde
