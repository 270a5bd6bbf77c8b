#pragma once

// Density of the delay equation assembled from transition kernels of the
// augmented system by tensor-trapezoid quadrature:
//   t in (0, tau]            P(x,t) = Q1(x; t | g0; 0)
//   t = k tau                P(x,t) = int Q_k(x_1..x_{k-1}, x; tau | g0, x_1..x_{k-1}; 0) dx
//   t in ((k-1)tau, k tau)   P(x,t) = int int Q_{k-1}(y; tau | x_; t') Q_k(x_, x; t' | g0, y; 0) dx_ dy,
//                            t' = t - (k-1) tau
// together with the bridge, joint and conditional densities and the marginal
// relation between Q_{k+1} and Q_k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdde/errors.hpp"
#include "sdde/grid.hpp"
#include "sdde/kernel.hpp"
#include "sdde/parallel.hpp"

namespace sdde {

/// Denominators below this are treated as a failure of strict positivity.
inline constexpr double kPositivityFloor = 1e-300;

inline constexpr int kMaxSegments = 3;

/// Tensor trapezoid rule over per-variable windows.
class QuadratureGrid {
public:
    QuadratureGrid() = default;
    explicit QuadratureGrid(std::vector<Axis> axes) : axes_(std::move(axes)) {
        for (const auto& a : axes_) {
            if (!(a.min < a.max)) throw InvalidInput("quadrature window needs min < max");
            if (a.n < 16) throw InvalidInput("quadrature axis needs n >= 16");
        }
    }
    static QuadratureGrid uniform(int axes, double lo, double hi, int n) {
        return QuadratureGrid(std::vector<Axis>(static_cast<std::size_t>(axes), Axis{lo, hi, n}));
    }

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(axes_.size()); }
    [[nodiscard]] const Axis& axis(int d) const { return axes_[static_cast<std::size_t>(d)]; }
    [[nodiscard]] const std::vector<Axis>& axes() const noexcept { return axes_; }

    /// Nodes and weights of the sub-rule spanning axes [first, first + count).
    struct Rule {
        std::vector<Point> nodes;
        std::vector<double> weights;
    };
    [[nodiscard]] Rule rule(int first, int count) const {
        Rule r;
        r.nodes.push_back({});
        r.weights.push_back(1.0);
        for (int d = first; d < first + count; ++d) {
            const Axis& a = axis(d);
            Rule next;
            for (std::size_t p = 0; p < r.nodes.size(); ++p) {
                for (int i = 0; i < a.n; ++i) {
                    Point node = r.nodes[p];
                    node.push_back(a.node(i));
                    next.nodes.push_back(std::move(node));
                    next.weights.push_back(r.weights[p] * trapezoid_weight(a, i));
                }
            }
            r = std::move(next);
        }
        return r;
    }
    [[nodiscard]] Rule rule() const { return rule(0, dim()); }

private:
    std::vector<Axis> axes_;
};

/// P_A(x, t) sampled at abscissae with diagnostics.
struct DensityCurve {
    std::vector<double> x;
    std::vector<double> values;
    double t = 0.0;
    double mass = 0.0;
    std::vector<std::string> backends;
    std::vector<std::string> warnings;
};

/// Trapezoid integral over possibly non-uniform abscissae.
inline double trapezoid(std::span<const double> x, std::span<const double> y) {
    double total = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) total += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return total;
}

namespace detail {

inline void finish_curve(DensityCurve& curve) {
    double peak = 0.0;
    for (double v : curve.values) peak = std::max(peak, v);
    double worst = 0.0;
    for (double& v : curve.values) {
        worst = std::min(worst, v);
        v = std::max(v, 0.0);
    }
    if (peak > 0.0 && worst < -1e-9 * peak) {
        std::ostringstream msg;
        msg << "negative density values clipped (min " << worst << ")";
        curve.warnings.push_back(msg.str());
    }
    curve.mass = trapezoid(curve.x, curve.values);
}

inline void require_k(const TransitionKernelHandle& q, int k, const char* what) {
    if (q.k() != k) {
        std::ostringstream msg;
        msg << what << ": kernel " << q.label() << " has k=" << q.k() << ", expected " << k;
        throw InvalidInput(msg.str());
    }
}

inline double guard_denominator(double d, const char* where) {
    if (!(d > kPositivityFloor)) {
        std::ostringstream msg;
        msg << where << ": transition density " << d << " is not strictly positive; the positivity assumption fails";
        throw AssumptionViolation(msg.str());
    }
    return d;
}

inline Point prepend(double head, std::span<const double> tail) {
    Point p;
    p.reserve(tail.size() + 1);
    p.push_back(head);
    p.insert(p.end(), tail.begin(), tail.end());
    return p;
}

}  // namespace detail

/// P_A(x, t) = Q1(x; t | gamma0; 0) for 0 < t <= tau.
inline DensityCurve density_first_interval(const TransitionKernelHandle& q1, double gamma0,
                                           std::span<const double> xs, double t) {
    detail::require_k(q1, 1, "density_first_interval");
    const double tau = q1.tau();
    if (!(t > 0.0 && t <= tau * (1.0 + 1e-12))) throw InvalidInput("first-interval density needs 0 < t <= tau");
    DensityCurve curve;
    curve.t = t;
    curve.x.assign(xs.begin(), xs.end());
    curve.values.resize(xs.size());
    curve.backends = {q1.label()};
    const double v[1] = {gamma0};
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double u[1] = {xs[i]};
        curve.values[i] = q1(u, std::min(t, tau), v, 0.0);
    }
    detail::finish_curve(curve);
    return curve;
}

/// P_A(x, k tau) by (k-1)-dimensional quadrature over the values at tau, ..., (k-1) tau.
inline DensityCurve density_at_multiple(const TransitionKernelHandle& qk, double gamma0, std::span<const double> xs,
                                        int k, const QuadratureGrid& quad, unsigned threads = 1) {
    if (k < 2 || k > kMaxSegments) throw InvalidInput("density_at_multiple needs 2 <= k <= 3");
    detail::require_k(qk, k, "density_at_multiple");
    if (quad.dim() != k - 1) throw InvalidInput("density_at_multiple: quadrature needs k-1 axes");
    const double tau = qk.tau();
    const auto rule = quad.rule();

    std::vector<Point> conditioning;
    conditioning.reserve(rule.nodes.size());
    for (const auto& node : rule.nodes) conditioning.push_back(detail::prepend(gamma0, node));
    qk.prefetch(conditioning, 0.0, tau);

    DensityCurve curve;
    curve.t = tau * k;
    curve.x.assign(xs.begin(), xs.end());
    curve.values.resize(xs.size());
    curve.backends = {qk.label()};
    parallel_for(xs.size(), threads, [&](std::size_t i) {
        Point u(static_cast<std::size_t>(k));
        double acc = 0.0;
        for (std::size_t p = 0; p < rule.nodes.size(); ++p) {
            std::copy(rule.nodes[p].begin(), rule.nodes[p].end(), u.begin());
            u.back() = xs[i];
            acc += rule.weights[p] * qk(u, tau, conditioning[p], 0.0);
        }
        curve.values[i] = acc;
    });
    detail::finish_curve(curve);
    return curve;
}

/// P_A(x, t) for (k-1) tau < t < k tau. The quadrature has 2(k-1) axes: the
/// first k-1 integrate the segment values at t' = t - (k-1) tau, the last k-1
/// the segment end values at tau.
inline DensityCurve density_general(const TransitionKernelHandle& qk, const TransitionKernelHandle& qk_minus_1,
                                    double gamma0, std::span<const double> xs, double t, int k,
                                    const QuadratureGrid& quad, unsigned threads = 1) {
    if (k < 2 || k > kMaxSegments) throw InvalidInput("density_general needs 2 <= k <= 3");
    detail::require_k(qk, k, "density_general");
    detail::require_k(qk_minus_1, k - 1, "density_general");
    const double tau = qk.tau();
    const double t_prime = t - (k - 1) * tau;
    if (!(t_prime > 0.0 && t_prime < tau)) throw InvalidInput("density_general needs (k-1) tau < t < k tau");
    if (quad.dim() != 2 * (k - 1)) throw InvalidInput("density_general: quadrature needs 2(k-1) axes");

    const auto x_rule = quad.rule(0, k - 1);
    const auto y_rule = quad.rule(k - 1, k - 1);

    qk_minus_1.prefetch(x_rule.nodes, t_prime, tau);
    std::vector<Point> start;
    start.reserve(y_rule.nodes.size());
    for (const auto& y : y_rule.nodes) start.push_back(detail::prepend(gamma0, y));
    qk.prefetch(start, 0.0, t_prime);

    // Bridge factor Q_{k-1}(y; tau | x; t') does not depend on the output abscissa.
    const std::size_t nx = x_rule.nodes.size();
    const std::size_t ny = y_rule.nodes.size();
    std::vector<double> bridge(nx * ny);
    parallel_for(nx, threads, [&](std::size_t a) {
        for (std::size_t b = 0; b < ny; ++b)
            bridge[a * ny + b] = x_rule.weights[a] * y_rule.weights[b] *
                                 qk_minus_1(y_rule.nodes[b], tau, x_rule.nodes[a], t_prime);
    });

    DensityCurve curve;
    curve.t = t;
    curve.x.assign(xs.begin(), xs.end());
    curve.values.resize(xs.size());
    curve.backends = {qk.label(), qk_minus_1.label()};
    parallel_for(xs.size(), threads, [&](std::size_t i) {
        Point u(static_cast<std::size_t>(k));
        double acc = 0.0;
        for (std::size_t a = 0; a < nx; ++a) {
            std::copy(x_rule.nodes[a].begin(), x_rule.nodes[a].end(), u.begin());
            u.back() = xs[i];
            for (std::size_t b = 0; b < ny; ++b) {
                const double w = bridge[a * ny + b];
                if (w == 0.0) continue;
                acc += w * qk(u, t_prime, start[b], 0.0);
            }
        }
        curve.values[i] = acc;
    });
    detail::finish_curve(curve);
    return curve;
}

/// Density at time t' of the augmented state pinned to v0 at 0 and v1 at tau.
inline double bridge_density(const TransitionKernelHandle& qk, std::span<const double> u, double t_prime,
                             std::span<const double> v0, std::span<const double> v1) {
    const double tau = qk.tau();
    if (!(t_prime > 0.0 && t_prime < tau)) throw InvalidInput("bridge density needs 0 < t' < tau");
    const double denom = detail::guard_denominator(qk(v1, tau, v0, 0.0), "bridge_density");
    return qk(v1, tau, u, t_prime) * qk(u, t_prime, v0, 0.0) / denom;
}

/// Joint density of (X(tau), ..., X(k tau)) at x.
inline double joint_density_multiples(const TransitionKernelHandle& qk, double gamma0, std::span<const double> x) {
    const auto k = static_cast<std::size_t>(qk.k());
    if (x.size() != k) throw InvalidInput("joint density needs one value per segment");
    const Point v = detail::prepend(gamma0, x.first(k - 1));
    return qk(x, qk.tau(), v, 0.0);
}

/// Density of X(k tau) = xk given X(i tau) = history_points[i-1], i < k.
inline double conditional_density_multiple(const TransitionKernelHandle& qk,
                                           const TransitionKernelHandle& qk_minus_1, double gamma0, double xk,
                                           std::span<const double> history_points) {
    const int k = qk.k();
    if (k < 2) throw InvalidInput("conditional density needs k >= 2");
    detail::require_k(qk_minus_1, k - 1, "conditional_density_multiple");
    if (history_points.size() != static_cast<std::size_t>(k - 1))
        throw InvalidInput("conditional density needs k-1 history points");
    Point x(history_points.begin(), history_points.end());
    x.push_back(xk);
    const double num = joint_density_multiples(qk, gamma0, x);
    const double den = detail::guard_denominator(joint_density_multiples(qk_minus_1, gamma0, history_points),
                                                 "conditional_density_multiple");
    return num / den;
}

/// Density of X(t) at y, (k-1) tau < t < k tau, given X(i tau) = history_points[i-1];
/// the quadrature spans the k-1 segment values at t'.
inline double conditional_density_general(const TransitionKernelHandle& qk, const TransitionKernelHandle& qk_minus_1,
                                          double gamma0, double y, double t, std::span<const double> history_points,
                                          const QuadratureGrid& quad) {
    const int k = qk.k();
    if (k < 2) throw InvalidInput("conditional density needs k >= 2");
    detail::require_k(qk_minus_1, k - 1, "conditional_density_general");
    if (history_points.size() != static_cast<std::size_t>(k - 1))
        throw InvalidInput("conditional density needs k-1 history points");
    if (quad.dim() != k - 1) throw InvalidInput("conditional_density_general: quadrature needs k-1 axes");
    const double tau = qk.tau();
    const double t_prime = t - (k - 1) * tau;
    if (!(t_prime > 0.0 && t_prime < tau)) throw InvalidInput("conditional density needs (k-1) tau < t < k tau");

    const double den = detail::guard_denominator(joint_density_multiples(qk_minus_1, gamma0, history_points),
                                                 "conditional_density_general");
    const auto rule = quad.rule();
    qk_minus_1.prefetch(rule.nodes, t_prime, tau);
    const Point start = detail::prepend(gamma0, history_points);
    const Point starts[1] = {start};
    qk.prefetch(starts, 0.0, t_prime);

    Point u(static_cast<std::size_t>(k));
    double acc = 0.0;
    for (std::size_t p = 0; p < rule.nodes.size(); ++p) {
        std::copy(rule.nodes[p].begin(), rule.nodes[p].end(), u.begin());
        u.back() = y;
        acc += rule.weights[p] * qk_minus_1(history_points, tau, rule.nodes[p], t_prime) * qk(u, t_prime, start, 0.0);
    }
    return acc / den;
}

/// Q_k from Q_{k+1} by integrating out the last coordinate over `last`. The
/// dropped conditioning entry is set to `dropped_value`; the result does not depend on it.
inline TransitionKernelHandle marginalize_last(const TransitionKernelHandle& q_next, Axis last,
                                               double dropped_value = 0.0) {
    if (q_next.k() < 2) throw InvalidInput("marginalize_last needs a kernel with k >= 2");
    if (last.n < 16) throw InvalidInput("marginalization axis needs n >= 16");
    const int k = q_next.k() - 1;
    auto inner = std::make_shared<TransitionKernelHandle>(q_next);
    return TransitionKernelHandle(
        k, q_next.tau(), q_next.backend(), "marginal(" + q_next.label() + ")",
        [inner, last, dropped_value, k](std::span<const double> u, double t, std::span<const double> v, double s) {
            Point uu(u.begin(), u.end());
            uu.push_back(0.0);
            Point vv(v.begin(), v.end());
            vv.push_back(dropped_value);
            double acc = 0.0;
            for (int i = 0; i < last.n; ++i) {
                uu[static_cast<std::size_t>(k)] = last.node(i);
                acc += trapezoid_weight(last, i) * (*inner)(uu, t, vv, s);
            }
            return acc;
        },
        [inner, dropped_value](std::span<const Point> points, double s, double t) {
            std::vector<Point> extended;
            extended.reserve(points.size());
            for (const auto& p : points) {
                Point e = p;
                e.push_back(dropped_value);
                extended.push_back(std::move(e));
            }
            inner->prefetch(extended, s, t);
        });
}

}  // namespace sdde
