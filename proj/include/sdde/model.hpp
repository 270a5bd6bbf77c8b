#pragma once

// Scalar delay equation
//   dX(t) = f(X(t), X(t - tau)) dt + g(X(t), X(t - tau)) dB(t),   X(t) = gamma(-t) on [-tau, 0]
// with affine f, g and polynomial history, plus the k-segment delay-free system
// obtained by the method of steps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdde/errors.hpp"

namespace sdde {

/// Polynomial history gamma(s) = sum_j coeffs[j] s^j on s in [0, tau].
struct HistoryFunction {
    std::vector<double> coeffs{0.0};

    /// Horner evaluation without a range check.
    [[nodiscard]] double operator()(double s) const noexcept {
        double acc = 0.0;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * s + *it;
        return acc;
    }

    [[nodiscard]] double gamma0() const noexcept { return coeffs.empty() ? 0.0 : coeffs.front(); }
};

/// gamma(s) for s in [0, tau]; a relative slack of 1e-12 absorbs rounding on the endpoints.
inline double history_eval(const HistoryFunction& h, double s, double tau) {
    const double slack = 1e-12 * std::max(1.0, tau);
    if (!(s >= -slack && s <= tau + slack)) {
        std::ostringstream msg;
        msg << "history argument s=" << s << " outside [0, " << tau << "]";
        throw InvalidInput(msg.str());
    }
    return h(std::clamp(s, 0.0, tau));
}

struct SDDEModel {
    double a = 0.0;   // coefficient of X(t) in the drift
    double b = 0.0;   // coefficient of X(t - tau) in the drift
    double c = 0.0;   // constant drift
    double s0 = 1.0;  // diffusion g(x, y) = s0 + s1 x + s2 y
    double s1 = 0.0;
    double s2 = 0.0;
    double tau = 1.0;
    HistoryFunction history{};

    [[nodiscard]] double drift(double x, double delayed) const noexcept { return a * x + b * delayed + c; }
    [[nodiscard]] double diffusion(double x, double delayed) const noexcept {
        return s0 + s1 * x + s2 * delayed;
    }
    [[nodiscard]] double gamma(double s) const { return history_eval(history, s, tau); }
    [[nodiscard]] double gamma0() const noexcept { return history.gamma0(); }

    /// Noise is additive when g does not depend on the state.
    [[nodiscard]] bool additive_noise() const noexcept { return s1 == 0.0 && s2 == 0.0; }

    /// Throws InvalidInput unless tau > 0 and every coefficient is finite.
    void check() const {
        const double fields[] = {a, b, c, s0, s1, s2, tau};
        for (double v : fields)
            if (!std::isfinite(v)) throw InvalidInput("model coefficients must be finite");
        if (!(tau > 0.0)) throw InvalidInput("model delay tau must be > 0");
        if (history.coeffs.empty()) throw InvalidInput("history needs at least one coefficient");
        for (double v : history.coeffs)
            if (!std::isfinite(v)) throw InvalidInput("history coefficients must be finite");
    }
};

/// The dX(t) = X(t-1) dt + dB(t), X = 0 on [-1, 0] example with a closed-form density.
inline SDDEModel reference_example_model() {
    SDDEModel m;
    m.a = 0.0;
    m.b = 1.0;
    m.c = 0.0;
    m.s0 = 1.0;
    m.s1 = 0.0;
    m.s2 = 0.0;
    m.tau = 1.0;
    m.history.coeffs = {0.0};
    return m;
}

inline bool is_reference_example(const SDDEModel& m) {
    const bool zero_history =
        std::all_of(m.history.coeffs.begin(), m.history.coeffs.end(), [](double c) { return c == 0.0; });
    return m.a == 0.0 && m.b == 1.0 && m.c == 0.0 && m.s0 == 1.0 && m.s1 == 0.0 && m.s2 == 0.0 &&
           m.tau == 1.0 && zero_history;
}

/// k coupled delay-free segments on t' in [0, tau]. Segment 1 sees the history
/// gamma(tau - t') as its delayed argument, segment i >= 2 sees segment i-1.
/// Noise channels are independent, so the diffusion matrix is diagonal.
class AugmentedSystem {
public:
    AugmentedSystem(SDDEModel model, int k) : model_(std::move(model)), k_(k) {
        if (k < 1) throw InvalidInput("augmented system needs k >= 1");
        model_.check();
    }

    [[nodiscard]] int k() const noexcept { return k_; }
    [[nodiscard]] const SDDEModel& model() const noexcept { return model_; }
    [[nodiscard]] double tau() const noexcept { return model_.tau; }

    /// Argument in the delayed slot of component i (0-based).
    [[nodiscard]] double delayed_input(int i, std::span<const double> state, double t_prime) const {
        return i == 0 ? model_.gamma(model_.tau - t_prime) : state[static_cast<std::size_t>(i - 1)];
    }

    [[nodiscard]] double drift_component(int i, std::span<const double> state, double t_prime) const {
        return model_.drift(state[static_cast<std::size_t>(i)], delayed_input(i, state, t_prime));
    }

    [[nodiscard]] double diffusion_component(int i, std::span<const double> state, double t_prime) const {
        return model_.diffusion(state[static_cast<std::size_t>(i)], delayed_input(i, state, t_prime));
    }

    void check_state(std::span<const double> state) const {
        if (state.size() != static_cast<std::size_t>(k_)) {
            std::ostringstream msg;
            msg << "state has length " << state.size() << ", augmented system has k=" << k_;
            throw InvalidInput(msg.str());
        }
    }

private:
    SDDEModel model_;
    int k_;
};

inline AugmentedSystem build_augmented(const SDDEModel& model, int k) { return AugmentedSystem(model, k); }

inline std::vector<double> eval_drift(const AugmentedSystem& aug, std::span<const double> state, double t_prime) {
    aug.check_state(state);
    std::vector<double> out(state.size());
    for (int i = 0; i < aug.k(); ++i) out[static_cast<std::size_t>(i)] = aug.drift_component(i, state, t_prime);
    return out;
}

/// Diagonal entries G_i of the diffusion matrix.
inline std::vector<double> eval_diffusion(const AugmentedSystem& aug, std::span<const double> state,
                                          double t_prime) {
    aug.check_state(state);
    std::vector<double> out(state.size());
    for (int i = 0; i < aug.k(); ++i)
        out[static_cast<std::size_t>(i)] = aug.diffusion_component(i, state, t_prime);
    return out;
}

/// Axis-aligned rectangle for the (x, y) arguments of g.
struct Rect {
    double x_min, x_max, y_min, y_max;
};

struct ValidationReport {
    double min_diffusion = 0.0;
    bool ellipticity_ok = false;
    bool history_continuous = true;  // polynomials are smooth
    std::string message;
};

/// Minimum of the affine g over the rectangle, attained at a corner.
inline ValidationReport validate(const SDDEModel& model, const Rect& domain) {
    ValidationReport report;
    const double corners[4][2] = {{domain.x_min, domain.y_min},
                                  {domain.x_min, domain.y_max},
                                  {domain.x_max, domain.y_min},
                                  {domain.x_max, domain.y_max}};
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& p : corners) lo = std::min(lo, model.diffusion(p[0], p[1]));
    report.min_diffusion = lo;
    report.ellipticity_ok = lo > 0.0;
    std::ostringstream msg;
    if (report.ellipticity_ok) {
        msg << "min g = " << lo << " > 0";
    } else {
        msg << "ellipticity violated: min g = " << lo << " <= 0 on [" << domain.x_min << ", " << domain.x_max
            << "] x [" << domain.y_min << ", " << domain.y_max << "]";
    }
    report.message = msg.str();
    return report;
}

/// Range of gamma on [0, tau], by dense sampling plus the endpoints.
inline std::pair<double, double> history_range(const SDDEModel& model, int samples = 2049) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int j = 0; j < samples; ++j) {
        const double s = model.tau * static_cast<double>(j) / static_cast<double>(samples - 1);
        const double v = model.history(s);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

/// Rectangle covering every (x, y) pair that g is evaluated at when the
/// augmented state lives in the box given by per-axis [lo, hi].
inline Rect diffusion_domain(const SDDEModel& model, std::span<const std::pair<double, double>> axes) {
    Rect r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
           std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    const auto [g_lo, g_hi] = history_range(model);
    for (std::size_t i = 0; i < axes.size(); ++i) {
        r.x_min = std::min(r.x_min, axes[i].first);
        r.x_max = std::max(r.x_max, axes[i].second);
        const double y_lo = i == 0 ? g_lo : axes[i - 1].first;
        const double y_hi = i == 0 ? g_hi : axes[i - 1].second;
        r.y_min = std::min(r.y_min, y_lo);
        r.y_max = std::max(r.y_max, y_hi);
    }
    return r;
}

inline void require_valid(const ValidationReport& report) {
    if (!report.ellipticity_ok) throw AssumptionViolation(report.message);
}

}  // namespace sdde
