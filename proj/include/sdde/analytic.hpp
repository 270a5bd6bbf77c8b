#pragma once

// Closed-form references: the heat kernel, the two-segment kernel and the exact
// density of the dX = X(t-1) dt + dB example, plus a mean/covariance ODE oracle
// giving the exact Gaussian kernel of any affine, additive-noise augmented system.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <sstream>

#include <Eigen/Dense>

#include "sdde/errors.hpp"
#include "sdde/model.hpp"

namespace sdde {

namespace detail {
inline void require_forward(double t, double s) {
    if (!(t > s)) {
        std::ostringstream msg;
        msg << "kernel requires t > s (got t=" << t << ", s=" << s << ")";
        throw InvalidInput(msg.str());
    }
}
}  // namespace detail

/// Heat kernel (2 pi (t-s))^{-1/2} exp(-(x-y)^2 / (2 (t-s))).
inline double heat_kernel_q1(double x, double t, double y, double s) {
    detail::require_forward(t, s);
    const double dt = t - s;
    const double z = x - y;
    return std::exp(-0.5 * z * z / dt) / std::sqrt(2.0 * std::numbers::pi * dt);
}

/// Two-segment kernel Q2(x1, x2; t | y1, y2; s) of the example, written out
/// in its expanded quadratic form.
inline double example_q2(double x1, double x2, double t, double y1, double y2, double s) {
    detail::require_forward(t, s);
    const double d = t - s;
    const double d2 = d * d;
    const double u = x1 - y1;
    const double w = x2 - y2 - y1 * d;
    const double prefactor = 1.0 / (2.0 * std::numbers::pi * d * std::sqrt((d2 + 12.0) / 12.0));
    const double form = u * u / d - 3.0 * u * w / (d2 + 3.0) + 3.0 * w * w / (d2 * d + 3.0 * d);
    return prefactor * std::exp(-(2.0 * d2 + 6.0) / (d2 + 12.0) * form);
}

/// Exact density of X(t) for the example on (0, 2]: variance t, then (t^3 + 2) / 3.
inline double exact_example_density(double x, double t) {
    if (!(t > 0.0 && t <= 2.0)) throw InvalidInput("exact example density is defined for t in (0, 2]");
    const double var = t <= 1.0 ? t : (t * t * t + 2.0) / 3.0;
    return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// Gaussian transition kernel: mean = mean_map * v + offset, covariance cov.
struct GaussianKernel {
    int k = 1;
    Eigen::MatrixXd mean_map;
    Eigen::VectorXd offset;
    Eigen::MatrixXd cov;
};

struct MomentState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double time = 0.0;
};

/// Integrates M' = A M, mu' = A mu + beta(t'), Sigma' = A Sigma + Sigma A^T + D D^T
/// from s to t with classical RK4 on `steps` equal steps.
inline GaussianKernel gaussian_kernel_via_moments(const AugmentedSystem& aug, double s, double t, int steps = 1000) {
    const SDDEModel& m = aug.model();
    if (!m.additive_noise())
        throw InvalidInput("moment oracle needs additive noise (s1 = s2 = 0); the kernel is not Gaussian otherwise");
    detail::require_forward(t, s);
    const int k = aug.k();

    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(k, k) * m.a;
    for (int i = 1; i < k; ++i) A(i, i - 1) = m.b;
    const Eigen::MatrixXd noise = Eigen::MatrixXd::Identity(k, k) * (m.s0 * m.s0);

    const auto beta = [&](double tp) {
        Eigen::VectorXd out = Eigen::VectorXd::Constant(k, m.c);
        out(0) += m.b * m.history(m.tau - tp);
        return out;
    };

    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(k, k);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(k, k);
    const double h = (t - s) / static_cast<double>(steps);

    const auto dS = [&](const Eigen::MatrixXd& X) -> Eigen::MatrixXd {
        return A * X + X * A.transpose() + noise;
    };
    for (int n = 0; n < steps; ++n) {
        const double t0 = s + h * static_cast<double>(n);
        const Eigen::VectorXd b0 = beta(t0);
        const Eigen::VectorXd bm = beta(t0 + 0.5 * h);
        const Eigen::VectorXd b1 = beta(t0 + h);

        const Eigen::MatrixXd m1 = A * M;
        const Eigen::MatrixXd m2 = A * (M + 0.5 * h * m1);
        const Eigen::MatrixXd m3 = A * (M + 0.5 * h * m2);
        const Eigen::MatrixXd m4 = A * (M + h * m3);
        M += h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4);

        const Eigen::VectorXd u1 = A * mu + b0;
        const Eigen::VectorXd u2 = A * (mu + 0.5 * h * u1) + bm;
        const Eigen::VectorXd u3 = A * (mu + 0.5 * h * u2) + bm;
        const Eigen::VectorXd u4 = A * (mu + h * u3) + b1;
        mu += h / 6.0 * (u1 + 2.0 * u2 + 2.0 * u3 + u4);

        const Eigen::MatrixXd s1 = dS(S);
        const Eigen::MatrixXd s2 = dS(S + 0.5 * h * s1);
        const Eigen::MatrixXd s3 = dS(S + 0.5 * h * s2);
        const Eigen::MatrixXd s4 = dS(S + h * s3);
        S += h / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
    }
    GaussianKernel out;
    out.k = k;
    out.mean_map = M;
    out.offset = mu;
    out.cov = 0.5 * (S + S.transpose());
    return out;
}

/// Moments of the kernel started from v.
inline MomentState propagate_moments(const GaussianKernel& kern, std::span<const double> v, double t) {
    if (v.size() != static_cast<std::size_t>(kern.k)) throw InvalidInput("conditioning vector dimension mismatch");
    const Eigen::Map<const Eigen::VectorXd> vv(v.data(), kern.k);
    return MomentState{kern.mean_map * vv + kern.offset, kern.cov, t};
}

/// Density of N(M v + mu, Sigma) at u.
inline double eval_gaussian(const GaussianKernel& kern, std::span<const double> u, std::span<const double> v) {
    const auto k = static_cast<std::size_t>(kern.k);
    if (u.size() != k || v.size() != k) throw InvalidInput("gaussian kernel dimension mismatch");
    const Eigen::Map<const Eigen::VectorXd> uu(u.data(), kern.k);
    const Eigen::Map<const Eigen::VectorXd> vv(v.data(), kern.k);
    const Eigen::LLT<Eigen::MatrixXd> llt(kern.cov);
    if (llt.info() != Eigen::Success) throw NumericFailure("gaussian kernel covariance is not positive definite");
    const Eigen::VectorXd r = uu - kern.mean_map * vv - kern.offset;
    const Eigen::VectorXd z = llt.matrixL().solve(r);
    double log_det = 0.0;
    for (int i = 0; i < kern.k; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    const double log_norm = -0.5 * (static_cast<double>(kern.k) * std::log(2.0 * std::numbers::pi) + log_det);
    return std::exp(log_norm - 0.5 * z.squaredNorm());
}

}  // namespace sdde
