#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sdde/errors.hpp"

namespace sdde {

/// Uniform axis with n nodes from min to max inclusive.
struct Axis {
    double min = -1.0;
    double max = 1.0;
    int n = 8;

    [[nodiscard]] double spacing() const noexcept { return (max - min) / static_cast<double>(n - 1); }
    [[nodiscard]] double node(int i) const noexcept {
        // Pin the last node so coordinates match max exactly.
        return i == n - 1 ? max : min + spacing() * static_cast<double>(i);
    }
    [[nodiscard]] bool contains(double x) const noexcept { return x >= min && x <= max; }
    [[nodiscard]] bool strictly_inside(double x) const noexcept { return x > min && x < max; }
};

inline constexpr int kMaxSolveDim = 3;

/// Tensor grid, row-major with the last axis fastest.
class Grid {
public:
    Grid() = default;
    explicit Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
        if (axes_.empty()) throw InvalidInput("grid needs at least one axis");
        for (const auto& a : axes_) {
            if (!(a.min < a.max) || !std::isfinite(a.min) || !std::isfinite(a.max))
                throw InvalidInput("grid axis needs finite min < max");
            if (a.n < 8) throw InvalidInput("grid axis needs n >= 8");
        }
        strides_.assign(axes_.size(), 1);
        for (std::size_t d = axes_.size() - 1; d > 0; --d)
            strides_[d - 1] = strides_[d] * static_cast<std::size_t>(axes_[d].n);
        size_ = strides_[0] * static_cast<std::size_t>(axes_[0].n);
    }

    /// Same axis repeated `dim` times.
    static Grid uniform(int dim, Axis axis) { return Grid(std::vector<Axis>(static_cast<std::size_t>(dim), axis)); }

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(axes_.size()); }
    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] const Axis& axis(int d) const { return axes_[static_cast<std::size_t>(d)]; }
    [[nodiscard]] const std::vector<Axis>& axes() const noexcept { return axes_; }
    [[nodiscard]] std::size_t stride(int d) const { return strides_[static_cast<std::size_t>(d)]; }

    /// Multi-index of a flat index.
    [[nodiscard]] std::array<int, kMaxSolveDim + 1> unflatten(std::size_t flat) const {
        std::array<int, kMaxSolveDim + 1> idx{};
        for (int d = 0; d < dim(); ++d) {
            idx[static_cast<std::size_t>(d)] = static_cast<int>(flat / stride(d));
            flat %= stride(d);
        }
        return idx;
    }

    [[nodiscard]] bool strictly_inside(std::span<const double> p) const {
        if (p.size() != axes_.size()) return false;
        for (std::size_t d = 0; d < axes_.size(); ++d)
            if (!axes_[d].strictly_inside(p[d])) return false;
        return true;
    }

    [[nodiscard]] double cell_volume() const noexcept {
        double v = 1.0;
        for (const auto& a : axes_) v *= a.spacing();
        return v;
    }

private:
    std::vector<Axis> axes_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

/// Composite trapezoid weight of node i on an axis.
inline double trapezoid_weight(const Axis& a, int i) noexcept {
    const double h = a.spacing();
    return (i == 0 || i == a.n - 1) ? 0.5 * h : h;
}

/// A density sampled on grid nodes at one time.
struct DensityField {
    Grid grid;
    std::vector<double> values;
    double time = 0.0;
    /// Smallest min/max ratio seen while producing this field (positivity monitor).
    double worst_negative_ratio = 0.0;
    std::vector<std::string> warnings;

    [[nodiscard]] double max_value() const {
        return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
    }
    [[nodiscard]] double min_value() const {
        return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
    }
};

/// Tensor trapezoid integral of the field values.
inline double mass(const DensityField& field) {
    const Grid& g = field.grid;
    // Accumulate in flat index order so the result is independent of scheduling.
    double total = 0.0;
    for (std::size_t flat = 0; flat < g.size(); ++flat) {
        const auto idx = g.unflatten(flat);
        double w = 1.0;
        for (int d = 0; d < g.dim(); ++d) w *= trapezoid_weight(g.axis(d), idx[static_cast<std::size_t>(d)]);
        total += w * field.values[flat];
    }
    return total;
}

/// Multilinear interpolation; zero outside the grid.
inline double interpolate(const DensityField& field, std::span<const double> point) {
    const Grid& g = field.grid;
    if (point.size() != static_cast<std::size_t>(g.dim()))
        throw InvalidInput("interpolation point dimension does not match grid");
    std::array<int, kMaxSolveDim + 1> base{};
    std::array<double, kMaxSolveDim + 1> frac{};
    const int dim = g.dim();
    if (dim > kMaxSolveDim + 1) throw InvalidInput("interpolation supports at most 4 axes");
    for (int d = 0; d < dim; ++d) {
        const Axis& a = g.axis(d);
        const double x = point[static_cast<std::size_t>(d)];
        if (!a.contains(x)) return 0.0;
        double pos = (x - a.min) / a.spacing();
        if (const double r = std::round(pos); std::abs(pos - r) < 1e-10) pos = r;  // exact on nodes
        int i = static_cast<int>(std::floor(pos));
        i = std::clamp(i, 0, a.n - 2);
        base[static_cast<std::size_t>(d)] = i;
        frac[static_cast<std::size_t>(d)] = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
    }
    double acc = 0.0;
    const unsigned corners = 1u << static_cast<unsigned>(dim);
    for (unsigned corner = 0; corner < corners; ++corner) {
        double w = 1.0;
        std::size_t flat = 0;
        for (int d = 0; d < dim; ++d) {
            const bool up = (corner >> static_cast<unsigned>(d)) & 1u;
            const double f = frac[static_cast<std::size_t>(d)];
            w *= up ? f : 1.0 - f;
            flat += static_cast<std::size_t>(base[static_cast<std::size_t>(d)] + (up ? 1 : 0)) * g.stride(d);
        }
        if (w != 0.0) acc += w * field.values[flat];
    }
    return acc;
}

}  // namespace sdde
