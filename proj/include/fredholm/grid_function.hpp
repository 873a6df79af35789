#pragma once

#include "fredholm/error.hpp"
#include "fredholm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace fredholm {

/// Values of a real function on the evaluation grid.
///
/// Carrier of the reference solution, the Neumann terms K^d[f], Monte Carlo
/// estimates and band envelopes.
class GridFunction {
public:
    explicit GridFunction(Grid grid, double fill = 0.0) : grid_(grid), values_(grid.size(), fill) {}

    GridFunction(Grid grid, std::vector<double> values) : grid_(grid), values_(std::move(values))
    {
        if (values_.size() != grid_.size()) {
            throw DomainMismatchError("grid function length does not match its grid");
        }
        for (double v : values_) {
            if (!std::isfinite(v)) {
                throw InvalidProblemError("grid function values must be finite");
            }
        }
    }

    [[nodiscard]] const Grid& grid() const { return grid_; }
    [[nodiscard]] std::size_t size() const { return values_.size(); }
    [[nodiscard]] std::span<const double> values() const { return values_; }
    [[nodiscard]] std::span<double> values() { return values_; }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    /// max_t |g(t)| over the grid.
    [[nodiscard]] double sup_norm() const
    {
        double m = 0.0;
        for (double v : values_) {
            m = std::max(m, std::abs(v));
        }
        return m;
    }

    GridFunction& operator+=(const GridFunction& other)
    {
        require_same_grid(other);
        for (std::size_t i = 0; i < values_.size(); ++i) {
            values_[i] += other.values_[i];
        }
        return *this;
    }

    GridFunction& operator-=(const GridFunction& other)
    {
        require_same_grid(other);
        for (std::size_t i = 0; i < values_.size(); ++i) {
            values_[i] -= other.values_[i];
        }
        return *this;
    }

    GridFunction& operator*=(double a)
    {
        for (double& v : values_) {
            v *= a;
        }
        return *this;
    }

    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(double s, GridFunction a) { return a *= s; }

    friend bool operator==(const GridFunction&, const GridFunction&) = default;

    void require_same_grid(const GridFunction& other) const
    {
        if (!(grid_ == other.grid_)) {
            throw DomainMismatchError("grid functions live on different grids");
        }
    }

private:
    Grid grid_;
    std::vector<double> values_;
};

/// max_t |a(t) - b(t)|.
inline double sup_distance(const GridFunction& a, const GridFunction& b)
{
    a.require_same_grid(b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

} // namespace fredholm
