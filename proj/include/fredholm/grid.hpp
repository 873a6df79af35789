#pragma once

#include "fredholm/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

namespace fredholm {

inline constexpr int kMaxDim = 3;
inline constexpr std::size_t kMaxGridSize = 4096;

/// A point of the unit cube [0,1]^dim; unused trailing axes are zero.
struct Point {
    std::array<double, kMaxDim> x{};

    double operator[](int axis) const { return x[static_cast<std::size_t>(axis)]; }
    double& operator[](int axis) { return x[static_cast<std::size_t>(axis)]; }
};

/// Regular lattice of G^dim points over [0,1]^dim, boundary points included.
/// Index layout: axis 0 varies fastest.
class Grid {
public:
    Grid(int dim, int points_per_axis) : dim_(dim), points_per_axis_(points_per_axis)
    {
        if (dim < 1 || dim > kMaxDim) {
            throw InvalidProblemError("grid dimension must be in [1, " + std::to_string(kMaxDim) + "]");
        }
        if (points_per_axis < 2) {
            throw InvalidProblemError("grid needs at least 2 points per axis");
        }
        size_ = 1;
        for (int a = 0; a < dim; ++a) {
            size_ *= static_cast<std::size_t>(points_per_axis);
            if (size_ > kMaxGridSize) {
                throw InvalidProblemError("grid has more than " + std::to_string(kMaxGridSize) + " points");
            }
        }
    }

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] int points_per_axis() const { return points_per_axis_; }
    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] double spacing() const { return 1.0 / (points_per_axis_ - 1); }

    [[nodiscard]] double coordinate(std::size_t index, int axis) const
    {
        for (int a = 0; a < axis; ++a) {
            index /= static_cast<std::size_t>(points_per_axis_);
        }
        return static_cast<double>(index % static_cast<std::size_t>(points_per_axis_)) * spacing();
    }

    [[nodiscard]] Point point(std::size_t index) const
    {
        Point p;
        const auto g = static_cast<std::size_t>(points_per_axis_);
        for (int a = 0; a < dim_; ++a) {
            p[a] = static_cast<double>(index % g) * spacing();
            index /= g;
        }
        return p;
    }

    /// Euclidean distance between two grid points.
    [[nodiscard]] double distance(std::size_t i, std::size_t j) const
    {
        const Point p = point(i);
        const Point q = point(j);
        double s = 0.0;
        for (int a = 0; a < dim_; ++a) {
            s += (p[a] - q[a]) * (p[a] - q[a]);
        }
        return std::sqrt(s);
    }

    /// Multilinear interpolation stencil of an arbitrary point of the cube.
    struct Stencil {
        std::array<std::size_t, (1u << kMaxDim)> index{};
        std::array<double, (1u << kMaxDim)> weight{};
        int count = 0;
    };

    [[nodiscard]] Stencil stencil(const Point& p) const
    {
        std::array<std::size_t, kMaxDim> lo{};
        std::array<double, kMaxDim> frac{};
        const int last = points_per_axis_ - 1;
        for (int a = 0; a < dim_; ++a) {
            const double u = std::clamp(p[a], 0.0, 1.0) * last;
            int cell = static_cast<int>(std::floor(u));
            cell = std::min(cell, last - 1);
            lo[static_cast<std::size_t>(a)] = static_cast<std::size_t>(cell);
            frac[static_cast<std::size_t>(a)] = u - cell;
        }
        Stencil s;
        s.count = 1 << dim_;
        for (int corner = 0; corner < s.count; ++corner) {
            std::size_t index = 0;
            std::size_t stride = 1;
            double w = 1.0;
            for (int a = 0; a < dim_; ++a) {
                const bool up = (corner >> a) & 1;
                const auto ua = static_cast<std::size_t>(a);
                index += (lo[ua] + (up ? 1 : 0)) * stride;
                w *= up ? frac[ua] : 1.0 - frac[ua];
                stride *= static_cast<std::size_t>(points_per_axis_);
            }
            s.index[static_cast<std::size_t>(corner)] = index;
            s.weight[static_cast<std::size_t>(corner)] = w;
        }
        return s;
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int dim_;
    int points_per_axis_;
    std::size_t size_ = 1;
};

/// The probability measure mu on T. Both are uniform: Uniform is Lebesgue measure on
/// the cube, Lattice is the equal-weight measure on the grid points themselves.
enum class Measure { Uniform, Lattice };

inline const char* to_string(Measure m)
{
    return m == Measure::Uniform ? "uniform" : "lattice";
}

/// The compact space T with its probability measure and evaluation grid.
struct Domain {
    Grid grid;
    Measure measure = Measure::Uniform;

    Domain(int dim, int points_per_axis, Measure m = Measure::Uniform)
        : grid(dim, points_per_axis), measure(m)
    {
    }

    friend bool operator==(const Domain&, const Domain&) = default;
};

/// A mu-distributed variate. On the lattice measure grid_index locates it on the grid;
/// for the continuous measure grid_index is -1.
struct Sample {
    Point point;
    std::int64_t grid_index = -1;

    [[nodiscard]] bool on_grid() const { return grid_index >= 0; }
};

} // namespace fredholm
