#pragma once

#include "fredholm/error.hpp"
#include "fredholm/grid.hpp"
#include "fredholm/grid_function.hpp"
#include "fredholm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace fredholm {

// ---------------------------------------------------------------------------
// Kernel and free-term forms
// ---------------------------------------------------------------------------

/// K(t,s) = lambda.
struct ConstantKernel {
    double lambda = 0.0;
};

/// K(t,s) = lambda * prod_a t_a s_a.
struct SeparableKernel {
    double lambda = 0.0;
};

/// K(t,s) = lambda * exp(-|t-s|^2 / width^2).
struct GaussianKernel {
    double lambda = 0.0;
    double width = 1.0;
};

/// Values K(t_i, s_j) on grid x grid, row-major in t; multilinear off the grid.
struct TabulatedKernel {
    std::vector<double> values;
};

using KernelForm = std::variant<ConstantKernel, SeparableKernel, GaussianKernel, TabulatedKernel>;

struct OneFreeTerm {};

/// f(t) = t_1, the first coordinate.
struct IdentityFreeTerm {};

struct TabulatedFreeTerm {
    std::vector<double> values;
};

using FreeTermForm = std::variant<OneFreeTerm, IdentityFreeTerm, TabulatedFreeTerm>;

namespace detail {

inline double interpolate(const Grid& grid, std::span<const double> table, const Point& p)
{
    const auto st = grid.stencil(p);
    double v = 0.0;
    for (int c = 0; c < st.count; ++c) {
        v += st.weight[static_cast<std::size_t>(c)] * table[st.index[static_cast<std::size_t>(c)]];
    }
    return v;
}

inline double evaluate_kernel(const KernelForm& form, const Grid& grid, const Point& t, const Point& s)
{
    return std::visit(
        [&](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ConstantKernel>) {
                return k.lambda;
            } else if constexpr (std::is_same_v<K, SeparableKernel>) {
                double v = k.lambda;
                for (int a = 0; a < grid.dim(); ++a) {
                    v *= t[a] * s[a];
                }
                return v;
            } else if constexpr (std::is_same_v<K, GaussianKernel>) {
                double r2 = 0.0;
                for (int a = 0; a < grid.dim(); ++a) {
                    r2 += (t[a] - s[a]) * (t[a] - s[a]);
                }
                return k.lambda * std::exp(-r2 / (k.width * k.width));
            } else {
                const std::size_t n = grid.size();
                const auto ts = grid.stencil(t);
                const auto ss = grid.stencil(s);
                double v = 0.0;
                for (int i = 0; i < ts.count; ++i) {
                    const auto ui = static_cast<std::size_t>(i);
                    for (int j = 0; j < ss.count; ++j) {
                        const auto uj = static_cast<std::size_t>(j);
                        v += ts.weight[ui] * ss.weight[uj] * k.values[ts.index[ui] * n + ss.index[uj]];
                    }
                }
                return v;
            }
        },
        form);
}

inline double evaluate_free_term(const FreeTermForm& form, const Grid& grid, const Point& t)
{
    return std::visit(
        [&](const auto& f) -> double {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, OneFreeTerm>) {
                return 1.0;
            } else if constexpr (std::is_same_v<F, IdentityFreeTerm>) {
                return t[0];
            } else {
                return interpolate(grid, f.values, t);
            }
        },
        form);
}

/// max_t mean_s |K(t,s)| over a row-major grid matrix.
inline double row_abs_mean_max(std::span<const double> k, std::size_t n)
{
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += std::abs(k[i * n + j]);
        }
        best = std::max(best, s / static_cast<double>(n));
    }
    return best;
}

inline double row_square_mean_max(std::span<const double> k, std::size_t n)
{
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += k[i * n + j] * k[i * n + j];
        }
        best = std::max(best, s / static_cast<double>(n));
    }
    return best;
}

/// max_{t1,t2} mean_s |K(t1,s) K(t2,s)| by exhaustive search over pairs.
inline double pair_product_mean_max(std::span<const double> k, std::size_t n)
{
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < n; ++l) {
                s += std::abs(k[i * n + l] * k[j * n + l]);
            }
            best = std::max(best, s / static_cast<double>(n));
        }
    }
    return best;
}

inline constexpr std::size_t kExhaustiveBetaLimit = 1024;

} // namespace detail

class Kernel {
public:
    template <typename Form>
        requires std::is_constructible_v<KernelForm, Form>
    Kernel(Form form) : form_(std::move(form)) // NOLINT(google-explicit-constructor)
    {
    }

    [[nodiscard]] const KernelForm& form() const { return form_; }
    [[nodiscard]] double operator()(const Grid& grid, const Point& t, const Point& s) const
    {
        return detail::evaluate_kernel(form_, grid, t, s);
    }

private:
    KernelForm form_;
};

class FreeTerm {
public:
    template <typename Form>
        requires std::is_constructible_v<FreeTermForm, Form>
    FreeTerm(Form form) : form_(std::move(form)) // NOLINT(google-explicit-constructor)
    {
    }

    [[nodiscard]] const FreeTermForm& form() const { return form_; }
    [[nodiscard]] double operator()(const Grid& grid, const Point& t) const
    {
        return detail::evaluate_free_term(form_, grid, t);
    }

private:
    FreeTermForm form_;
};

// ---------------------------------------------------------------------------
// FredholmProblem
// ---------------------------------------------------------------------------

/// The equation z = f + K[z] on (T, mu), with its operator constants.
///
/// Immutable after construction and cheap to copy (shared state). Construction
/// tabulates K on grid x grid and f on the grid, then caches
///   rho     = max_t  int |K(t,s)| mu(ds)            (operator norm on C(T))
///   rho_bar = max_{t,s} |K(t,s)|
///   rho2    = max_t  int K(t,s)^2 mu(ds)            (norm of the Kronecker square)
///   beta    = max_{t1,t2} int |K(t1,s) K(t2,s)| mu(ds)
/// with every integral replaced by the equal-weight grid average. Throws
/// ContractionError when rho >= 1.
class FredholmProblem {
public:
    FredholmProblem(Domain domain, Kernel kernel, FreeTerm free_term)
    {
        auto data = std::make_shared<Data>(Data{std::move(domain), std::move(kernel), std::move(free_term)});
        const Grid& grid = data->domain.grid;
        const std::size_t n = grid.size();

        if (const auto* tab = std::get_if<TabulatedKernel>(&data->kernel.form()); tab && tab->values.size() != n * n) {
            throw InvalidProblemError("tabulated kernel needs " + std::to_string(n * n) + " values");
        }
        if (const auto* tab = std::get_if<TabulatedFreeTerm>(&data->free_term.form()); tab && tab->values.size() != n) {
            throw InvalidProblemError("tabulated free term needs " + std::to_string(n) + " values");
        }
        if (const auto* g = std::get_if<GaussianKernel>(&data->kernel.form()); g && !(g->width > 0.0)) {
            throw InvalidProblemError("gaussian kernel width must be positive");
        }

        std::vector<Point> points(n);
        for (std::size_t i = 0; i < n; ++i) {
            points[i] = grid.point(i);
        }
        data->kernel_grid.resize(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double v = data->kernel(grid, points[i], points[j]);
                if (!std::isfinite(v)) {
                    throw InvalidProblemError("kernel is not finite on the grid");
                }
                data->kernel_grid[i * n + j] = v;
                data->rho_bar = std::max(data->rho_bar, std::abs(v));
            }
        }
        std::vector<double> f(n);
        for (std::size_t i = 0; i < n; ++i) {
            f[i] = data->free_term(grid, points[i]);
        }
        data->free_grid = GridFunction(grid, std::move(f));

        data->rho = detail::row_abs_mean_max(data->kernel_grid, n);
        data->rho2 = detail::row_square_mean_max(data->kernel_grid, n);
        // Cauchy-Schwarz gives beta <= rho2 with equality on the diagonal pair, so the
        // exhaustive O(n^3) search is only run on grids where it is affordable.
        data->beta = n <= detail::kExhaustiveBetaLimit ? detail::pair_product_mean_max(data->kernel_grid, n)
                                                       : data->rho2;

        if (!(data->rho < 1.0)) {
            throw ContractionError("kernel is not a contraction: rho = " + std::to_string(data->rho) + " >= 1");
        }
        data_ = std::move(data);
    }

    [[nodiscard]] const Domain& domain() const { return data_->domain; }
    [[nodiscard]] const Grid& grid() const { return data_->domain.grid; }
    [[nodiscard]] Measure measure() const { return data_->domain.measure; }
    [[nodiscard]] const Kernel& kernel() const { return data_->kernel; }
    [[nodiscard]] const FreeTerm& free_term() const { return data_->free_term; }

    [[nodiscard]] double rho() const { return data_->rho; }
    [[nodiscard]] double rho_bar() const { return data_->rho_bar; }
    [[nodiscard]] double rho2() const { return data_->rho2; }
    [[nodiscard]] double beta() const { return data_->beta; }

    /// f restricted to the grid.
    [[nodiscard]] const GridFunction& free_term_values() const { return data_->free_grid; }

    /// K on grid x grid, row-major in t.
    [[nodiscard]] std::span<const double> kernel_matrix() const { return data_->kernel_grid; }

    /// Row K(t_i, .) of the tabulated kernel.
    [[nodiscard]] std::span<const double> kernel_row(std::size_t i) const
    {
        const std::size_t n = grid().size();
        return std::span<const double>(data_->kernel_grid).subspan(i * n, n);
    }

    [[nodiscard]] double kernel_on_grid(std::size_t i, std::size_t j) const
    {
        return data_->kernel_grid[i * grid().size() + j];
    }

    [[nodiscard]] Sample grid_sample(std::size_t i) const
    {
        return Sample{grid().point(i), static_cast<std::int64_t>(i)};
    }

    [[nodiscard]] double kernel(const Sample& t, const Sample& s) const
    {
        if (t.on_grid() && s.on_grid()) {
            return kernel_on_grid(static_cast<std::size_t>(t.grid_index), static_cast<std::size_t>(s.grid_index));
        }
        return data_->kernel(grid(), t.point, s.point);
    }

    [[nodiscard]] double free_term(const Sample& t) const
    {
        if (t.on_grid()) {
            return data_->free_grid[static_cast<std::size_t>(t.grid_index)];
        }
        return data_->free_term(grid(), t.point);
    }

    /// One mu-distributed variate.
    [[nodiscard]] Sample draw(Stream& stream) const
    {
        Sample s;
        if (measure() == Measure::Lattice) {
            const auto idx = stream.below(grid().size());
            s.grid_index = static_cast<std::int64_t>(idx);
            s.point = grid().point(idx);
        } else {
            for (int a = 0; a < grid().dim(); ++a) {
                s.point[a] = stream.uniform();
            }
        }
        return s;
    }

private:
    struct Data {
        Domain domain;
        Kernel kernel;
        FreeTerm free_term;
        std::vector<double> kernel_grid{};
        GridFunction free_grid{Grid(1, 2)};
        double rho = 0.0;
        double rho_bar = 0.0;
        double rho2 = 0.0;
        double beta = 0.0;
    };

    std::shared_ptr<const Data> data_;
};

// ---------------------------------------------------------------------------
// Operator constants and distances
// ---------------------------------------------------------------------------

/// Operator norm rho = max_t int |K(t,s)| mu(ds), grid quadrature.
inline double compute_rho(const FredholmProblem& p)
{
    const std::size_t n = p.grid().size();
    return detail::row_abs_mean_max(p.kernel_matrix(), n);
}

/// rho2 = max_t int K(t,s)^2 mu(ds).
inline double compute_rho2(const FredholmProblem& p)
{
    const std::size_t n = p.grid().size();
    return detail::row_square_mean_max(p.kernel_matrix(), n);
}

/// beta = max_{t1,t2} int |K(t1,s) K(t2,s)| mu(ds), exhaustive over grid pairs.
inline double compute_beta(const FredholmProblem& p)
{
    const std::size_t n = p.grid().size();
    return detail::pair_product_mean_max(p.kernel_matrix(), n);
}

/// Natural kernel distance d(t1,t2) = ( int [K(t1,s) - K(t2,s)]^2 mu(ds) )^{1/2}.
inline double kernel_distance(const FredholmProblem& p, std::size_t t1, std::size_t t2)
{
    const auto a = p.kernel_row(t1);
    const auto b = p.kernel_row(t2);
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

/// Least-squares fit of log d(t1,t2) = log C + alpha log |t1 - t2|.
struct HolderFit {
    double alpha = 0.0;
    double constant = 0.0;
    bool degenerate = false;  // every kernel distance vanished
    std::size_t pairs = 0;
};

/// Hoelder-exponent diagnostic of the kernel distance over all grid pairs.
/// Reported only; the estimators never rely on it.
inline HolderFit holder_diagnostic(const FredholmProblem& p)
{
    if (p.grid().points_per_axis() < 8) {
        throw InvalidProblemError("holder diagnostic needs at least 8 grid points per axis");
    }
    const std::size_t n = p.grid().size();
    const double floor = 1e-12 * std::max(p.rho_bar(), std::numeric_limits<double>::min());
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = kernel_distance(p, i, j);
            if (!(d > floor)) {
                continue;
            }
            const double x = std::log(p.grid().distance(i, j));
            const double y = std::log(d);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++m;
        }
    }
    HolderFit fit;
    fit.pairs = m;
    if (m < 2) {
        fit.degenerate = true;
        return fit;
    }
    const double mx = sx / static_cast<double>(m);
    const double my = sy / static_cast<double>(m);
    const double vxx = sxx / static_cast<double>(m) - mx * mx;
    const double vxy = sxy / static_cast<double>(m) - mx * my;
    fit.alpha = vxy / vxx;
    fit.constant = std::exp(my - fit.alpha * mx);
    return fit;
}

} // namespace fredholm
