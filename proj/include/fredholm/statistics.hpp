#pragma once

#include "fredholm/error.hpp"
#include "fredholm/grid_function.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace fredholm {

/// Pointwise mean of a family of grid functions.
inline GridFunction pointwise_mean(std::span<const GridFunction> fs)
{
    if (fs.empty()) {
        throw Error("pointwise_mean of an empty family");
    }
    GridFunction m(fs.front().grid());
    for (const auto& f : fs) {
        m += f;
    }
    m *= 1.0 / static_cast<double>(fs.size());
    return m;
}

/// Pointwise unbiased sample variance (divisor R - 1).
inline GridFunction pointwise_variance(std::span<const GridFunction> fs)
{
    if (fs.size() < 2) {
        throw Error("pointwise_variance needs at least two functions");
    }
    const GridFunction m = pointwise_mean(fs);
    GridFunction v(m.grid());
    for (const auto& f : fs) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double d = f[i] - m[i];
            v[i] += d * d;
        }
    }
    v *= 1.0 / static_cast<double>(fs.size() - 1);
    return v;
}

/// Root mean square over the family of the sup-norm distance to `target`.
inline double sup_rmse(std::span<const GridFunction> fs, const GridFunction& target)
{
    double s = 0.0;
    for (const auto& f : fs) {
        const double e = sup_distance(f, target);
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(fs.size()));
}

/// Least-squares slope of y against x.
inline double fit_slope(std::span<const double> x, std::span<const double> y)
{
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxy / sxx;
}

/// Slope of log y against log x.
inline double fit_loglog_slope(std::span<const double> x, std::span<const double> y)
{
    std::vector<double> lx(x.size());
    std::vector<double> ly(y.size());
    std::transform(x.begin(), x.end(), lx.begin(), [](double v) { return std::log(v); });
    std::transform(y.begin(), y.end(), ly.begin(), [](double v) { return std::log(v); });
    return fit_slope(lx, ly);
}

} // namespace fredholm
