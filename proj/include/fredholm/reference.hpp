#pragma once

#include "fredholm/error.hpp"
#include "fredholm/grid_function.hpp"
#include "fredholm/problem.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fredholm {

/// K[g](t) = mean_s K(t,s) g(s) on the grid (Nystroem quadrature, equal weights).
inline GridFunction apply_operator(const FredholmProblem& p, const GridFunction& g)
{
    if (!(g.grid() == p.grid())) {
        throw DomainMismatchError("grid function does not live on the problem grid");
    }
    const std::size_t n = p.grid().size();
    GridFunction out(p.grid());
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = p.kernel_row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += row[j] * g[j];
        }
        out[i] = s / static_cast<double>(n);
    }
    return out;
}

/// Neumann terms K^d[f], d = 0..M, and their partial sum z^(M).
///
/// The same grid functions serve as z_d (terms) and x_d; the Monte Carlo
/// estimators target `truncated`.
struct NeumannExpansion {
    std::vector<GridFunction> terms;
    GridFunction truncated;
};

/// terms[d] = K^d[f] by d successive applications of the quadrature operator.
inline NeumannExpansion neumann_iterate(const FredholmProblem& p, int depth)
{
    if (depth < 0) {
        throw InvalidProblemError("Neumann depth must be non-negative");
    }
    NeumannExpansion out{{p.free_term_values()}, p.free_term_values()};
    out.terms.reserve(static_cast<std::size_t>(depth) + 1);
    for (int d = 1; d <= depth; ++d) {
        out.terms.push_back(apply_operator(p, out.terms.back()));
        out.truncated += out.terms.back();
    }
    return out;
}

/// Partial sums x_m = sum_{d<=m} K^d[f] for m = 0..depth, i.e. the fixed-point iterates.
inline std::vector<GridFunction> neumann_partial_sums(const FredholmProblem& p, int depth)
{
    const auto expansion = neumann_iterate(p, depth);
    std::vector<GridFunction> sums;
    sums.reserve(expansion.terms.size());
    GridFunction acc(p.grid());
    for (const auto& term : expansion.terms) {
        acc += term;
        sums.push_back(acc);
    }
    return sums;
}

/// A-priori truncation error bound ||f|| rho^{M+1} / (1 - rho).
inline double truncation_bound(double rho, double f_norm, int depth)
{
    return f_norm * std::pow(rho, depth + 1) / (1.0 - rho);
}

inline double truncation_bound(const FredholmProblem& p, int depth)
{
    return truncation_bound(p.rho(), p.free_term_values().sup_norm(), depth);
}

/// Smallest M >= 1 with ||f|| rho^{M+1} / (1 - rho) <= eps.
inline int choose_depth(double rho, double f_norm, double eps)
{
    if (!(eps > 0.0)) {
        throw InvalidProblemError("depth tolerance must be positive");
    }
    int m = 1;
    while (truncation_bound(rho, f_norm, m) > eps) {
        ++m;
        if (m > 10000) {
            throw DepthLimitError("no depth below 10000 reaches tolerance " + std::to_string(eps));
        }
    }
    return m;
}

inline int choose_depth(const FredholmProblem& p, double eps)
{
    return choose_depth(p.rho(), p.free_term_values().sup_norm(), eps);
}

struct ReferenceSolution {
    GridFunction solution;
    int depth = 0;
};

/// Grid fixed point to sup-norm accuracy tol, by Neumann iteration with the
/// a-priori stopping rule. Throws DepthLimitError past max_depth.
inline ReferenceSolution solve_reference(const FredholmProblem& p, double tol, int max_depth = 10000)
{
    if (!(tol > 0.0)) {
        throw InvalidProblemError("reference tolerance must be positive");
    }
    const double f_norm = p.free_term_values().sup_norm();
    GridFunction term = p.free_term_values();
    GridFunction sum = term;
    int depth = 0;
    while (truncation_bound(p.rho(), f_norm, depth) > tol) {
        if (depth >= max_depth) {
            throw DepthLimitError("reference iteration exceeded depth " + std::to_string(max_depth) +
                                  "; rho = " + std::to_string(p.rho()) + " is too close to 1 for tol " +
                                  std::to_string(tol));
        }
        term = apply_operator(p, term);
        sum += term;
        ++depth;
    }
    return {std::move(sum), depth};
}

} // namespace fredholm
