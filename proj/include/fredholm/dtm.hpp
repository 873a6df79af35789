#pragma once

#include "fredholm/detail/weighted_support.hpp"
#include "fredholm/error.hpp"
#include "fredholm/estimate.hpp"
#include "fredholm/parallel.hpp"
#include "fredholm/problem.hpp"
#include "fredholm/rng.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace fredholm {

/// Dependent-trial estimate of K^d[f] on the whole grid:
///
///     x_{d,n}(t) = (1/n) sum_i K(t, xi_i1) K(xi_i1, xi_i2) ... K(xi_i,d-1, xi_id) f(xi_id)
///
/// The same n sample paths serve every grid point t. Consumes n*d draws from
/// `stream`, path by path, coordinate by coordinate, and records them in `counter`.
inline GridFunction dtm_order_estimate(const FredholmProblem& p, int d, std::int64_t n, Stream& stream,
                                       DrawCounter* counter = nullptr)
{
    if (d < 1) {
        throw BudgetError("DTM order must be at least 1");
    }
    if (n < 2) {
        throw BudgetError("DTM order estimate needs at least 2 samples");
    }
    detail::WeightedSupport support(p, n);
    std::int64_t draws = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const Sample first = p.draw(stream);
        ++draws;
        Sample prev = first;
        double w = 1.0;
        for (int r = 1; r < d; ++r) {
            const Sample next = p.draw(stream);
            ++draws;
            w *= p.kernel(prev, next);
            prev = next;
        }
        support.add(first, d == 1 ? p.free_term(prev) : w * p.free_term(prev));
    }
    if (counter) {
        counter->add(draws);
    }
    return support.transform_on_grid();
}

namespace detail {

struct DtmRun {
    GridFunction mean;
    std::vector<GridFunction> per_order;
    DrawCounter draws;
};

inline DtmRun dtm_single_run(const FredholmProblem& p, const Allocation& alloc, std::uint64_t seed,
                             std::uint64_t replicate)
{
    DtmRun run{p.free_term_values(), {}, {}};
    run.per_order.reserve(static_cast<std::size_t>(alloc.depth));
    for (int d = 1; d <= alloc.depth; ++d) {
        Stream stream(seed, StreamTag::Estimator, {replicate, static_cast<std::uint64_t>(d)});
        run.per_order.push_back(dtm_order_estimate(p, d, alloc.n(d), stream, &run.draws));
        run.mean += run.per_order.back();
    }
    return run;
}

} // namespace detail

/// z^(M) estimate f + sum_d x_{d,n(d)} with independent streams per (replicate, order).
/// Replicate r uses streams (seed, r, d); replicate 0 is the primary estimate.
inline SolutionEstimate dtm_solve(const FredholmProblem& p, const Allocation& alloc, std::uint64_t seed,
                                  std::size_t replicates = 1)
{
    alloc.validate();
    if (replicates < 1) {
        throw BudgetError("at least one replicate is required");
    }
    std::vector<detail::DtmRun> runs(replicates, detail::DtmRun{GridFunction(p.grid()), {}, {}});
    parallel_for(replicates, [&](std::size_t r) { runs[r] = detail::dtm_single_run(p, alloc, seed, r); });

    SolutionEstimate est{Estimator::Dtm, runs[0].mean, runs[0].per_order, {}, seed, alloc, {}};
    for (const auto& run : runs) {
        est.draws.add(run.draws.draws());
    }
    if (replicates >= 2) {
        est.replicates.reserve(replicates);
        for (auto& run : runs) {
            est.replicates.push_back(std::move(run.mean));
        }
    }
    return est;
}

/// Upper bound ||f||^2 sum_d rho2^d / n(d) on max_t Var z_n^(M)(t).
inline double dtm_variance_bound(const FredholmProblem& p, const Allocation& alloc)
{
    alloc.validate();
    const double f = p.free_term_values().sup_norm();
    double s = 0.0;
    for (int d = 1; d <= alloc.depth; ++d) {
        s += std::pow(p.rho2(), d) / static_cast<double>(alloc.n(d));
    }
    return f * f * s;
}

/// Minimum budget for which every n(d) can be 2.
inline std::int64_t dtm_minimum_budget(int depth)
{
    return static_cast<std::int64_t>(depth) * (depth + 1);
}

/// Continuous minimizer of sum_d rho2^d / n(d) subject to sum_d d n(d) = N, n(d) >= 2:
/// n(d) proportional to sqrt(rho2^d / d) on the orders not pinned at the floor.
inline std::vector<double> dtm_continuous_allocation(double rho2, int depth, std::int64_t budget)
{
    if (depth < 1) {
        throw BudgetError("allocation depth must be at least 1");
    }
    if (budget < dtm_minimum_budget(depth)) {
        throw BudgetError("DTM budget " + std::to_string(budget) + " is below the minimum feasible budget " +
                          std::to_string(dtm_minimum_budget(depth)) + " for depth " + std::to_string(depth));
    }
    const auto m = static_cast<std::size_t>(depth);
    std::vector<double> weight(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double d = static_cast<double>(i + 1);
        weight[i] = std::sqrt(std::pow(rho2, d) / d);
    }
    std::vector<bool> pinned(m, false);
    std::vector<double> n(m, 2.0);
    for (;;) {
        double free_budget = static_cast<double>(budget);
        double cost = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double d = static_cast<double>(i + 1);
            if (pinned[i]) {
                free_budget -= 2.0 * d;
            } else {
                cost += d * weight[i];
            }
        }
        bool changed = false;
        for (std::size_t i = 0; i < m; ++i) {
            if (pinned[i]) {
                continue;
            }
            n[i] = cost > 0.0 ? free_budget * weight[i] / cost : 0.0;
            if (n[i] < 2.0) {
                pinned[i] = true;
                n[i] = 2.0;
                changed = true;
            }
        }
        if (!changed) {
            return n;
        }
    }
}

/// Integer allocation for the DTM budget rule sum_d d n(d) <= N.
///
/// Floors the continuous optimum (minimum 2), then spends the leftover budget one
/// sample at a time on the affordable order with the largest variance-bound
/// reduction per unit cost, rho2^d / (n(d) (n(d)+1) d).
inline Allocation dtm_allocate(double rho2, int depth, std::int64_t budget)
{
    const auto continuous = dtm_continuous_allocation(rho2, depth, budget);
    Allocation a{depth, std::vector<std::int64_t>(static_cast<std::size_t>(depth)), AllocationScheme::DtmOptimal,
                 budget};
    std::int64_t spent = 0;
    for (int d = 1; d <= depth; ++d) {
        const auto c = std::max<std::int64_t>(2, static_cast<std::int64_t>(std::floor(continuous[d - 1])));
        a.counts[static_cast<std::size_t>(d - 1)] = c;
        spent += d * c;
    }
    std::int64_t left = budget - spent;
    while (left > 0) {
        int best = 0;
        double best_gain = -1.0;
        for (int d = 1; d <= depth && d <= left; ++d) {
            const auto nd = static_cast<double>(a.n(d));
            const double gain = std::pow(rho2, d) / (nd * (nd + 1.0) * d);
            if (gain > best_gain) {
                best_gain = gain;
                best = d;
            }
        }
        if (best == 0) {
            break;
        }
        if (best_gain == 0.0) {
            // Zero kernel square norm: every order is equally useless, order 1 is cheapest.
            a.counts[0] += left;
            break;
        }
        ++a.counts[static_cast<std::size_t>(best - 1)];
        left -= best;
    }
    a.validate();
    return a;
}

inline Allocation dtm_allocate(const FredholmProblem& p, int depth, std::int64_t budget)
{
    return dtm_allocate(p.rho2(), depth, budget);
}

} // namespace fredholm
