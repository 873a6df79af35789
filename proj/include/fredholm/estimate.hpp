#pragma once

#include "fredholm/error.hpp"
#include "fredholm/grid_function.hpp"

#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace fredholm {

enum class AllocationScheme { DtmOptimal, RecursiveGeometric, Manual };

inline const char* to_string(AllocationScheme s)
{
    switch (s) {
    case AllocationScheme::DtmOptimal: return "dtm-optimal";
    case AllocationScheme::RecursiveGeometric: return "geometric";
    case AllocationScheme::Manual: return "manual";
    }
    return "?";
}

/// Truncation depth M and per-order sample counts n(1..M).
struct Allocation {
    int depth = 1;
    std::vector<std::int64_t> counts;  // counts[d-1] = n(d)
    AllocationScheme scheme = AllocationScheme::Manual;
    std::int64_t budget = 0;           // requested draw budget N; 0 for manual allocations

    [[nodiscard]] std::int64_t n(int d) const { return counts.at(static_cast<std::size_t>(d - 1)); }

    /// Draws of one DTM run: sum_d d n(d).
    [[nodiscard]] std::int64_t dtm_draws() const
    {
        std::int64_t s = 0;
        for (int d = 1; d <= depth; ++d) {
            s += d * n(d);
        }
        return s;
    }

    /// Draws of one recursive run: sum_d n(d).
    [[nodiscard]] std::int64_t recursive_draws() const
    {
        return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
    }

    void validate() const
    {
        if (depth < 1) {
            throw BudgetError("allocation depth must be at least 1");
        }
        if (counts.size() != static_cast<std::size_t>(depth)) {
            throw BudgetError("allocation needs exactly one count per order");
        }
        for (auto c : counts) {
            if (c < 2) {
                throw BudgetError("every per-order sample count must be at least 2");
            }
        }
    }

    friend bool operator==(const Allocation&, const Allocation&) = default;
};

inline Allocation manual_allocation(std::vector<std::int64_t> counts)
{
    Allocation a{static_cast<int>(counts.size()), std::move(counts), AllocationScheme::Manual, 0};
    a.validate();
    return a;
}

/// The N in sqrt(N) normalizations of error fields: N/2 for geometric allocations
/// (so that N/2 = n(M)), the DTM draw count for DTM allocations, n(M) otherwise.
inline double band_scale(const Allocation& a)
{
    switch (a.scheme) {
    case AllocationScheme::RecursiveGeometric: return static_cast<double>(a.budget) / 2.0;
    case AllocationScheme::DtmOptimal: return static_cast<double>(a.dtm_draws());
    case AllocationScheme::Manual: break;
    }
    return static_cast<double>(a.n(a.depth));
}

/// Number of scalar mu-distributed variates consumed. Only ever increases.
class DrawCounter {
public:
    void add(std::int64_t draws) { draws_ += draws; }
    [[nodiscard]] std::int64_t draws() const { return draws_; }
    friend bool operator==(const DrawCounter&, const DrawCounter&) = default;

private:
    std::int64_t draws_ = 0;
};

enum class Estimator { Dtm, Recursive };

inline const char* to_string(Estimator e) { return e == Estimator::Dtm ? "dtm" : "recursive"; }

/// Output of a Monte Carlo solve.
///
/// `mean` and `per_order` belong to the primary run (replicate 0). For DTM
/// per_order[d-1] is the order-d estimate x_{d,n(d)} and mean = f + sum per_order;
/// for the recursion per_order[m-1] is the stage function x_{m,n(m)} on the grid.
/// `replicates` holds every run (primary included) when more than one was made.
struct SolutionEstimate {
    Estimator method = Estimator::Recursive;
    GridFunction mean;
    std::vector<GridFunction> per_order;
    DrawCounter draws;
    std::uint64_t seed = 0;
    Allocation allocation;
    std::vector<GridFunction> replicates;

    [[nodiscard]] std::size_t replicate_count() const { return replicates.empty() ? 1 : replicates.size(); }
};

} // namespace fredholm
