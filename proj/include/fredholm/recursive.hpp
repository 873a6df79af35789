#pragma once

#include "fredholm/detail/weighted_support.hpp"
#include "fredholm/error.hpp"
#include "fredholm/estimate.hpp"
#include "fredholm/parallel.hpp"
#include "fredholm/problem.hpp"
#include "fredholm/reference.hpp"
#include "fredholm/rng.hpp"
#include "fredholm/statistics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace fredholm {

/// One stage x_{m,n(m)} of the functional recursion
///
///     x_0 = f,   x_{m+1}(t) = f(t) + (1/n(m+1)) sum_l K(t, xi_l) x_m(xi_l),
///
/// with a fresh family {xi_l} of n(m+1) draws per stage. A stage keeps its own
/// draws and the previous stage's values at them, so it can be evaluated exactly at
/// any point of T. Values on the grid are memoized; under the lattice measure every
/// draw is a grid point and evaluation is a lookup.
class RecursiveStage {
public:
    /// x_0 = f.
    static RecursiveStage initial(const FredholmProblem& p)
    {
        return RecursiveStage(p, nullptr, p.free_term_values(), 0);
    }

    /// x_{m+1} from this stage, consuming n draws of `stream` (recorded in `counter`).
    [[nodiscard]] RecursiveStage next(std::int64_t n, Stream& stream, DrawCounter* counter = nullptr) const
    {
        if (n < 2) {
            throw BudgetError("each recursion stage needs at least 2 samples");
        }
        auto support = std::make_shared<detail::WeightedSupport>(*problem_, n);
        std::int64_t draws = 0;
        for (std::int64_t l = 0; l < n; ++l) {
            const Sample xi = problem_->draw(stream);
            ++draws;
            support->add(xi, (*this)(xi));
        }
        if (counter) {
            counter->add(draws);
        }
        GridFunction values = problem_->free_term_values();
        values += support->transform_on_grid();
        return RecursiveStage(*problem_, std::move(support), std::move(values), index_ + 1);
    }

    /// x_m(t) at an arbitrary point.
    double operator()(const Sample& t) const
    {
        if (t.on_grid()) {
            return on_grid_[static_cast<std::size_t>(t.grid_index)];
        }
        if (!support_) {
            return problem_->free_term(t);
        }
        return problem_->free_term(t) + support_->transform(t);
    }

    [[nodiscard]] const GridFunction& on_grid() const { return on_grid_; }
    [[nodiscard]] int index() const { return index_; }

private:
    RecursiveStage(const FredholmProblem& p, std::shared_ptr<const detail::WeightedSupport> support,
                   GridFunction on_grid, int index)
        : problem_(&p), support_(std::move(support)), on_grid_(std::move(on_grid)), index_(index)
    {
    }

    const FredholmProblem* problem_;
    std::shared_ptr<const detail::WeightedSupport> support_;
    GridFunction on_grid_;
    int index_;
};

namespace detail {

struct RecursiveRun {
    std::vector<GridFunction> stages;
    DrawCounter draws;
};

inline RecursiveRun recursive_single_run(const FredholmProblem& p, const Allocation& alloc, std::uint64_t seed,
                                         std::uint64_t replicate)
{
    RecursiveRun run;
    run.stages.reserve(static_cast<std::size_t>(alloc.depth));
    RecursiveStage stage = RecursiveStage::initial(p);
    for (int m = 1; m <= alloc.depth; ++m) {
        // Counted from the final stage, so runs of different depth share their last stages' draws.
        const auto from_top = static_cast<std::uint64_t>(alloc.depth - m + 1);
        Stream stream(seed, StreamTag::Estimator, {replicate, from_top});
        stage = stage.next(alloc.n(m), stream, &run.draws);
        run.stages.push_back(stage.on_grid());
    }
    return run;
}

} // namespace detail

/// Recursive Monte Carlo estimate x_{M,n(M)} of z^(M) on the grid.
/// Stage m of replicate r draws from stream (seed, r, M - m + 1); replicate 0 is primary.
inline SolutionEstimate recursive_solve(const FredholmProblem& p, const Allocation& alloc, std::uint64_t seed,
                                        std::size_t replicates = 1)
{
    alloc.validate();
    if (replicates < 1) {
        throw BudgetError("at least one replicate is required");
    }
    std::vector<detail::RecursiveRun> runs(replicates);
    parallel_for(replicates, [&](std::size_t r) { runs[r] = detail::recursive_single_run(p, alloc, seed, r); });

    SolutionEstimate est{Estimator::Recursive, runs[0].stages.back(), runs[0].stages, {}, seed, alloc, {}};
    for (const auto& run : runs) {
        est.draws.add(run.draws.draws());
    }
    if (replicates >= 2) {
        est.replicates.reserve(replicates);
        for (auto& run : runs) {
            est.replicates.push_back(std::move(run.stages.back()));
        }
    }
    return est;
}

/// Smallest budget accepted by geometric_allocate: N >= 4 * 2^(M+1).
inline std::int64_t geometric_minimum_budget(int depth)
{
    return std::int64_t{4} << (depth + 1);
}

/// Halving allocation n(M-k) = max(2, floor(N / 2^(k+1))), k = 0..M-1.
inline Allocation geometric_allocate(int depth, std::int64_t budget)
{
    if (depth < 1) {
        throw BudgetError("allocation depth must be at least 1");
    }
    if (depth > 60 || budget < geometric_minimum_budget(depth)) {
        throw BudgetError("budget " + std::to_string(budget) + " violates N >> 2^(M+1) (required N >= 4*2^(M+1) = " +
                          (depth > 60 ? std::string("overflow") : std::to_string(geometric_minimum_budget(depth))) +
                          " for M = " + std::to_string(depth) + ")");
    }
    Allocation a{depth, std::vector<std::int64_t>(static_cast<std::size_t>(depth)),
                 AllocationScheme::RecursiveGeometric, budget};
    for (int k = 0; k < depth; ++k) {
        a.counts[static_cast<std::size_t>(depth - 1 - k)] = std::max<std::int64_t>(2, budget >> (k + 1));
    }
    return a;
}

/// Scales of the uncorrelated error fields of x_{M,n(M)}:
///   sigma_terms[k] = sigma(M, M-1, ..., M-k) = 1 / sqrt(n(M) n(M-1) ... n(M-k)),
/// and bound = constant_slot * sum_k sigma_terms[k]^2, the variance majorant.
/// The fields tau_{M,...} themselves are not materialized; their covariances come
/// from covariance_recursion.
struct VarianceDecomposition {
    std::vector<double> sigma_terms;
    double bound = 0.0;
    double constant_slot = 1.0;
};

inline VarianceDecomposition recursive_variance_bound(const Allocation& alloc, double constant = 1.0)
{
    alloc.validate();
    if (!(constant > 0.0)) {
        throw Error("variance constant must be positive");
    }
    VarianceDecomposition v;
    v.constant_slot = constant;
    double product = 1.0;
    double sum = 0.0;
    for (int k = 0; k < alloc.depth; ++k) {
        product *= static_cast<double>(alloc.n(alloc.depth - k));
        v.sigma_terms.push_back(1.0 / std::sqrt(product));
        sum += 1.0 / product;
    }
    v.bound = constant * sum;
    return v;
}

inline VarianceDecomposition recursive_variance_bound(const FredholmProblem& /*p*/, const Allocation& alloc,
                                                      double constant = 1.0)
{
    return recursive_variance_bound(alloc, constant);
}

/// Pilot estimate of the constant in the variance majorant: max_t of the empirical
/// variance of x_{M,n(M)}(t) over `replicates` runs, divided by sum_k sigma_terms[k]^2.
inline double fit_variance_constant(const FredholmProblem& p, const Allocation& alloc, std::size_t replicates,
                                    std::uint64_t seed)
{
    if (replicates < 2) {
        throw Error("variance constant calibration needs at least two replicates");
    }
    const auto est = recursive_solve(p, alloc, seed, replicates);
    const double var = pointwise_variance(est.replicates).sup_norm();
    return var / recursive_variance_bound(alloc).bound;
}

/// Theoretical covariance surfaces on grid x grid.
///
/// base[m] = R_{m+1}(t1,t2) = int K(t1,s)K(t2,s) x_m(s)^2 - int K(t1,s)x_m(s) int K(t2,s)x_m(s),
/// m = 0..M-1, with x_m the fixed-point iterates. chain[k] = V_K^k [R_{M-k}] with
/// V_K[R](t1,t2) = int K(t1,s) K(t2,s) R(s,s): chain[0] = R_M, chain[1] = R_{M,M-1}, ...,
/// chain[M-1] = R_{M,...,1}. All integrals are grid averages.
struct CovarianceFamilies {
    std::vector<Eigen::MatrixXd> base;
    std::vector<Eigen::MatrixXd> chain;
};

inline Eigen::MatrixXd kernel_matrix_eigen(const FredholmProblem& p)
{
    const auto n = static_cast<Eigen::Index>(p.grid().size());
    Eigen::MatrixXd k(n, n);
    const auto data = p.kernel_matrix();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            k(i, j) = data[static_cast<std::size_t>(i * n + j)];
        }
    }
    return k;
}

/// V_K[R] on the grid.
inline Eigen::MatrixXd apply_vk(const Eigen::MatrixXd& kernel, const Eigen::MatrixXd& r)
{
    const double n = static_cast<double>(kernel.rows());
    return kernel * r.diagonal().asDiagonal() * kernel.transpose() / n;
}

inline CovarianceFamilies covariance_recursion(const FredholmProblem& p, int depth)
{
    if (depth < 1) {
        throw Error("covariance recursion depth must be at least 1");
    }
    const Eigen::MatrixXd k = kernel_matrix_eigen(p);
    const double n = static_cast<double>(k.rows());
    const auto iterates = neumann_partial_sums(p, depth - 1);

    CovarianceFamilies out;
    out.base.reserve(static_cast<std::size_t>(depth));
    for (const auto& x : iterates) {
        const Eigen::Map<const Eigen::VectorXd> xv(x.values().data(), k.rows());
        const Eigen::VectorXd a = k * xv / n;
        Eigen::MatrixXd r = k * xv.array().square().matrix().asDiagonal() * k.transpose() / n;
        r.noalias() -= a * a.transpose();
        out.base.push_back(std::move(r));
    }
    out.chain.reserve(static_cast<std::size_t>(depth));
    for (int j = 0; j < depth; ++j) {
        Eigen::MatrixXd r = out.base[static_cast<std::size_t>(depth - 1 - j)];
        for (int step = 0; step < j; ++step) {
            r = apply_vk(k, r);
        }
        out.chain.push_back(std::move(r));
    }
    return out;
}

/// sum_k sigma_terms[k]^2 chain[k]: the covariance of x_{M,n(M)} predicted by the
/// uncorrelated-field decomposition.
inline Eigen::MatrixXd predicted_covariance(const CovarianceFamilies& fam, const Allocation& alloc)
{
    const auto v = recursive_variance_bound(alloc);
    if (fam.chain.size() != v.sigma_terms.size()) {
        throw Error("covariance families and allocation have different depths");
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(fam.chain.front().rows(), fam.chain.front().cols());
    for (std::size_t k = 0; k < fam.chain.size(); ++k) {
        out += v.sigma_terms[k] * v.sigma_terms[k] * fam.chain[k];
    }
    return out;
}

} // namespace fredholm
