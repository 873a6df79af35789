#pragma once

#include "fredholm/dtm.hpp"
#include "fredholm/error.hpp"
#include "fredholm/estimate.hpp"
#include "fredholm/grid_function.hpp"
#include "fredholm/parallel.hpp"
#include "fredholm/problem.hpp"
#include "fredholm/recursive.hpp"
#include "fredholm/reference.hpp"
#include "fredholm/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fredholm {

enum class CovarianceSource { Empirical, Theoretical };

/// Covariance of a random field on the grid, ready for Gaussian simulation.
struct CovarianceEstimate {
    Eigen::MatrixXd matrix;
    CovarianceSource source = CovarianceSource::Empirical;
    std::size_t replicates = 0;  // R for empirical estimates
    double jitter = 0.0;         // already added to the diagonal
};

inline constexpr double kRelativeJitter = 1e-10;

/// Scaled sample covariance of replicate fields, centered at their mean:
///     C = scale * (1/R) sum_r (x_r - xbar)(x_r - xbar)^T + jitter I,
/// jitter = 1e-10 * max diag.
inline CovarianceEstimate empirical_covariance(std::span<const GridFunction> replicates, double scale)
{
    if (replicates.size() < 2) {
        throw Error("empirical covariance needs at least 2 replicates");
    }
    if (!(scale > 0.0)) {
        throw Error("covariance scale must be positive");
    }
    const auto n = static_cast<Eigen::Index>(replicates.front().size());
    const auto r = static_cast<Eigen::Index>(replicates.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (const auto& x : replicates) {
        replicates.front().require_same_grid(x);
        mean += Eigen::Map<const Eigen::VectorXd>(x.values().data(), n);
    }
    mean /= static_cast<double>(r);
    Eigen::MatrixXd centered(n, r);
    for (Eigen::Index j = 0; j < r; ++j) {
        centered.col(j) =
            Eigen::Map<const Eigen::VectorXd>(replicates[static_cast<std::size_t>(j)].values().data(), n) - mean;
    }
    Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(n, n);
    lower.selfadjointView<Eigen::Lower>().rankUpdate(centered, scale / static_cast<double>(r));

    CovarianceEstimate out;
    out.matrix = lower.selfadjointView<Eigen::Lower>();
    out.replicates = replicates.size();
    out.jitter = kRelativeJitter * out.matrix.diagonal().maxCoeff();
    out.matrix.diagonal().array() += out.jitter;
    return out;
}

/// Level-quantile of max_t |G(t)| for the centered Gaussian field G with the given
/// covariance, from `sims` simulated draws. Draw i uses stream.split(i), so the
/// result is independent of scheduling and repeated calls with the same stream
/// reuse the same draws.
inline double gaussian_sup_quantile(const CovarianceEstimate& cov, double level, std::size_t sims, const Stream& stream)
{
    if (!(level > 0.0 && level < 1.0)) {
        throw Error("confidence level must lie in (0, 1)");
    }
    if (sims < 1000) {
        throw Error("gaussian_sup_quantile needs at least 1000 simulations");
    }
    const Eigen::Index n = cov.matrix.rows();
    const double max_diag = n > 0 ? cov.matrix.diagonal().maxCoeff() : 0.0;
    if (!(max_diag > 0.0)) {
        return 0.0;
    }

    Eigen::LLT<Eigen::MatrixXd> llt(cov.matrix);
    double extra = 10.0 * std::max(cov.jitter, kRelativeJitter * max_diag);
    for (int attempt = 0; llt.info() != Eigen::Success; ++attempt) {
        if (attempt == 3) {
            throw FactorizationError("covariance factorization failed after 3 jitter escalations");
        }
        Eigen::MatrixXd jittered = cov.matrix;
        jittered.diagonal().array() += extra;
        llt.compute(jittered);
        extra *= 10.0;
    }
    const Eigen::MatrixXd factor = llt.matrixL();

    std::vector<double> maxima(sims);
    parallel_for(sims, [&](std::size_t i) {
        Stream child = stream.split(i);
        std::normal_distribution<double> normal;
        Eigen::VectorXd eps(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            eps(j) = normal(child);
        }
        const Eigen::VectorXd g = factor.triangularView<Eigen::Lower>() * eps;
        maxima[i] = g.cwiseAbs().maxCoeff();
    });
    std::sort(maxima.begin(), maxima.end());
    const auto k = static_cast<std::size_t>(std::ceil(level * static_cast<double>(sims)));
    return maxima[std::clamp<std::size_t>(k, 1, sims) - 1];
}

enum class BandKind { AsymptoticClt, NonAsymptoticSubgaussian };

inline const char* to_string(BandKind k)
{
    return k == BandKind::AsymptoticClt ? "asymptotic" : "subgaussian";
}

/// Uniform confidence band center +- half_width on the grid.
struct ConfidenceBand {
    double level = 0.95;
    GridFunction center;
    GridFunction lower;
    GridFunction upper;
    BandKind kind = BandKind::AsymptoticClt;
    double half_width_scale = 0.0;  // u: quantile of the normalized sup-error
    double normalization = 1.0;     // N in sqrt(N)
    double half_width = 0.0;
    bool truncation_inflated = false;

    /// True when lower <= target <= upper at every grid point.
    [[nodiscard]] bool covers(const GridFunction& target) const
    {
        center.require_same_grid(target);
        for (std::size_t i = 0; i < target.size(); ++i) {
            if (target[i] < lower[i] || target[i] > upper[i]) {
                return false;
            }
        }
        return true;
    }
};

inline ConfidenceBand make_band(const GridFunction& center, double half_width, double level, BandKind kind,
                                double u, double normalization)
{
    GridFunction lo = center;
    GridFunction hi = center;
    for (std::size_t i = 0; i < center.size(); ++i) {
        lo[i] -= half_width;
        hi[i] += half_width;
    }
    return ConfidenceBand{level, center, std::move(lo), std::move(hi), kind, u, normalization, half_width, false};
}

/// CLT band for x_M: half-width = q / sqrt(N) where q is the simulated sup-quantile of
/// the Gaussian field whose covariance is estimated from the replicates, scaled by N
/// (N = band_scale of the allocation, i.e. N/2 = n(M) for geometric allocations).
inline ConfidenceBand asymptotic_band(const SolutionEstimate& est, double level, std::size_t sims,
                                      const Stream& stream)
{
    if (est.replicates.size() < 2) {
        throw Error("asymptotic band needs an estimate with at least 2 replicates");
    }
    const double scale = band_scale(est.allocation);
    const auto cov = empirical_covariance(est.replicates, scale);
    const double q = gaussian_sup_quantile(cov, level, sims, stream);
    return make_band(est.mean, q / std::sqrt(scale), level, BandKind::AsymptoticClt, q, scale);
}

/// Band from the subgaussian tail bound P(sqrt(N) sup|error| > u) <= exp(-c3 u^2):
/// u = sqrt(ln(1/(1-level)) / c3), half-width = u / sqrt(N). An infinite c3
/// (deterministic estimator) gives a zero-width band.
inline ConfidenceBand subgaussian_band(const SolutionEstimate& est, double level, double c3)
{
    if (!(level > 0.0 && level < 1.0)) {
        throw Error("confidence level must lie in (0, 1)");
    }
    if (!(c3 > 0.0)) {
        throw Error("subgaussian constant must be positive");
    }
    const double scale = band_scale(est.allocation);
    const double u = std::isinf(c3) ? 0.0 : std::sqrt(std::log(1.0 / (1.0 - level)) / c3);
    return make_band(est.mean, u / std::sqrt(scale), level, BandKind::NonAsymptoticSubgaussian, u, scale);
}

/// Widens a band for x_M into a band for the solution z by the truncation bound
/// ||f|| rho^{M+1} / (1 - rho).
inline ConfidenceBand inflate_for_truncation(ConfidenceBand band, const FredholmProblem& p, int depth)
{
    const double gap = truncation_bound(p, depth);
    for (std::size_t i = 0; i < band.center.size(); ++i) {
        band.lower[i] -= gap;
        band.upper[i] += gap;
    }
    band.half_width += gap;
    band.truncation_inflated = true;
    return band;
}

/// One-sided Wilson score upper bound for a binomial proportion k/n.
inline double wilson_upper(std::size_t k, std::size_t n, double z)
{
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double center = p + z2 / (2.0 * nn);
    const double radius = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    return std::min(1.0, (center + radius) / (1.0 + z2 / nn));
}

inline constexpr double kSurvivalConfidenceZ = 1.645;

/// Largest c with S(u_i) <= exp(-c u_i^2) at every observed normalized error u_i,
/// where S(u_i) is the 95% Wilson upper bound of the fraction of errors exceeding u_i.
/// Returns +infinity when every error is zero.
inline double fit_subgaussian_constant(std::span<const double> errors, double z = kSurvivalConfidenceZ)
{
    std::vector<double> u(errors.begin(), errors.end());
    std::sort(u.begin(), u.end());
    const std::size_t n = u.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (!(u[i] > 0.0) || (i + 1 < n && u[i + 1] == u[i])) {
            continue;
        }
        const std::size_t exceed = n - (i + 1);
        const double s = wilson_upper(exceed, n, z);
        if (s >= 1.0) {
            continue;
        }
        best = std::min(best, -std::log(s) / (u[i] * u[i]));
    }
    return best;
}

/// Pilot calibration of c3: runs `pilot_trials` independent single-replicate solves,
/// takes u_i = sqrt(N) * sup_t |x_M(t) - z^(M)(t)| against the Neumann oracle, and
/// fits with fit_subgaussian_constant. Deterministic given seed.
inline double calibrate_c3(const FredholmProblem& p, const Allocation& alloc, std::size_t pilot_trials,
                           std::uint64_t seed, Estimator method = Estimator::Recursive)
{
    if (pilot_trials < 100) {
        throw Error("c3 calibration needs at least 100 pilot trials");
    }
    alloc.validate();
    const GridFunction target = neumann_iterate(p, alloc.depth).truncated;
    const double root_scale = std::sqrt(band_scale(alloc));
    std::vector<double> u(pilot_trials);
    parallel_for(pilot_trials, [&](std::size_t i) {
        const auto trial_seed = derive_seed(seed, StreamTag::Pilot, i);
        const auto est = method == Estimator::Recursive ? recursive_solve(p, alloc, trial_seed, 1)
                                                        : dtm_solve(p, alloc, trial_seed, 1);
        u[i] = root_scale * sup_distance(est.mean, target);
    });
    return fit_subgaussian_constant(u);
}

} // namespace fredholm
