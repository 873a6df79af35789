#include "fredholm/dtm.hpp"
#include "fredholm/recursive.hpp"
#include "fredholm/reference.hpp"
#include "fredholm/statistics.hpp"
#include "test_support.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace fredholm;
using namespace fredholm::testing;

TEST(RecursiveSolve, ConstantKernelExact)
{
    const auto p = constant_problem(0.5);
    const auto est = recursive_solve(p, geometric_allocate(3, 64), 3, 5);
    for (const auto& rep : est.replicates) {
        for (std::size_t i = 0; i < rep.size(); ++i) {
            EXPECT_EQ(rep[i], 1.875);
        }
    }
}

TEST(RecursiveSolve, DepthOneMatchesDtmBitForBit)
{
    for (const auto& p : {separable_lattice(0.9, 32),
                          FredholmProblem(Domain(1, 9), GaussianKernel{0.7, 0.5}, IdentityFreeTerm{})}) {
        const auto alloc = manual_allocation({300});
        const auto rec = recursive_solve(p, alloc, 17, 3);
        const auto dtm = dtm_solve(p, alloc, 17, 3);
        EXPECT_EQ(rec.mean, dtm.mean);
        EXPECT_EQ(rec.replicates, dtm.replicates);
        EXPECT_EQ(rec.draws, dtm.draws);
    }
}

TEST(RecursiveSolve, DrawAccounting)
{
    const auto p = separable_lattice();
    const auto alloc = geometric_allocate(3, 1024);
    const auto est = recursive_solve(p, alloc, 1, 7);
    EXPECT_EQ(est.draws.draws(), 7 * 896);
    EXPECT_EQ(est.per_order.size(), 3u);
    EXPECT_EQ(est.per_order.back(), est.mean);
}

TEST(RecursiveSolve, DeterministicAcrossThreadCounts)
{
    const auto p = separable_lattice();
    const auto alloc = geometric_allocate(4, 2048);
    auto run = [&](int threads) {
        ScopedThreads t(threads);
        return recursive_solve(p, alloc, 99, 9);
    };
    const auto a = run(1);
    const auto b = run(7);
    EXPECT_EQ(a.replicates, b.replicates);
    EXPECT_EQ(a.draws, b.draws);
}

TEST(RecursiveSolve, ContinuousMeasureEvaluatesStagesExactly)
{
    // With the uniform measure stage draws are off the grid; the stage still evaluates
    // exactly through its stored draws. Check x_2 against a direct double sum.
    const FredholmProblem p(Domain(1, 5), SeparableKernel{0.8}, IdentityFreeTerm{});
    const auto alloc = manual_allocation({6, 4});
    // stage streams are numbered from the last stage
    Stream s1(3, StreamTag::Estimator, {0, 2});
    Stream s2(3, StreamTag::Estimator, {0, 1});
    std::vector<double> xi1;
    std::vector<double> xi2;
    {
        Stream c1 = s1;
        Stream c2 = s2;
        for (int l = 0; l < 6; ++l) {
            xi1.push_back(p.draw(c1).point[0]);
        }
        for (int l = 0; l < 4; ++l) {
            xi2.push_back(p.draw(c2).point[0]);
        }
    }
    const auto est = recursive_solve(p, alloc, 3);
    auto x1 = [&](double t) {
        double s = 0.0;
        for (double a : xi1) {
            s += 0.8 * t * a * a;
        }
        return t + s / 6.0;
    };
    for (std::size_t i = 0; i < p.grid().size(); ++i) {
        const double t = p.grid().point(i)[0];
        double s = 0.0;
        for (double b : xi2) {
            s += 0.8 * t * b * x1(b);
        }
        EXPECT_NEAR(est.mean[i], t + s / 4.0, 1e-14);
    }
}

TEST(RecursiveSolve, ConsistentAgainstTruncatedOracle)
{
    const auto p = separable_lattice(0.9, 32);
    const auto target = neumann_iterate(p, 5).truncated;
    const auto alloc = geometric_allocate(5, 1 << 18);
    EXPECT_LE(sup_distance(recursive_solve(p, alloc, 4).mean, target), 5 * std::sqrt(2.0 / (1 << 18)));
}

TEST(GeometricAllocate, Examples)
{
    EXPECT_EQ(geometric_allocate(3, 1024).counts, (std::vector<std::int64_t>{128, 256, 512}));
    EXPECT_EQ(geometric_allocate(3, 1024).recursive_draws(), 896);
    EXPECT_EQ(geometric_allocate(1, 100).counts, std::vector<std::int64_t>{50});
    const auto a = geometric_allocate(10, 1024 * 4096);
    for (int d = 1; d <= 10; ++d) {
        EXPECT_GE(a.n(d), 2);
        if (d < 10) {
            EXPECT_EQ(2 * a.n(d), a.n(d + 1));
        }
    }
    EXPECT_EQ(a.n(10), 1024 * 4096 / 2);
}

TEST(GeometricAllocate, BudgetGate)
{
    EXPECT_EQ(geometric_minimum_budget(3), 64);
    EXPECT_NO_THROW((void)geometric_allocate(3, 64));
    EXPECT_THROW((void)geometric_allocate(3, 63), BudgetError);
    try {
        (void)geometric_allocate(5, 100);
        FAIL();
    } catch (const BudgetError& e) {
        EXPECT_NE(std::string(e.what()).find("2^(M+1)"), std::string::npos);
    }
}

TEST(RecursiveVarianceBound, Examples)
{
    const auto single = recursive_variance_bound(manual_allocation({40}));
    EXPECT_DOUBLE_EQ(single.bound, 1.0 / 40);
    const auto v = recursive_variance_bound(geometric_allocate(3, 1024));
    EXPECT_NEAR(v.bound, 1.0 / 512 + 1.0 / (512.0 * 256) + 1.0 / (512.0 * 256 * 128), 1e-15);
    EXPECT_NEAR(v.bound, 0.0019608, 1e-7);
    EXPECT_NEAR(recursive_variance_bound(geometric_allocate(3, 1024), 2.5).bound, 2.5 * v.bound, 1e-15);
}

TEST(RecursiveVarianceBound, SigmaTerms)
{
    const auto alloc = manual_allocation({3, 9, 4, 11});
    const auto v = recursive_variance_bound(alloc);
    ASSERT_EQ(v.sigma_terms.size(), 4u);
    EXPECT_NEAR(v.sigma_terms[0], 1.0 / std::sqrt(11.0), 1e-15);
    EXPECT_NEAR(v.sigma_terms[1], 1.0 / std::sqrt(11.0 * 4), 1e-15);
    EXPECT_NEAR(v.sigma_terms[2], 1.0 / std::sqrt(11.0 * 4 * 9), 1e-15);
    EXPECT_NEAR(v.sigma_terms[3], 1.0 / std::sqrt(11.0 * 4 * 9 * 3), 1e-15);
    for (std::size_t k = 1; k < v.sigma_terms.size(); ++k) {
        EXPECT_LT(v.sigma_terms[k], v.sigma_terms[k - 1]);
    }
}

TEST(RecursiveVarianceBound, GeometricMajorant)
{
    for (int m = 2; m <= 8; ++m) {
        for (std::int64_t n = geometric_minimum_budget(m); n <= (std::int64_t{1} << 22); n *= 4) {
            const double bound = recursive_variance_bound(geometric_allocate(m, n)).bound;
            const double nn = static_cast<double>(n);
            EXPECT_LE(bound, (2.0 / nn) * (1.0 + 8.0 / nn)) << "M=" << m << " N=" << n;
        }
    }
}

TEST(RecursiveVariance, FirstTermDominates)
{
    // Doubling n(M) with the earlier stages much larger halves the variance.
    const auto p = separable_lattice(0.9, 32);
    const auto small = recursive_solve(p, manual_allocation({8192, 256}), 31, 3000);
    const auto large = recursive_solve(p, manual_allocation({8192, 512}), 32, 3000);
    const double ratio = pointwise_variance(small.replicates).sup_norm() / pointwise_variance(large.replicates).sup_norm();
    EXPECT_GE(ratio, 1.8);
    EXPECT_LE(ratio, 2.2);
}

TEST(RecursiveVariance, WithinFittedMajorant)
{
    const auto p = separable_lattice(0.9, 32);
    const auto alloc = geometric_allocate(3, 4096);
    const double c = fit_variance_constant(p, alloc, 2000, 41);
    const auto est = recursive_solve(p, alloc, 42, 2000);
    EXPECT_LE(pointwise_variance(est.replicates).sup_norm(), 1.5 * recursive_variance_bound(alloc, c).bound);
}

TEST(CovarianceRecursion, ConstantKernelVanishes)
{
    const auto fam = covariance_recursion(constant_problem(0.5), 3);
    for (const auto& m : fam.base) {
        EXPECT_LE(m.cwiseAbs().maxCoeff(), 1e-15);
    }
    for (const auto& m : fam.chain) {
        EXPECT_LE(m.cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(CovarianceRecursion, SeparableDepthOneClosedForm)
{
    // x_0 = f(s) = s, so R_1(t1,t2) = t1 t2 (E s^4 - (E s^2)^2): exactly so on the grid, and
    // t1 t2 (1/5 - 1/9) = 4/45 t1 t2 for the uniform law up to quadrature bias.
    const int g = 128;
    const FredholmProblem p(Domain(1, g), SeparableKernel{1.0}, IdentityFreeTerm{});
    const auto r1 = covariance_recursion(p, 1).base[0];
    double m2 = 0.0;
    double m4 = 0.0;
    for (int j = 0; j < g; ++j) {
        const double s = static_cast<double>(j) / (g - 1);
        m2 += s * s / g;
        m4 += s * s * s * s / g;
    }
    for (int i = 0; i < g; i += 9) {
        for (int j = 0; j < g; j += 7) {
            const double t1 = static_cast<double>(i) / (g - 1);
            const double t2 = static_cast<double>(j) / (g - 1);
            EXPECT_NEAR(r1(i, j), t1 * t2 * (m4 - m2 * m2), 1e-12);
            EXPECT_NEAR(r1(i, j), t1 * t2 * 4.0 / 45.0, 1.0 / g);
        }
    }
}

TEST(CovarianceRecursion, PositiveSemidefinite)
{
    const FredholmProblem p(Domain(1, 24), GaussianKernel{0.9, 0.4}, IdentityFreeTerm{});
    const auto fam = covariance_recursion(p, 4);
    for (const auto* family : {&fam.base, &fam.chain}) {
        for (const auto& m : *family) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
            const auto ev = es.eigenvalues();
            EXPECT_GE(ev.minCoeff(), -1e-8 * std::max(ev.maxCoeff(), 0.0));
        }
    }
}

TEST(CovarianceRecursion, PredictsDepthOneCovariance)
{
    const auto p = separable_lattice(0.9, 16);
    const auto alloc = manual_allocation({200});
    const auto predicted = predicted_covariance(covariance_recursion(p, 1), alloc);
    const auto est = recursive_solve(p, alloc, 12, 4000);
    const auto var = pointwise_variance(est.replicates);
    const auto last = static_cast<Eigen::Index>(p.grid().size() - 1);
    EXPECT_NEAR(var[p.grid().size() - 1] / predicted(last, last), 1.0, 0.1);
}
