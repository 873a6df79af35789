#include "fredholm/reference.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fredholm;

namespace {

FredholmProblem constant(double lambda, int g = 16)
{
    return FredholmProblem(Domain(1, g), ConstantKernel{lambda}, OneFreeTerm{});
}

FredholmProblem separable(double lambda, int g)
{
    return FredholmProblem(Domain(1, g), SeparableKernel{lambda}, IdentityFreeTerm{});
}

} // namespace

TEST(ApplyOperator, ConstantKernelOnOne)
{
    const auto p = constant(0.5);
    const auto r = apply_operator(p, GridFunction(p.grid(), 1.0));
    for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_DOUBLE_EQ(r[i], 0.5);
    }
}

TEST(ApplyOperator, ZeroFunctionMapsToZero)
{
    const auto p = FredholmProblem(Domain(1, 20), GaussianKernel{0.7, 0.3}, OneFreeTerm{});
    EXPECT_EQ(apply_operator(p, GridFunction(p.grid())).sup_norm(), 0.0);
}

TEST(ApplyOperator, SeparableOnIdentity)
{
    const int g = 64;
    const auto p = separable(1.0, g);
    const auto r = apply_operator(p, p.free_term_values());
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double t = p.grid().point(i)[0];
        EXPECT_NEAR(r[i], t / 3.0, 3.0 / g);
    }
}

TEST(ApplyOperator, DomainMismatch)
{
    const auto p = constant(0.5);
    EXPECT_THROW((void)apply_operator(p, GridFunction(Grid(1, 5))), DomainMismatchError);
}

TEST(ApplyOperator, Linearity)
{
    const auto p = FredholmProblem(Domain(1, 40), GaussianKernel{0.9, 0.6}, IdentityFreeTerm{});
    GridFunction g1(p.grid());
    GridFunction g2(p.grid());
    for (std::size_t i = 0; i < g1.size(); ++i) {
        g1[i] = std::sin(3.0 * static_cast<double>(i));
        g2[i] = std::cos(0.7 * static_cast<double>(i)) - 0.2;
    }
    const auto lhs = apply_operator(p, 1.7 * g1 + (-0.4) * g2);
    const auto rhs = 1.7 * apply_operator(p, g1) + (-0.4) * apply_operator(p, g2);
    EXPECT_LE(sup_distance(lhs, rhs), 1e-12);
}

TEST(ApplyOperator, Contraction)
{
    const auto p = FredholmProblem(Domain(2, 9), GaussianKernel{-0.8, 0.5}, OneFreeTerm{});
    GridFunction g(p.grid());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = (i % 3 == 0 ? -1.0 : 0.5) * static_cast<double>(i % 7);
    }
    EXPECT_LE(apply_operator(p, g).sup_norm(), p.rho() * g.sup_norm() * (1 + 1e-14));
}

TEST(NeumannIterate, ConstantKernelGeometricSeries)
{
    const auto p = constant(0.5);
    const auto e = neumann_iterate(p, 3);
    ASSERT_EQ(e.terms.size(), 4u);
    const double expected[] = {1.0, 0.5, 0.25, 0.125};
    for (std::size_t d = 0; d < 4; ++d) {
        for (std::size_t i = 0; i < p.grid().size(); ++i) {
            EXPECT_EQ(e.terms[d][i], expected[d]);
        }
    }
    for (std::size_t i = 0; i < p.grid().size(); ++i) {
        EXPECT_EQ(e.truncated[i], 1.875);
    }
}

TEST(NeumannIterate, DepthZeroIsFreeTerm)
{
    const auto p = separable(0.5, 16);
    EXPECT_EQ(neumann_iterate(p, 0).truncated, p.free_term_values());
    EXPECT_THROW((void)neumann_iterate(p, -1), InvalidProblemError);
}

TEST(NeumannIterate, SeparableTermsMatchClosedForm)
{
    const int g = 64;
    const auto p = separable(1.0, g);
    const auto e = neumann_iterate(p, 2);
    for (int d = 0; d <= 2; ++d) {
        for (std::size_t i = 0; i < p.grid().size(); ++i) {
            const double t = p.grid().point(i)[0];
            EXPECT_NEAR(e.terms[static_cast<std::size_t>(d)][i], std::pow(1.0 / 3.0, d) * t, 5.0 * d / g + 1e-15);
        }
    }
}

TEST(NeumannIterate, TermsDecayGeometrically)
{
    const auto p = FredholmProblem(Domain(1, 30), GaussianKernel{0.9, 0.7}, IdentityFreeTerm{});
    const auto e = neumann_iterate(p, 12);
    const double f = p.free_term_values().sup_norm();
    for (std::size_t d = 0; d < e.terms.size(); ++d) {
        EXPECT_LE(e.terms[d].sup_norm(), f * std::pow(p.rho(), static_cast<double>(d)) * (1 + 1e-12));
    }
}

TEST(NeumannPartialSums, LastIsTruncated)
{
    const auto p = separable(0.8, 20);
    const auto sums = neumann_partial_sums(p, 5);
    ASSERT_EQ(sums.size(), 6u);
    EXPECT_LE(sup_distance(sums.back(), neumann_iterate(p, 5).truncated), 1e-15);
    EXPECT_EQ(sums.front(), p.free_term_values());
}

TEST(SolveReference, ConstantKernelClosedForm)
{
    const auto p = constant(0.5, 128);
    const auto r = solve_reference(p, 1e-12);
    for (std::size_t i = 0; i < r.solution.size(); ++i) {
        EXPECT_NEAR(r.solution[i], 2.0, 1e-12);
    }
}

TEST(SolveReference, SeparableClosedFormWithinQuadratureBias)
{
    const int g = 128;
    const auto p = separable(1.0, g);
    const auto r = solve_reference(p, 1e-10);
    for (std::size_t i = 0; i < r.solution.size(); ++i) {
        const double t = p.grid().point(i)[0];
        EXPECT_NEAR(r.solution[i], 1.5 * t, 1e-2);
    }
}

TEST(SolveReference, FixedPointResidual)
{
    const auto p = FredholmProblem(Domain(1, 50), GaussianKernel{0.95, 1.0}, IdentityFreeTerm{});
    const double tol = 1e-9;
    const auto r = solve_reference(p, tol);
    const auto residual = r.solution - p.free_term_values() - apply_operator(p, r.solution);
    EXPECT_LE(residual.sup_norm(), tol * (1 + p.rho()) / (1 - p.rho()));
}

TEST(SolveReference, ZeroKernelReturnsFreeTerm)
{
    const auto p = FredholmProblem(Domain(1, 10), ConstantKernel{0.0}, IdentityFreeTerm{});
    const auto r = solve_reference(p, 1e-12);
    EXPECT_EQ(r.depth, 0);
    EXPECT_EQ(r.solution, p.free_term_values());
}

TEST(SolveReference, DepthCap)
{
    const auto p = FredholmProblem(Domain(1, 8), ConstantKernel{0.999}, OneFreeTerm{});
    EXPECT_THROW((void)solve_reference(p, 1e-12, 100), DepthLimitError);
    EXPECT_THROW((void)solve_reference(p, 0.0), InvalidProblemError);
}

TEST(ChooseDepth, Examples)
{
    // 0.5^8 / 0.5 = 0.0078 <= 0.01 < 0.5^7 / 0.5 = 0.0156
    EXPECT_EQ(choose_depth(0.5, 1.0, 0.01), 7);
    EXPECT_EQ(choose_depth(0.5, 1.0, 0.5), 1);
    EXPECT_EQ(choose_depth(0.5, 1.0, 10.0), 1);
    EXPECT_DOUBLE_EQ(truncation_bound(0.5, 1.0, 6), std::pow(0.5, 7) / 0.5);
}

TEST(ChooseDepth, IsSmallestSufficientDepth)
{
    const auto p = separable(0.9, 32);
    const int m = choose_depth(p, 1e-3);
    EXPECT_LE(truncation_bound(p, m), 1e-3);
    EXPECT_GT(truncation_bound(p, m - 1), 1e-3);
}
