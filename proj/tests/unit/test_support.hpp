#pragma once

#include "fredholm/fredholm.hpp"

#include <cstdlib>
#include <optional>
#include <string>

namespace fredholm::testing {

inline FredholmProblem constant_problem(double lambda = 0.5, int g = 16)
{
    return FredholmProblem(Domain(1, g), ConstantKernel{lambda}, OneFreeTerm{});
}

/// Separable(lambda), f(t) = t on the equal-weight lattice, so grid oracles are exact.
inline FredholmProblem separable_lattice(double lambda = 0.9, int g = 32)
{
    return FredholmProblem(Domain(1, g, Measure::Lattice), SeparableKernel{lambda}, IdentityFreeTerm{});
}

/// Sets FREDHOLM_MC_THREADS for the lifetime of the object.
class ScopedThreads {
public:
    explicit ScopedThreads(int n)
    {
        if (const char* old = std::getenv("FREDHOLM_MC_THREADS")) {
            previous_ = old;
        }
        setenv("FREDHOLM_MC_THREADS", std::to_string(n).c_str(), 1);
    }
    ~ScopedThreads()
    {
        if (previous_) {
            setenv("FREDHOLM_MC_THREADS", previous_->c_str(), 1);
        } else {
            unsetenv("FREDHOLM_MC_THREADS");
        }
    }
    ScopedThreads(const ScopedThreads&) = delete;
    ScopedThreads& operator=(const ScopedThreads&) = delete;

private:
    std::optional<std::string> previous_;
};

} // namespace fredholm::testing
