#pragma once

#include "fredholm/grid_function.hpp"
#include "fredholm/problem.hpp"

#include <cstdint>
#include <vector>

namespace fredholm::detail {

/// The random measure (1/n) sum_i w_i delta_{xi_i}, and its kernel transform
///     t -> (1/n) sum_i K(t, xi_i) w_i.
///
/// On the lattice measure samples are accumulated per grid point, so evaluating the
/// transform costs O(grid) instead of O(n): weights of draws that hit the same point
/// are summed in draw order. Off the lattice every draw is kept.
class WeightedSupport {
public:
    WeightedSupport(const FredholmProblem& problem, std::int64_t n)
        : problem_(&problem), n_(n), lattice_(problem.measure() == Measure::Lattice)
    {
        if (lattice_) {
            cell_weight_.assign(problem.grid().size(), 0.0);
        } else {
            points_.reserve(static_cast<std::size_t>(n));
            weights_.reserve(static_cast<std::size_t>(n));
        }
    }

    void add(const Sample& s, double w)
    {
        if (lattice_) {
            cell_weight_[static_cast<std::size_t>(s.grid_index)] += w;
        } else {
            points_.push_back(s);
            weights_.push_back(w);
        }
    }

    /// (1/n) sum_i K(t, xi_i) w_i at an arbitrary point t.
    [[nodiscard]] double transform(const Sample& t) const
    {
        double s = 0.0;
        if (lattice_) {
            for (std::size_t g = 0; g < cell_weight_.size(); ++g) {
                s += problem_->kernel(t, problem_->grid_sample(g)) * cell_weight_[g];
            }
        } else {
            for (std::size_t i = 0; i < points_.size(); ++i) {
                s += problem_->kernel(t, points_[i]) * weights_[i];
            }
        }
        return s / static_cast<double>(n_);
    }

    /// The transform restricted to the grid.
    [[nodiscard]] GridFunction transform_on_grid() const
    {
        const std::size_t size = problem_->grid().size();
        GridFunction out(problem_->grid());
        if (lattice_) {
            for (std::size_t i = 0; i < size; ++i) {
                const auto row = problem_->kernel_row(i);
                double s = 0.0;
                for (std::size_t g = 0; g < size; ++g) {
                    s += row[g] * cell_weight_[g];
                }
                out[i] = s / static_cast<double>(n_);
            }
        } else {
            for (std::size_t i = 0; i < size; ++i) {
                out[i] = transform(problem_->grid_sample(i));
            }
        }
        return out;
    }

private:
    const FredholmProblem* problem_;
    std::int64_t n_;
    bool lattice_;
    std::vector<double> cell_weight_;
    std::vector<Sample> points_;
    std::vector<double> weights_;
};

} // namespace fredholm::detail
