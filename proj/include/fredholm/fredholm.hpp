#pragma once

#include "fredholm/confidence.hpp"
#include "fredholm/dtm.hpp"
#include "fredholm/error.hpp"
#include "fredholm/estimate.hpp"
#include "fredholm/grid.hpp"
#include "fredholm/grid_function.hpp"
#include "fredholm/parallel.hpp"
#include "fredholm/problem.hpp"
#include "fredholm/recursive.hpp"
#include "fredholm/reference.hpp"
#include "fredholm/rng.hpp"
#include "fredholm/statistics.hpp"

namespace fredholm {

inline constexpr const char* kVersion = "0.1.0";

} // namespace fredholm
