#pragma once

// Derivative-free minimization of low-dimensional convex functions used by
// the inf-convolution. Line searches are golden-section; each sweep visits
// the coordinate axes, the negative finite-difference gradient and the
// net displacement of the sweep (Powell).

#include <functional>
#include <span>
#include <vector>

namespace rbsde::detail {

using Objective = std::function<double(std::span<const double>)>;

struct MinimizeOptions {
    int max_sweeps = 500;
    double improvement_tolerance = 1e-13;
    double divergence_radius = 1e8;
};

struct MinimizeResult {
    std::vector<double> x;
    double value = 0.0;
    int sweeps = 0;
    bool diverged = false;
};

MinimizeResult minimize_convex(const Objective& f, std::vector<double> start, const MinimizeOptions& options);

}  // namespace rbsde::detail
