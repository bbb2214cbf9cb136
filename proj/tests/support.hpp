#pragma once

#include <cmath>
#include <random>

#include "rbsde/mpp.hpp"
#include "rbsde/solver.hpp"

namespace testing {

// N = 1, K = 1, dA = 0.2: node 0 is the root, 1 the no-jump leaf, 2 the jump leaf.
inline rbsde::ScenarioTree one_step_tree(double delta_a = 0.2) {
    return rbsde::build_tree(rbsde::build_model({0.0, 1.0}, {delta_a}, {{1.0}}, false));
}

// xi = 1 on the jump leaf, 0 elsewhere.
inline rbsde::NodeField jump_indicator(const rbsde::ScenarioTree& tree) {
    return rbsde::NodeField::from_function(tree, rbsde::FieldDomain::Leaves,
                                           [&](rbsde::NodeId id) { return tree.node(id).outcome.jump() ? 1.0 : 0.0; });
}

// L = level at the root, -10 elsewhere (below every terminal value used).
inline rbsde::Obstacle root_barrier(const rbsde::ScenarioTree& tree, double level) {
    return rbsde::Obstacle::from_field(
        tree, rbsde::NodeField::from_function(tree, rbsde::FieldDomain::AllNodes,
                                              [&](rbsde::NodeId id) { return id == 0 ? level : -10.0; }));
}

inline rbsde::ScenarioTree random_tree(std::mt19937_64& rng, std::size_t steps, std::size_t marks,
                                       bool brownian = false) {
    std::uniform_real_distribution<double> da(0.05, 0.5);
    std::uniform_real_distribution<double> w(0.1, 1.0);
    std::vector<double> grid{0.0}, delta_a;
    std::vector<std::vector<double>> kernel;
    for (std::size_t i = 0; i < steps; ++i) {
        grid.push_back(grid.back() + 0.25);
        delta_a.push_back(da(rng));
        std::vector<double> row(marks);
        double s = 0.0;
        for (auto& v : row) s += (v = w(rng));
        for (auto& v : row) v /= s;
        kernel.push_back(row);
    }
    return rbsde::build_tree(rbsde::build_model(grid, delta_a, kernel, brownian));
}

inline rbsde::NodeField random_leaves(const rbsde::ScenarioTree& tree, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return rbsde::NodeField::from_function(tree, rbsde::FieldDomain::Leaves, [&](rbsde::NodeId) { return d(rng); });
}

}  // namespace testing
