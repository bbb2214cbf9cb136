#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rbsde/error.hpp"
#include "rbsde/solver.hpp"
#include "support.hpp"

using namespace rbsde;

namespace {

GeneratorSpec linear_y(double slope, std::size_t marks = 1) {
    GeneratorParams declared;
    declared.beta_tilde = std::abs(slope);
    declared.beta = std::abs(slope);
    declared.convexity = Convexity::Convex;
    return linear_in_u(LinearInUParams{slope, std::vector<double>(marks, 0.0), {}, 1.0}, declared);
}

// max(L, E[children]) recursion with L at internal nodes and xi at leaves.
NodeField classical_snell(const ScenarioTree& tree, const NodeField& xi, const NodeField& l) {
    NodeField v(tree, FieldDomain::AllNodes);
    for (NodeId id = tree.size(); id-- > 0;) {
        const TreeNode& n = tree.node(id);
        if (n.child_count == 0) {
            v[id] = xi[id];
            continue;
        }
        double mean = 0.0;
        for (std::size_t c = 0; c < n.child_count; ++c) {
            const NodeId child = n.first_child + c;
            mean += tree.node(child).prob * v[child];
        }
        v[id] = std::max(l[id], mean);
    }
    return v;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("one backward step by hand") {
    const ScenarioTree tree = testing::one_step_tree();
    const std::vector<double> child_y{0.0, 1.0};

    const StepResult free = backward_step(tree, 0, child_y, zero_generator(), std::nullopt);
    CHECK(free.y == doctest::Approx(0.2));
    CHECK(free.u[0] == doctest::Approx(1.0));
    CHECK(free.dk == 0.0);

    const StepResult reflected = backward_step(tree, 0, child_y, zero_generator(), 0.5);
    CHECK(reflected.y == doctest::Approx(0.5));
    CHECK(reflected.dk == doctest::Approx(0.3));

    const StepResult shifted = backward_step(tree, 0, child_y, constant_generator(0.7), std::nullopt);
    CHECK(shifted.y == doctest::Approx(0.2 + 0.7 * 0.2));
}

TEST_CASE("implicit linear step solves y = 1 + 0.1 y") {
    const ScenarioTree tree = testing::one_step_tree();
    const NodeField one(tree, FieldDomain::Leaves, 1.0);
    const RbsdeSolution sol = bsde_solve(tree, linear_y(0.5), one);
    CHECK(sol.root() == doctest::Approx(1.0 / 0.9).epsilon(1e-12));

    SolverOptions explicit_mode;
    explicit_mode.mode = SolverMode::Explicit;
    CHECK(bsde_solve(tree, linear_y(0.5), one, explicit_mode).root() == doctest::Approx(1.1));
}

TEST_CASE("a step without a fixed point is reported") {
    const ScenarioTree tree = testing::one_step_tree();
    GeneratorParams p;
    const GeneratorSpec runaway("runaway", p, [](const DriverArgs& a) { return a.y / 0.2 + 1.0; });
    try {
        backward_step(tree, 0, std::vector<double>{0.0, 1.0}, runaway, std::nullopt);
        FAIL("expected FixedPointDiverged");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FixedPointDiverged);
    }
}

TEST_CASE("implicit solve is insensitive to its start") {
    std::mt19937_64 rng(21);
    const ScenarioTree tree = testing::random_tree(rng, 3, 2);
    const NodeField xi = testing::random_leaves(tree, rng, -2.0, 2.0);
    for (const GeneratorSpec& gen : {entropic(1.0), linear_y(0.8, 2), neg_entropic(2.0)}) {
        const RbsdeSolution sol = bsde_solve(tree, gen, xi);
        for (NodeId id = 0; id < tree.first_leaf(); ++id) {
            const TreeNode& n = tree.node(id);
            std::vector<double> child_y;
            for (std::size_t c = 0; c < n.child_count; ++c) child_y.push_back(sol.y[n.first_child + c]);
            const LocalStep step = local_step(tree, id, child_y);
            const double far = implicit_solve(step.context(), gen, {}, step.mean + 10.0).value;
            CHECK(far == doctest::Approx(sol.y[id]).epsilon(1e-11));
        }
    }
}

TEST_CASE("zero and constant-terminal solutions") {
    std::mt19937_64 rng(4);
    const ScenarioTree tree = testing::random_tree(rng, 3, 2);
    const NodeField xi = testing::random_leaves(tree, rng, -1.0, 3.0);
    CHECK(bsde_solve(tree, zero_generator(), xi).root() == doctest::Approx(leaf_expectation(tree, xi)));

    const NodeField c(tree, FieldDomain::Leaves, 0.75);
    const RbsdeSolution sol = bsde_solve(tree, entropic(1.5), c);
    for (NodeId id = 0; id < tree.size(); ++id) CHECK(sol.y[id] == doctest::Approx(0.75));
}

TEST_CASE("reflected one-step fixture") {
    const ScenarioTree tree = testing::one_step_tree();
    const NodeField xi = testing::jump_indicator(tree);
    const RbsdeSolution sol = rbsde_solve(tree, zero_generator(), xi, testing::root_barrier(tree, 0.5));
    CHECK(sol.root() == doctest::Approx(0.5));
    const NodeField kt = k_terminal(tree, sol);
    CHECK(kt[1] == doctest::Approx(0.3));
    CHECK(kt[2] == doctest::Approx(0.3));
    CHECK(sol.max_flat_off == 0.0);
}

TEST_CASE("inactive barrier reproduces the BSDE") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const ScenarioTree tree = testing::random_tree(rng, 3, 2);
        const NodeField xi = testing::random_leaves(tree, rng, -2.0, 2.0);
        const RbsdeSolution free = bsde_solve(tree, entropic(1.0), xi);
        const double lowest = *std::min_element(free.y.values().begin(), free.y.values().end());
        for (double level : {lowest - 1.0, -1e9}) {
            const Obstacle low = Obstacle::from_field(tree, NodeField(tree, FieldDomain::AllNodes, level));
            const RbsdeSolution sol = rbsde_solve(tree, entropic(1.0), xi, low);
            double dk = 0.0;
            for (NodeId id = 0; id < tree.size(); ++id) {
                CHECK(std::abs(sol.y[id] - free.y[id]) <= 1e-12);
                dk += sol.dk[id];
            }
            CHECK(dk == 0.0);
        }
    }
}

TEST_CASE("obstacle above terminal is rejected") {
    const ScenarioTree tree = testing::one_step_tree();
    const Obstacle high = Obstacle::from_field(tree, NodeField(tree, FieldDomain::AllNodes, 0.5));
    CHECK_THROWS_AS(rbsde_solve(tree, zero_generator(), testing::jump_indicator(tree), high), Error);
}

TEST_CASE("zero driver with a barrier is the classical Snell envelope") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const ScenarioTree tree = testing::random_tree(rng, 3, 2);
        const NodeField xi = testing::random_leaves(tree, rng, -1.0, 1.0);
        NodeField l = NodeField::from_function(tree, FieldDomain::AllNodes, [&](NodeId) { return d(rng); });
        for (NodeId id = tree.first_leaf(); id < tree.size(); ++id) l[id] = std::min(l[id], xi[id]);
        const RbsdeSolution sol = rbsde_solve(tree, zero_generator(), xi, Obstacle::from_field(tree, l));
        const NodeField oracle = classical_snell(tree, xi, l);
        for (NodeId id = 0; id < tree.size(); ++id) CHECK(sol.y[id] == doctest::Approx(oracle[id]).epsilon(1e-13));
    }
}

TEST_CASE("pathwise residual and flat-off on random reflected instances") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const ScenarioTree tree = testing::random_tree(rng, 3, 2, trial % 2 == 1);
        const NodeField xi = testing::random_leaves(tree, rng, -1.0, 1.0);
        const Obstacle l = testing::root_barrier(tree, 0.3);
        for (const GeneratorSpec& gen : {entropic(1.0), linear_y(-0.6, 2)}) {
            const RbsdeSolution sol = rbsde_solve(tree, gen, xi, l);
            CHECK(max_pathwise_residual(tree, sol, xi) <= 1e-10);
            CHECK(sol.max_flat_off <= 1e-12);
            CHECK(sol.min_barrier_gap >= -1e-12);
        }
    }
}

TEST_CASE("evaluation operator on simple rules") {
    const ScenarioTree tree = testing::one_step_tree();
    const NodeField eta = NodeField::from_function(tree, FieldDomain::AllNodes,
                                                   [&](NodeId id) { return id == 0 ? 0.5 : (id == 2 ? 1.0 : 0.0); });
    const StoppingRule at_root(tree, true);
    CHECK(evaluation_operator(tree, zero_generator(), at_root, eta, 0) == doctest::Approx(0.5));
    StoppingRule at_leaves(tree, true);
    at_leaves.set(0, false);
    CHECK(evaluation_operator(tree, zero_generator(), at_leaves, eta, 0) == doctest::Approx(0.2));
}

TEST_CASE("stopping rules must stop at leaves") {
    const ScenarioTree tree = testing::one_step_tree();
    StoppingRule bad(tree, true);
    bad.set(2, false);
    CHECK_THROWS_AS(require_adapted(tree, bad), Error);
}

TEST_CASE("inf-convolution ladder converges upward on the one-step tree") {
    const ScenarioTree tree = testing::one_step_tree(0.3);
    const NodeField xi = NodeField::from_function(tree, FieldDomain::Leaves,
                                                  [&](NodeId id) { return tree.node(id).outcome.jump() ? 2.0 : -0.5; });
    const LadderResult ladder = approximation_ladder(tree, entropic(1.0), xi, Obstacle::inactive(),
                                                     {0.25, 0.5, 1, 2, 4, 8, 16}, LadderMode::InfConvolution);
    for (std::size_t k = 1; k < ladder.rows.size(); ++k) {
        CHECK(ladder.rows[k].root_y >= ladder.rows[k - 1].root_y - 1e-9);
        CHECK(ladder.rows[k].gap <= ladder.rows[k - 1].gap + 1e-9);
    }
    CHECK(ladder.rows.back().gap <= 1e-8);
}

TEST_CASE("truncation ladder is exact once the clamp is inactive") {
    std::mt19937_64 rng(14);
    const ScenarioTree tree = testing::random_tree(rng, 3, 2);
    const NodeField xi = testing::random_leaves(tree, rng, -2.5, 2.5);
    const LadderResult ladder =
        approximation_ladder(tree, entropic(1.0), xi, Obstacle::inactive(), {0.5, 1, 3, 4}, LadderMode::Truncation);
    CHECK(ladder.rows[2].gap == 0.0);
    CHECK(ladder.rows[3].gap == 0.0);
    CHECK(ladder.rows[0].gap > 0.0);
}

}
