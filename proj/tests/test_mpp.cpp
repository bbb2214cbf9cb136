#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "rbsde/error.hpp"
#include "rbsde/mpp.hpp"
#include "support.hpp"

using namespace rbsde;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("mpp") {

TEST_CASE("smallest model and compensator totals") {
    const MppModel m = build_model({0.0, 1.0}, {0.2}, {{1.0}}, false);
    CHECK(m.steps() == 1);
    CHECK(m.a_total() == doctest::Approx(0.2));

    const MppModel two = build_model({0.0, 0.5, 1.0}, {0.3, 0.3}, {{0.5, 0.5}, {0.5, 0.5}}, false);
    CHECK(two.a_total() == doctest::Approx(0.6));
    CHECK(two.a_at(1) == doctest::Approx(0.3));
    CHECK(two.dt(1) == doctest::Approx(0.5));
}

TEST_CASE("model construction errors") {
    CHECK(code_of([] { build_model({0.0, 1.0}, {1.2}, {{1.0}}, false); }) == ErrorCode::CompensatorOutOfRange);
    CHECK(code_of([] { build_model({0.0, 1.0}, {-0.1}, {{1.0}}, false); }) == ErrorCode::CompensatorOutOfRange);
    CHECK(code_of([] { build_model({0.0, 1.0, 1.0}, {0.1, 0.1}, {{1.0}, {1.0}}, false); }) ==
          ErrorCode::NonIncreasingGrid);
    CHECK(code_of([] { build_model({0.0, 1.0}, {0.1, 0.1}, {{1.0}}, false); }) == ErrorCode::LengthMismatch);
    CHECK(code_of([] { build_model({0.0, 1.0}, {0.1}, {{0.5, 0.4}}, false); }) == ErrorCode::KernelNotProbability);
    CHECK(code_of([] { build_model({0.0, 1.0}, {0.1}, {{1.2, -0.2}}, false); }) == ErrorCode::KernelNotProbability);
    CHECK(code_of([] { MarkSpace({"a", "a"}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { MarkSpace(std::vector<std::string>{}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("probability tolerance is configurable") {
    CHECK_THROWS(build_model({0.0, 1.0}, {0.1}, {{0.5, 0.5 + 1e-9}}, false));
    CHECK_NOTHROW(build_model({0.0, 1.0}, {0.1}, {{0.5, 0.5 + 1e-9}}, false, 1e-6));
}

TEST_CASE("one-step tree probabilities") {
    const ScenarioTree tree = testing::one_step_tree();
    REQUIRE(tree.leaf_count() == 2);
    CHECK_FALSE(tree.node(1).outcome.jump());
    CHECK(tree.node(1).prob == doctest::Approx(0.8));
    CHECK(tree.node(2).outcome.jump());
    CHECK(tree.node(2).prob == doctest::Approx(0.2));
}

TEST_CASE("leaf counts follow (K+1)^N and Brownian doubling") {
    const ScenarioTree two = build_tree(build_model({0.0, 0.5, 1.0}, {0.3, 0.3}, {{0.5, 0.5}, {0.5, 0.5}}, false));
    CHECK(two.leaf_count() == 9);
    CHECK(two.size() == 13);
    CHECK(tree_node_count(two.model()) == 13);

    const ScenarioTree bm = build_tree(build_model({0.0, 1.0}, {0.2}, {{1.0}}, true));
    REQUIRE(bm.leaf_count() == 4);
    double total = 0.0;
    for (NodeId id = bm.first_leaf(); id < bm.size(); ++id) {
        const double expected = 0.5 * (bm.node(id).outcome.jump() ? 0.2 : 0.8);
        CHECK(bm.node(id).path_prob == doctest::Approx(expected));
        total += bm.node(id).path_prob;
    }
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("tree cap") {
    const MppModel m = build_model({0.0, 1.0, 2.0, 3.0}, {0.1, 0.1, 0.1}, {{1.0}, {1.0}, {1.0}}, false);
    CHECK(code_of([&] { build_tree(m, 10); }) == ErrorCode::TreeTooLarge);
    CHECK_NOTHROW(build_tree(m, 40));
}

TEST_CASE("subtree leaf ranges and paths") {
    const ScenarioTree tree = build_tree(build_model({0.0, 0.5, 1.0}, {0.3, 0.3}, {{0.5, 0.5}, {0.5, 0.5}}, false));
    for (NodeId id = 0; id < tree.size(); ++id) {
        const auto [lo, hi] = tree.leaf_range(id);
        for (NodeId leaf = lo; leaf < hi; ++leaf) {
            const auto path = tree.path_to(leaf);
            CHECK(std::find(path.begin(), path.end(), id) != path.end());
        }
    }
    CHECK(tree.path_to(0) == std::vector<NodeId>{0});
}

TEST_CASE("compensated integral by hand") {
    const ScenarioTree tree = testing::one_step_tree();
    MarkField zero(tree);
    const NodeField z = compensated_integral(tree, zero, 1);
    CHECK(z[1] == 0.0);
    CHECK(z[2] == 0.0);

    MarkField u(tree);
    u.at(0)[0] = 1.0;
    const NodeField v = compensated_integral(tree, u, 1);
    CHECK(v[2] == doctest::Approx(0.8));
    CHECK(v[1] == doctest::Approx(-0.2));
    CHECK(leaf_expectation(tree, v) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("compensated integral has zero mean on random fields") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-3.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        const ScenarioTree tree = testing::random_tree(rng, 3, 2);
        MarkField u(tree);
        for (NodeId id = 0; id < tree.first_leaf(); ++id)
            for (double& x : u.at(id)) x = d(rng);
        CHECK(std::abs(leaf_expectation(tree, compensated_integral(tree, u, 3))) <= 1e-12);
    }
}

TEST_CASE("field domains") {
    const ScenarioTree tree = testing::one_step_tree();
    const NodeField leaves(tree, FieldDomain::Leaves, 1.0);
    CHECK(std::isnan(leaves[0]));
    CHECK_NOTHROW(require_domain(tree, leaves, FieldDomain::Leaves, "xi"));
    CHECK(code_of([&] { require_domain(tree, leaves, FieldDomain::AllNodes, "xi"); }) ==
          ErrorCode::FieldDomainMismatch);
}

TEST_CASE("tree dump has one row per node") {
    const ScenarioTree tree = testing::one_step_tree();
    std::ostringstream out;
    tree.write_csv(out);
    const std::string text = out.str();
    CHECK(text.rfind("node_id,depth,parent_id,outcome,prob,path_prob\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

}
