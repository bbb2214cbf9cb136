#include <doctest.h>

#include <cmath>
#include <random>

#include "rbsde/battery.hpp"
#include "rbsde/error.hpp"
#include "rbsde/oracle.hpp"
#include "support.hpp"

using namespace rbsde;

TEST_SUITE("oracle") {

TEST_CASE("rule counts") {
    const ScenarioTree one = testing::one_step_tree();
    CHECK(count_stopping_rules(one, 0) == 2);
    CHECK(enumerate_stopping_rules(one, 0).size() == 2);
    CHECK(count_stopping_rules(one, 1) == 1);

    const ScenarioTree two = build_tree(build_model({0.0, 0.5, 1.0}, {0.3, 0.3}, {{1.0}, {1.0}}, false));
    CHECK(count_stopping_rules(two, 0) == 5);
    const auto rules = enumerate_stopping_rules(two, 0);
    CHECK(rules.size() == 5);
    for (std::size_t a = 0; a < rules.size(); ++a)
        for (std::size_t b = a + 1; b < rules.size(); ++b) CHECK_FALSE(rules[a] == rules[b]);
    CHECK(rules.front().stops(0));
}

TEST_CASE("enumeration cap") {
    const ScenarioTree tree = build_tree(build_model({0.0, 1.0, 2.0, 3.0}, {0.2, 0.2, 0.2}, {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}, false));
    CHECK(count_stopping_rules(tree, 0, 100) == 101);
    try {
        for_each_stopping_rule(tree, 0, [](const StoppingRule&) {}, 100);
        FAIL("expected EnumerationTooLarge");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EnumerationTooLarge);
    }
}

TEST_CASE("Snell value on the reflected fixture") {
    const ScenarioTree tree = testing::one_step_tree();
    const NodeField xi = testing::jump_indicator(tree);
    const Obstacle l = testing::root_barrier(tree, 0.5);
    const SnellResult r = snell_value(tree, zero_generator(), xi, l, 0);
    CHECK(r.value == doctest::Approx(0.5));
    CHECK(r.best_rule.stops(0));
    CHECK(r.rules == 2);

    const RbsdeSolution sol = rbsde_solve(tree, zero_generator(), xi, l);
    CHECK(hitting_rule(tree, sol, l, 0).stops(0));
}

TEST_CASE("inactive obstacle means stopping at the leaves") {
    const ScenarioTree tree = testing::one_step_tree();
    const NodeField xi = testing::jump_indicator(tree);
    const SnellResult r = snell_value(tree, entropic(1.0), xi, Obstacle::inactive(), 0);
    CHECK(r.value == doctest::Approx(bsde_solve(tree, entropic(1.0), xi).root()));
    CHECK_FALSE(r.best_rule.stops(0));

    const RbsdeSolution sol = bsde_solve(tree, entropic(1.0), xi);
    CHECK_FALSE(hitting_rule(tree, sol, Obstacle::inactive(), 0).stops(0));
}

TEST_CASE("enumeration agrees with the solver on random instances") {
    for (std::size_t k = 0; k < 12; ++k) {
        const Instance inst = random_instance(77, k);
        const RbsdeSolution sol = rbsde_solve(inst.tree, inst.gen, inst.terminal, inst.obstacle);
        const SnellResult r = snell_value(inst.tree, inst.gen, inst.terminal, inst.obstacle, 0);
        CHECK(r.value == doctest::Approx(sol.root()).epsilon(1e-11));
        const StoppingRule hit = hitting_rule(inst.tree, sol, inst.obstacle, 0);
        const NodeField eta = stopping_payoff(inst.tree, inst.terminal, inst.obstacle);
        CHECK(evaluation_operator(inst.tree, inst.gen, hit, eta, 0) == doctest::Approx(sol.root()).epsilon(1e-11));
    }
}

TEST_CASE("utility oracle without trading") {
    const MppModel model = build_model({0.0, 0.5, 1.0}, {0.3, 0.3}, {{1.0}, {1.0}}, false);
    MarketModel market;
    market.jump_sizes = {0.2};
    market.constraint_set = {0.0};
    market.risk_aversion = 1.5;
    const MarketTree mt = build_market_tree(market, model);

    const NodeField b0(mt.tree, FieldDomain::Leaves, 0.4);
    const UtilityResult r = brute_force_utility(mt, b0, 1.0);
    CHECK(r.strategies == 1);
    CHECK(r.value == doctest::Approx(-std::exp(-1.5 * (1.0 - 0.4))));
    CHECK(implied_price(r.value, 1.0, 1.5) == doctest::Approx(0.4));

    const NodeField zero(mt.tree, FieldDomain::Leaves, 0.0);
    CHECK(brute_force_utility(mt, zero, 2.0).value == doctest::Approx(-std::exp(-3.0)));
}

TEST_CASE("oracle CSV layout") {
    const std::string csv = oracle_csv({{"a", 1.0, 1.5, 3, 2.0}}, false);
    CHECK(csv == "instance_id,oracle_value,solver_value,abs_gap,n_rules_or_strategies\na,1,1.5,0.5,3\n");
    CHECK(oracle_csv({{"a", 1.0, 1.5, 3, 2.0}}, true).find("wallclock_ms") != std::string::npos);
}

}
