#include <doctest.h>

#include <cmath>

#include "rbsde/error.hpp"
#include "rbsde/oracle.hpp"
#include "rbsde/pricing.hpp"

using namespace rbsde;

namespace {

MarketModel jump_market(std::vector<double> jumps, std::vector<double> c, double a = 1.0) {
    MarketModel m;
    m.jump_sizes = std::move(jumps);
    m.constraint_set = std::move(c);
    m.risk_aversion = a;
    return m;
}

MppModel steps_model(std::size_t n, std::vector<double> phi, bool brownian = false) {
    std::vector<double> grid;
    for (std::size_t i = 0; i <= n; ++i) grid.push_back(static_cast<double>(i) / static_cast<double>(n));
    return build_model(grid, std::vector<double>(n, 0.3), std::vector<std::vector<double>>(n, phi), brownian);
}

NodeField put_payoff(const MarketTree& mt, double strike) {
    return NodeField::from_function(mt.tree, FieldDomain::AllNodes,
                                    [&](NodeId id) { return std::max(strike - mt.price[id], 0.0); });
}

}  // namespace

TEST_SUITE("pricing") {

TEST_CASE("price factors") {
    const MarketTree pj = build_market_tree(jump_market({-0.5}, {0.0}), build_model({0.0, 1.0}, {0.2}, {{1.0}}, false));
    CHECK(pj.price[2] == doctest::Approx(0.5));
    CHECK(pj.price[1] == doctest::Approx(1.0));

    MarketModel bm;
    bm.volatility = {0.2};
    bm.jump_sizes = {0.0};
    bm.constraint_set = {0.0};
    const MarketTree mt = build_market_tree(bm, build_model({0.0, 1.0}, {0.2}, {{1.0}}, true));
    bool found = false;
    for (NodeId id = mt.tree.first_leaf(); id < mt.tree.size(); ++id) {
        const Outcome& o = mt.tree.node(id).outcome;
        if (!o.jump() && o.brownian == 1) {
            CHECK(mt.price[id] == doctest::Approx(1.2));
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("market validation") {
    const MppModel model = build_model({0.0, 1.0}, {0.2}, {{1.0}}, false);
    auto code = [&](const MarketModel& m) {
        try {
            validate_market(m, model);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::ConfigError;
    };
    CHECK(code(jump_market({-1.5}, {0.0})) == ErrorCode::PricePositivityViolated);
    CHECK(code(jump_market({0.1}, {})) == ErrorCode::EmptyConstraintSet);
    MarketModel drifting = jump_market({0.1}, {0.0});
    drifting.drift = {0.05};
    CHECK(code(drifting) == ErrorCode::InvalidArgument);
}

TEST_CASE("continuous driver hand values") {
    MarketModel m;
    m.volatility = {1.0};
    m.jump_sizes = {0.0};
    m.constraint_set = {0.0};
    m.risk_aversion = 1.7;
    const std::vector<double> u{0.0};
    const std::vector<double> phi{1.0};
    CHECK(pricing_driver(m, 0, 0.0, u, phi).value == doctest::Approx(0.0));
    CHECK(pricing_driver(m, 0, 1.0, u, phi).value == doctest::Approx(1.7 / 2.0));
    m.constraint_set = {0.0, 1.0};
    const PricingValue v = pricing_driver(m, 0, 1.0, u, phi);
    CHECK(v.value == doctest::Approx(0.0));
    CHECK(v.argmin == 1.0);
}

TEST_CASE("convexity in u holds for one position and fails for two") {
    const MarketModel single = jump_market({1.0}, {0.5});
    const MarketModel pair = jump_market({1.0}, {0.0, 1.0});
    const std::vector<double> phi{1.0};
    auto f = [&](const MarketModel& m, double u) { return pricing_driver(m, 0, 0.0, std::vector<double>{u}, phi).value; };
    for (double a : {-1.0, 0.0, 0.7}) {
        for (double b : {-0.4, 1.0, 2.0}) CHECK(f(single, 0.5 * (a + b)) <= 0.5 * (f(single, a) + f(single, b)) + 1e-12);
    }
    CHECK(f(pair, 0.5) > 0.5 * (f(pair, 0.0) + f(pair, 1.0)) + 0.1);

    const MppModel model = build_model({0.0, 1.0}, {0.2}, {{1.0}}, false);
    CHECK(pricing_generator(build_market_tree(single, model)).params().convexity == Convexity::Convex);
    CHECK(pricing_generator(build_market_tree(pair, model)).params().convexity == Convexity::None);
}

TEST_CASE("constant and zero claims") {
    const MarketTree mt = build_market_tree(jump_market({0.3}, {0.0}), steps_model(2, {1.0}));
    const GeneratorSpec gen = pricing_generator(mt);
    const PricingResult r = european_price(mt, gen, NodeField(mt.tree, FieldDomain::Leaves, 0.6));
    for (NodeId id = 0; id < mt.tree.size(); ++id) CHECK(r.solution.y[id] == doctest::Approx(0.6));

    const MarketTree traded = build_market_tree(jump_market({0.3, -0.2}, {-1.0, 0.0, 1.0}), steps_model(2, {0.5, 0.5}));
    const PricingResult z = european_price(traded, pricing_generator(traded), NodeField(traded.tree, FieldDomain::Leaves, 0.0));
    CHECK(z.solution.root() <= 1e-15);
}

TEST_CASE("indifference price matches strategy enumeration") {
    const MarketTree mt = build_market_tree(jump_market({0.4}, {-0.5, 0.0, 0.5}, 1.3), steps_model(2, {1.0}));
    const NodeField call = NodeField::from_function(mt.tree, FieldDomain::Leaves,
                                                    [&](NodeId id) { return std::max(mt.price[id] - 1.0, 0.0); });
    const PricingResult r = european_price(mt, pricing_generator(mt), call);
    for (double x : {0.0, 2.0}) {
        const UtilityResult oracle = brute_force_utility(mt, call, x);
        CHECK(oracle.strategies == 27);
        const double bsde = -std::exp(-1.3 * (x - r.solution.root()));
        CHECK(std::abs(oracle.value - bsde) <= 1e-6 * std::abs(oracle.value));
        CHECK(replay_strategy(mt, call, x, r.pi_star) == doctest::Approx(oracle.value).epsilon(1e-12));
    }
}

TEST_CASE("American price without early exercise value equals the European price") {
    const MarketTree mt = build_market_tree(jump_market({0.3, -0.25}, {-1.0, 0.0, 1.0}), steps_model(3, {0.5, 0.5}));
    const GeneratorSpec gen = pricing_generator(mt);
    NodeField payoff = put_payoff(mt, 1.0);
    for (NodeId id = 0; id < mt.tree.first_leaf(); ++id) payoff[id] = -1e9;
    const AmericanResult amer = american_price(mt, gen, payoff);
    const PricingResult euro = european_price(mt, gen, payoff);
    for (NodeId id = 0; id < mt.tree.size(); ++id) CHECK(amer.solution.y[id] == doctest::Approx(euro.solution.y[id]));
}

TEST_CASE("a dominating payoff at the root forces immediate exercise") {
    const MarketTree mt = build_market_tree(jump_market({0.3, -0.25}, {0.0, 1.0}), steps_model(2, {0.5, 0.5}));
    const GeneratorSpec gen = pricing_generator(mt);
    NodeField payoff = put_payoff(mt, 1.0);
    const PricingResult euro = european_price(mt, gen, payoff);
    for (NodeId id = 0; id < mt.tree.first_leaf(); ++id) payoff[id] = -1e9;
    payoff[0] = euro.solution.root() + 1.0;
    const AmericanResult amer = american_price(mt, gen, payoff);
    CHECK(amer.solution.root() == doctest::Approx(payoff[0]));
    CHECK(amer.exercise.stops(0));
}

TEST_CASE("American put carries an early-exercise premium") {
    const MarketTree mt = build_market_tree(jump_market({0.25, -0.2}, {-1.0, 0.0, 1.0}), steps_model(3, {0.5, 0.5}));
    const GeneratorSpec gen = pricing_generator(mt);
    const NodeField payoff = put_payoff(mt, 1.05);
    const AmericanResult amer = american_price(mt, gen, payoff);
    const PricingResult euro = european_price(mt, gen, payoff);
    CHECK(amer.solution.root() > euro.solution.root() + 1e-6);
    for (NodeId id = 0; id < mt.tree.size(); ++id) {
        CHECK(amer.solution.y[id] >= euro.solution.y[id] - 1e-12);
        CHECK(amer.solution.y[id] >= payoff[id] - 1e-12);
    }
    const Obstacle l = Obstacle::from_field(mt.tree, payoff);
    const SnellResult snell = snell_value(mt.tree, gen, payoff, l, 0);
    CHECK(snell.value == doctest::Approx(amer.solution.root()).epsilon(1e-11));
    CHECK(amer.boundary.size() == mt.tree.depth());
}

}
