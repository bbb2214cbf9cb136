#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rbsde/generator.hpp"
#include "rbsde/mpp.hpp"
#include "rbsde/pricing.hpp"
#include "rbsde/solver.hpp"

namespace rbsde {

inline constexpr std::size_t rule_enumeration_cap = std::size_t{1} << 20;
inline constexpr std::size_t strategy_enumeration_cap = std::size_t{1} << 22;
inline constexpr double hitting_tolerance = 1e-10;

/// Number of stopping rules on the subtree of `from`, saturating at cap + 1.
/// With `allow_early_stop` false only the stop-at-leaves rule is counted.
std::size_t count_stopping_rules(const ScenarioTree& tree, NodeId from, std::size_t cap = rule_enumeration_cap,
                                 bool allow_early_stop = true);

/// Visits every rule on the subtree of `from`, stop-at-`from` first. Nodes
/// outside the subtree and below the first stop are marked Stop.
void for_each_stopping_rule(const ScenarioTree& tree, NodeId from,
                            const std::function<void(const StoppingRule&)>& visit,
                            std::size_t cap = rule_enumeration_cap, bool allow_early_stop = true);

std::vector<StoppingRule> enumerate_stopping_rules(const ScenarioTree& tree, NodeId from,
                                                   std::size_t cap = rule_enumeration_cap);

struct SnellResult {
    double value = 0.0;
    StoppingRule best_rule;
    std::size_t rules = 0;
};

/// Max over all stopping rules of E^f_{from,tau}[xi 1{tau = T} + L_tau 1{tau < T}].
/// Ties keep the first rule in enumeration order.
SnellResult snell_value(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                        const Obstacle& obstacle, NodeId from, const SolverOptions& options = {},
                        std::size_t cap = rule_enumeration_cap);

/// Stopping payoff: xi at leaves, L elsewhere (NaN when L is inactive).
NodeField stopping_payoff(const ScenarioTree& tree, const NodeField& terminal, const Obstacle& obstacle);

/// Stops where |y - L| <= hitting_tolerance, and at leaves.
StoppingRule hitting_rule(const ScenarioTree& tree, const RbsdeSolution& sol, const Obstacle& obstacle, NodeId from);

struct UtilityResult {
    double value = 0.0;   // sup over strategies of E[-exp(-a (X_T - B))]
    NodeField strategy;   // maximizing position per internal node
    std::size_t strategies = 0;
};

/// Enumerates every position field pi: internal nodes -> C and simulates the
/// wealth x + sum pi R path by path.
UtilityResult brute_force_utility(const MarketTree& mt, const NodeField& claim, double x,
                                  std::size_t cap = strategy_enumeration_cap);

/// Expected utility of one position field.
double replay_strategy(const MarketTree& mt, const NodeField& claim, double x, const NodeField& strategy);

/// The price implied by an expected utility at wealth x: x + ln(-V) / a.
double implied_price(double utility, double x, double risk_aversion);

struct OracleRow {
    std::string instance_id;
    double oracle_value = 0.0;
    double solver_value = 0.0;
    std::size_t count = 0;
    double wallclock_ms = 0.0;
};

/// instance_id,oracle_value,solver_value,abs_gap,n_rules_or_strategies[,wallclock_ms]
std::string oracle_csv(const std::vector<OracleRow>& rows, bool with_timings);

}  // namespace rbsde
