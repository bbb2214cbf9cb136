#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rbsde/generator.hpp"
#include "rbsde/mpp.hpp"
#include "rbsde/pricing.hpp"
#include "rbsde/solver.hpp"

namespace rbsde {

/// A seeded random RBSDE instance on a pure-jump tree.
struct Instance {
    std::string id;
    std::string family;  // linear_in_u, entropic, neg_entropic
    ScenarioTree tree;
    GeneratorSpec gen;
    NodeField terminal;
    Obstacle obstacle;
};

/// Deterministic in (seed, index). Sizes stay within N <= 4, K <= 2, without
/// the combination N = 4, K = 2 whose stopping rules are too many to enumerate.
Instance random_instance(std::uint64_t seed, std::size_t index);

/// Lower member of a comparison pair built from `upper`: terminal and
/// obstacle pushed down and the generator shifted down by random amounts.
struct ComparisonPair {
    Instance lower;
    Instance upper;
};
ComparisonPair comparison_pair(const Instance& base, std::uint64_t seed, std::size_t index);

/// Seeded random market for the indifference oracle, small enough for the
/// strategy enumeration.
struct MarketInstance {
    std::string id;
    MarketTree market;
    NodeField claim;   // leaves
    NodeField payoff;  // all nodes (American exercise value)
};
MarketInstance random_market(std::uint64_t seed, std::size_t index);

/// Outcome of one battery: a verdict, a one-line summary and a CSV body.
struct BatteryOutcome {
    bool pass = false;
    std::string summary;
    std::string csv;
};

struct BatteryOptions {
    std::uint64_t seed = 20240601;
    std::size_t instances = 200;
    std::size_t markets = 20;
    std::vector<double> p_values{1.0, 2.0, 4.0};
};

BatteryOutcome snell_battery(const BatteryOptions& options);        // Snell equivalence
BatteryOutcome barrier_battery(const BatteryOptions& options);      // flat-off and barrier
BatteryOutcome comparison_battery(const BatteryOptions& options);   // comparison pairs
BatteryOutcome bound_battery(const BatteryOptions& options);        // exponential Y-bound
BatteryOutcome ladder_experiment(const BatteryOptions& options);    // inf-convolution ladder
BatteryOutcome j_lambda_battery(const BatteryOptions& options);     // j_lambda properties
BatteryOutcome indifference_battery(const BatteryOptions& options); // utility oracle vs BSDE
BatteryOutcome american_battery(const BatteryOptions& options);     // American dominance and representation
BatteryOutcome martingale_battery(const BatteryOptions& options);   // compensated-integral identity

/// Fixed instance used by the ladder experiment: Entropic(1) on N = 3, K = 2.
Instance ladder_instance();

/// Runs every battery; keys are CSV file names.
std::map<std::string, BatteryOutcome> run_full_battery(const BatteryOptions& options);

}  // namespace rbsde
