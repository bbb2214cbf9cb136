#pragma once

#include <iosfwd>
#include <vector>

#include "rbsde/generator.hpp"
#include "rbsde/mpp.hpp"
#include "rbsde/solver.hpp"

namespace rbsde {

/// Single risky asset with zero interest rate. Per-step vectors of length
/// one are broadcast over all steps.
struct MarketModel {
    std::vector<double> drift{0.0};       // b_i, per unit time
    std::vector<double> volatility{0.0};  // sigma_i, per square-root time
    std::vector<double> jump_sizes;       // beta(e) > -1 per mark
    std::vector<double> constraint_set;   // admissible positions pi (currency units)
    double risk_aversion = 1.0;
    double s0 = 1.0;

    double b(std::size_t step) const;
    double sigma(std::size_t step) const;
    double theta(std::size_t step) const;  // b / sigma, zero in pure-jump mode
    bool pure_jump() const;
};

/// Throws PricePositivityViolated, EmptyConstraintSet or InvalidArgument.
void validate_market(const MarketModel& market, const MppModel& model);

struct MarketTree {
    MarketModel market;
    ScenarioTree tree;
    NodeField price;

    /// Return R = b dt + sigma dW + beta(e) 1{jump e} over one step.
    double step_return(std::size_t step, const Outcome& outcome) const;
    /// Return on the edge from the parent into `child`.
    double edge_return(NodeId child) const;
};

MarketTree build_market_tree(const MarketModel& market, const MppModel& model,
                             std::size_t node_cap = default_node_cap);

struct PricingValue {
    double value = 0.0;
    double argmin = 0.0;
};

/// Continuous-time driver f(z, u) = min_pi [ (a/2)|pi sigma - (z + theta/a)|^2
/// + (1/a) j_a(u - pi beta) ] - theta z - theta^2/(2a), a the risk aversion.
PricingValue pricing_driver(const MarketModel& market, std::size_t step, double z, std::span<const double> u,
                            std::span<const double> phi);

/// One tree step of the utility recursion: (1/a) ln min_pi E[exp(a (y' - pi R))]
/// minus the conditional mean of y'.
PricingValue pricing_step(const MarketTree& mt, const StepContext& ctx);

/// Generator of the indifference price. The exact step is the utility
/// recursion above; Euler stepping splits the driver between dA and dt.
GeneratorSpec pricing_generator(const MarketTree& mt);

struct PricingResult {
    RbsdeSolution solution;
    NodeField pi_star;  // internal nodes
};

PricingResult european_price(const MarketTree& mt, const GeneratorSpec& gen, const NodeField& payoff,
                             const SolverOptions& options = {});

struct BoundaryRow {
    std::size_t step = 0;
    double t = 0.0;
    double min_price_exercised = 0.0;  // NaN when nothing is exercised
    double max_price_continued = 0.0;  // NaN when everything is exercised
};

struct AmericanResult {
    RbsdeSolution solution;
    NodeField pi_star;
    StoppingRule exercise;  // first hitting of {Y = payoff}
    NodeField exercise_flag;  // 1 where Y = payoff, else 0
    std::vector<BoundaryRow> boundary;  // one row per decision date t_0..t_{N-1}
};

/// `payoff` covers all nodes; its leaf values are the terminal claim.
AmericanResult american_price(const MarketTree& mt, const GeneratorSpec& gen, const NodeField& payoff,
                              const SolverOptions& options = {});

/// Optimal positions of a solved price process.
NodeField extract_strategy(const MarketTree& mt, const GeneratorSpec& gen, const RbsdeSolution& sol);

/// node_id,t,S,Y,exercise_flag,pi_star
void write_price_csv(std::ostream& out, const MarketTree& mt, const RbsdeSolution& sol, const NodeField& pi_star,
                     const NodeField* exercise_flag = nullptr);

/// t,min_price_exercised,max_price_continued
void write_boundary_csv(std::ostream& out, const std::vector<BoundaryRow>& rows);

}  // namespace rbsde
