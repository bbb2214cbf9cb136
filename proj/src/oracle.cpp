#include "rbsde/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rbsde/csv.hpp"
#include "rbsde/error.hpp"

namespace rbsde {

namespace {

std::size_t saturating_mul(std::size_t a, std::size_t b, std::size_t limit) {
    if (a == 0 || b == 0) return 0;
    if (a > limit / b) return limit;
    return std::min(a * b, limit);
}

std::size_t count_from(const ScenarioTree& tree, NodeId id, std::size_t limit, bool early) {
    const TreeNode& n = tree.node(id);
    if (n.child_count == 0) return 1;
    std::size_t product = 1;
    for (std::size_t c = 0; c < n.child_count; ++c)
        product = saturating_mul(product, count_from(tree, n.first_child + c, limit, early), limit);
    return std::min(product + (early ? 1 : 0), limit);
}

struct RuleWalker {
    const ScenarioTree& tree;
    const std::function<void(const StoppingRule&)>& visit;
    bool early;
    StoppingRule rule;

    void walk(std::vector<NodeId> frontier) {
        if (frontier.empty()) {
            visit(rule);
            return;
        }
        const NodeId id = frontier.back();
        frontier.pop_back();
        const TreeNode& n = tree.node(id);
        if (n.child_count == 0) {
            walk(std::move(frontier));
            return;
        }
        if (early) walk(frontier);
        rule.set(id, false);
        for (std::size_t c = n.child_count; c-- > 0;) frontier.push_back(n.first_child + c);
        walk(std::move(frontier));
        rule.set(id, true);
    }
};

}  // namespace

std::size_t count_stopping_rules(const ScenarioTree& tree, NodeId from, std::size_t cap, bool allow_early_stop) {
    const std::size_t limit = cap == std::numeric_limits<std::size_t>::max() ? cap : cap + 1;
    return count_from(tree, from, limit, allow_early_stop);
}

void for_each_stopping_rule(const ScenarioTree& tree, NodeId from,
                            const std::function<void(const StoppingRule&)>& visit, std::size_t cap,
                            bool allow_early_stop) {
    const std::size_t count = count_stopping_rules(tree, from, cap, allow_early_stop);
    if (count > cap) {
        fail(ErrorCode::EnumerationTooLarge,
             "more than " + std::to_string(cap) + " stopping rules below node " + std::to_string(from));
    }
    RuleWalker walker{tree, visit, allow_early_stop, StoppingRule(tree, true)};
    walker.walk({from});
}

std::vector<StoppingRule> enumerate_stopping_rules(const ScenarioTree& tree, NodeId from, std::size_t cap) {
    std::vector<StoppingRule> rules;
    for_each_stopping_rule(tree, from, [&](const StoppingRule& r) { rules.push_back(r); }, cap);
    return rules;
}

NodeField stopping_payoff(const ScenarioTree& tree, const NodeField& terminal, const Obstacle& obstacle) {
    require_domain(tree, terminal, FieldDomain::Leaves, "terminal");
    NodeField eta(tree, FieldDomain::AllNodes, std::numeric_limits<double>::quiet_NaN());
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (tree.is_leaf(id)) eta[id] = terminal[id];
        else if (obstacle.active()) eta[id] = obstacle.at(id);
    }
    return eta;
}

SnellResult snell_value(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                        const Obstacle& obstacle, NodeId from, const SolverOptions& options, std::size_t cap) {
    const NodeField eta = stopping_payoff(tree, terminal, obstacle);
    SnellResult best;
    best.value = -std::numeric_limits<double>::infinity();
    for_each_stopping_rule(
        tree, from,
        [&](const StoppingRule& rule) {
            ++best.rules;
            const double v = evaluation_operator(tree, gen, rule, eta, from, options);
            if (v > best.value) {
                best.value = v;
                best.best_rule = rule;
            }
        },
        cap, obstacle.active());
    return best;
}

StoppingRule hitting_rule(const ScenarioTree& tree, const RbsdeSolution& sol, const Obstacle& obstacle, NodeId from) {
    StoppingRule rule(tree, true);
    std::vector<NodeId> stack{from};
    while (!stack.empty()) {
        const NodeId id = stack.back();
        stack.pop_back();
        const TreeNode& n = tree.node(id);
        if (n.child_count == 0) continue;
        const bool hit = obstacle.active() && std::abs(sol.y[id] - obstacle.at(id)) <= hitting_tolerance;
        rule.set(id, hit);
        if (!hit)
            for (std::size_t c = 0; c < n.child_count; ++c) stack.push_back(n.first_child + c);
    }
    return rule;
}

// ---- utility maximization ------------------------------------------------------

namespace {

struct LeafPaths {
    std::size_t depth = 0;
    std::vector<NodeId> ancestors;  // leaf-major, depth entries per leaf
    std::vector<double> returns;    // return on the edge leaving each ancestor
};

LeafPaths leaf_paths(const MarketTree& mt) {
    const ScenarioTree& tree = mt.tree;
    LeafPaths p;
    p.depth = tree.depth();
    p.ancestors.resize(tree.leaf_count() * p.depth);
    p.returns.resize(p.ancestors.size());
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) {
        const std::size_t base = (leaf - tree.first_leaf()) * p.depth;
        NodeId child = leaf;
        for (NodeId parent = tree.node(leaf).parent; parent != no_node; child = parent, parent = tree.node(parent).parent) {
            const std::size_t d = tree.node(parent).depth;
            p.ancestors[base + d] = parent;
            p.returns[base + d] = mt.edge_return(child);
        }
    }
    return p;
}

}  // namespace

double implied_price(double utility, double x, double risk_aversion) {
    return x + std::log(-utility) / risk_aversion;
}

double replay_strategy(const MarketTree& mt, const NodeField& claim, double x, const NodeField& strategy) {
    const ScenarioTree& tree = mt.tree;
    require_domain(tree, claim, FieldDomain::Leaves, "claim");
    require_domain(tree, strategy, FieldDomain::Internal, "strategy");
    const LeafPaths paths = leaf_paths(mt);
    const double a = mt.market.risk_aversion;
    double value = 0.0;
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) {
        const std::size_t base = (leaf - tree.first_leaf()) * paths.depth;
        double w = x;
        for (std::size_t d = 0; d < paths.depth; ++d) w += strategy[paths.ancestors[base + d]] * paths.returns[base + d];
        value += tree.node(leaf).path_prob * -std::exp(-a * (w - claim[leaf]));
    }
    return value;
}

UtilityResult brute_force_utility(const MarketTree& mt, const NodeField& claim, double x, std::size_t cap) {
    const ScenarioTree& tree = mt.tree;
    require_domain(tree, claim, FieldDomain::Leaves, "claim");
    const std::vector<double>& grid = mt.market.constraint_set;
    if (grid.empty()) fail(ErrorCode::EmptyConstraintSet, "constraint set C is empty");
    const std::size_t internal = tree.first_leaf();
    std::size_t count = 1;
    for (std::size_t k = 0; k < internal; ++k) count = saturating_mul(count, grid.size(), cap + 1);
    if (count > cap) {
        fail(ErrorCode::EnumerationTooLarge,
             std::to_string(grid.size()) + "^" + std::to_string(internal) + " strategy fields exceed the cap " +
                 std::to_string(cap));
    }

    const LeafPaths paths = leaf_paths(mt);
    const double a = mt.market.risk_aversion;
    const std::size_t leaves = tree.leaf_count();
    std::vector<std::size_t> digit(internal, 0);
    std::vector<double> utility(leaves);

    auto refresh = [&](NodeId first, NodeId last) {
        for (NodeId leaf = first; leaf < last; ++leaf) {
            const std::size_t base = (leaf - tree.first_leaf()) * paths.depth;
            double w = x;
            for (std::size_t d = 0; d < paths.depth; ++d)
                w += grid[digit[paths.ancestors[base + d]]] * paths.returns[base + d];
            utility[leaf - tree.first_leaf()] = -std::exp(-a * (w - claim[leaf]));
        }
    };
    auto total = [&] {
        double s = 0.0;
        for (std::size_t k = 0; k < leaves; ++k) s += tree.node(tree.first_leaf() + k).path_prob * utility[k];
        return s;
    };

    refresh(tree.first_leaf(), tree.size());
    UtilityResult best;
    best.value = total();
    std::vector<std::size_t> best_digit = digit;
    best.strategies = 1;
    // odometer over the fields, last internal node fastest; a carry resets
    // every node after the incremented one
    while (internal > 0) {
        std::size_t pos = internal;
        bool done = false;
        while (true) {
            --pos;
            if (++digit[pos] < grid.size()) break;
            digit[pos] = 0;
            if (pos == 0) {
                done = true;
                break;
            }
        }
        if (done) break;
        NodeId first = tree.size();
        NodeId last = tree.first_leaf();
        for (NodeId id = pos; id < internal; ++id) {
            const auto [f, l] = tree.leaf_range(id);
            first = std::min(first, f);
            last = std::max(last, l);
        }
        refresh(first, last);
        ++best.strategies;
        const double v = total();
        if (v > best.value) {
            best.value = v;
            best_digit = digit;
        }
    }

    best.strategy = NodeField(tree, FieldDomain::Internal, 0.0);
    for (NodeId id = 0; id < internal; ++id) best.strategy[id] = grid[best_digit[id]];
    return best;
}

std::string oracle_csv(const std::vector<OracleRow>& rows, bool with_timings) {
    std::vector<std::string> header{"instance_id", "oracle_value", "solver_value", "abs_gap", "n_rules_or_strategies"};
    if (with_timings) header.push_back("wallclock_ms");
    CsvWriter csv(header);
    for (const auto& r : rows) {
        csv.cell(r.instance_id).cell(r.oracle_value).cell(r.solver_value).cell(std::abs(r.oracle_value - r.solver_value));
        csv.cell(r.count);
        if (with_timings) csv.cell(r.wallclock_ms);
        csv.end_row();
    }
    return csv.str();
}

}  // namespace rbsde
