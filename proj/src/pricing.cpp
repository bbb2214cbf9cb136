#include "rbsde/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>

#include "rbsde/csv.hpp"
#include "rbsde/error.hpp"
#include "rbsde/oracle.hpp"

namespace rbsde {

namespace {

double per_step(const std::vector<double>& v, std::size_t step, const char* name) {
    if (v.size() == 1) return v.front();
    if (step >= v.size()) fail(ErrorCode::LengthMismatch, std::string(name) + " has no entry for this step");
    return v[step];
}

// search order for the argmin: smallest |pi| first, then smallest pi
std::vector<double> tie_ordered(std::vector<double> c) {
    std::sort(c.begin(), c.end(), [](double a, double b) {
        if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
        return a < b;
    });
    return c;
}

double market_return(const MarketModel& m, const MppModel& model, std::size_t step, const Outcome& o) {
    const double dt = model.dt(step);
    double r = m.b(step) * dt;
    if (o.brownian != 0) r += o.brownian * m.sigma(step) * std::sqrt(dt);
    if (o.jump()) r += m.jump_sizes.at(static_cast<std::size_t>(o.mark));
    return r;
}

struct PricingData {
    MarketModel market;
    MppModel model;
    std::vector<double> ordered;
};

PricingValue exact_step(const PricingData& d, const StepContext& ctx) {
    const double a = d.market.risk_aversion;
    PricingValue best{std::numeric_limits<double>::infinity(), 0.0};
    for (double pi : d.ordered) {
        double peak = -std::numeric_limits<double>::infinity();
        std::vector<double> expo(ctx.child_values.size());
        for (std::size_t k = 0; k < expo.size(); ++k) {
            if (ctx.child_probs[k] <= 0.0) continue;
            expo[k] = a * (ctx.child_values[k] - pi * market_return(d.market, d.model, ctx.step, ctx.child_outcomes[k]));
            peak = std::max(peak, expo[k]);
        }
        double s = 0.0;
        for (std::size_t k = 0; k < expo.size(); ++k)
            if (ctx.child_probs[k] > 0.0) s += ctx.child_probs[k] * std::exp(expo[k] - peak);
        const double log_value = peak + std::log(s);
        if (log_value < best.value) best = {log_value, pi};
    }
    best.value = best.value / a - ctx.mean;
    return best;
}

PricingValue continuous_driver(const MarketModel& m, const std::vector<double>& ordered, std::size_t step, double z,
                               std::span<const double> u, std::span<const double> phi, double weight_dt,
                               double weight_da) {
    const double a = m.risk_aversion;
    const double sigma = m.sigma(step);
    const double theta = m.theta(step);
    std::vector<double> shifted(u.size());
    PricingValue best{std::numeric_limits<double>::infinity(), 0.0};
    for (double pi : ordered) {
        for (std::size_t e = 0; e < u.size(); ++e) shifted[e] = u[e] - pi * m.jump_sizes[e];
        const double gap = pi * sigma - (z + theta / a);
        const double v = 0.5 * a * gap * gap * weight_dt + j_lambda(a, shifted, phi) / a * weight_da;
        if (v < best.value) best = {v, pi};
    }
    best.value -= (theta * z + theta * theta / (2.0 * a)) * weight_dt;
    return best;
}

}  // namespace

double MarketModel::b(std::size_t step) const { return per_step(drift, step, "drift"); }
double MarketModel::sigma(std::size_t step) const { return per_step(volatility, step, "volatility"); }
double MarketModel::theta(std::size_t step) const {
    const double s = sigma(step);
    return s > 0.0 ? b(step) / s : 0.0;
}
bool MarketModel::pure_jump() const {
    return std::all_of(volatility.begin(), volatility.end(), [](double s) { return s == 0.0; });
}

void validate_market(const MarketModel& m, const MppModel& model) {
    if (m.constraint_set.empty()) fail(ErrorCode::EmptyConstraintSet, "constraint set C is empty");
    if (!(m.risk_aversion > 0.0)) fail(ErrorCode::InvalidArgument, "risk aversion must be positive");
    if (!(m.s0 > 0.0)) fail(ErrorCode::PricePositivityViolated, "initial price must be positive");
    if (m.jump_sizes.size() != model.mark_count())
        fail(ErrorCode::LengthMismatch, "one jump size per mark is required");
    for (double beta : m.jump_sizes)
        if (!(beta > -1.0)) fail(ErrorCode::PricePositivityViolated, "jump size must exceed -1");
    for (const auto* v : {&m.drift, &m.volatility})
        if (v->size() != 1 && v->size() != model.steps())
            fail(ErrorCode::LengthMismatch, "drift and volatility need one entry or one per step");
    for (std::size_t i = 0; i < model.steps(); ++i) {
        if (m.sigma(i) < 0.0) fail(ErrorCode::InvalidArgument, "volatility must be nonnegative");
        if (m.sigma(i) == 0.0 && m.b(i) != 0.0)
            fail(ErrorCode::InvalidArgument, "pure-jump steps (sigma = 0) require zero drift");
    }
    if (m.pure_jump() == model.brownian)
        fail(ErrorCode::InvalidArgument,
             m.pure_jump() ? "pure-jump market on a tree with Brownian branching"
                           : "positive volatility needs Brownian branching");
    for (std::size_t i = 0; i < model.steps(); ++i) {
        for (int mark = -1; mark < static_cast<int>(model.mark_count()); ++mark) {
            for (int w : model.brownian ? std::vector<int>{1, -1} : std::vector<int>{0}) {
                if (!(1.0 + market_return(m, model, i, Outcome{mark, w}) > 0.0))
                    fail(ErrorCode::PricePositivityViolated,
                         "nonpositive price factor at step " + std::to_string(i));
            }
        }
    }
}

double MarketTree::step_return(std::size_t step, const Outcome& outcome) const {
    return market_return(market, tree.model(), step, outcome);
}

double MarketTree::edge_return(NodeId child) const {
    const TreeNode& n = tree.node(child);
    if (n.parent == no_node) fail(ErrorCode::InvalidArgument, "the root has no incoming edge");
    return step_return(n.depth - 1, n.outcome);
}

MarketTree build_market_tree(const MarketModel& market, const MppModel& model, std::size_t node_cap) {
    validate_market(market, model);
    MarketTree mt{market, build_tree(model, node_cap), {}};
    mt.price = NodeField(mt.tree, FieldDomain::AllNodes, market.s0);
    for (NodeId id = 1; id < mt.tree.size(); ++id)
        mt.price[id] = mt.price[mt.tree.node(id).parent] * (1.0 + mt.edge_return(id));
    return mt;
}

PricingValue pricing_driver(const MarketModel& market, std::size_t step, double z, std::span<const double> u,
                            std::span<const double> phi) {
    if (market.constraint_set.empty()) fail(ErrorCode::EmptyConstraintSet, "constraint set C is empty");
    return continuous_driver(market, tie_ordered(market.constraint_set), step, z, u, phi, 1.0, 1.0);
}

PricingValue pricing_step(const MarketTree& mt, const StepContext& ctx) {
    const PricingData d{mt.market, mt.tree.model(), tie_ordered(mt.market.constraint_set)};
    return exact_step(d, ctx);
}

GeneratorSpec pricing_generator(const MarketTree& mt) {
    const MarketModel& m = mt.market;
    const MppModel& model = mt.tree.model();
    if (m.constraint_set.empty()) fail(ErrorCode::EmptyConstraintSet, "constraint set C is empty");
    auto data = std::make_shared<const PricingData>(PricingData{m, model, tie_ordered(m.constraint_set)});

    GeneratorParams p;
    p.lambda = m.risk_aversion;
    p.gamma = m.risk_aversion;
    // a minimum of convex functions over a finite grid is convex only for one point
    p.convexity = m.constraint_set.size() == 1 ? Convexity::Convex : Convexity::None;
    p.alpha.resize(model.steps());
    double c0 = 0.0;
    for (std::size_t i = 0; i < model.steps(); ++i) {
        p.alpha[i] = m.theta(i) * m.theta(i) / m.risk_aversion;
        const auto phi = model.phi(i);
        for (double pi : m.constraint_set) {
            double norm2 = 0.0;
            for (std::size_t e = 0; e < phi.size(); ++e) {
                const double g = std::expm1(-m.risk_aversion * pi * m.jump_sizes[e]);
                norm2 += g * g * phi[e];
            }
            c0 = std::max(c0, std::sqrt(norm2));
        }
    }
    p.c0 = c0;

    GeneratorSpec gen("pricing", p, [data](const DriverArgs& a) {
        return continuous_driver(data->market, data->ordered, a.step, a.z, a.u, a.phi, 1.0, 1.0).value;
    });
    gen.with_exact_step([data](const StepContext& ctx, double) { return exact_step(*data, ctx).value; });
    gen.with_euler_step([data](const StepContext& ctx, double) {
        return continuous_driver(data->market, data->ordered, ctx.step, ctx.z, ctx.u, ctx.phi, ctx.delta_t,
                                 ctx.delta_a)
            .value;
    });
    return gen;
}

NodeField extract_strategy(const MarketTree& mt, const GeneratorSpec& gen, const RbsdeSolution& sol) {
    (void)gen;
    const PricingData d{mt.market, mt.tree.model(), tie_ordered(mt.market.constraint_set)};
    NodeField pi(mt.tree, FieldDomain::Internal, 0.0);
    for (NodeId id = 0; id < mt.tree.first_leaf(); ++id) {
        const TreeNode& n = mt.tree.node(id);
        const LocalStep s = local_step(mt.tree, id, sol.y.values().subspan(n.first_child, n.child_count));
        const StepContext ctx = s.context();
        if (sol.stepping == Stepping::Exact) {
            pi[id] = exact_step(d, ctx).argmin;
        } else {
            pi[id] = continuous_driver(d.market, d.ordered, ctx.step, ctx.z, ctx.u, ctx.phi, ctx.delta_t, ctx.delta_a)
                         .argmin;
        }
    }
    return pi;
}

PricingResult european_price(const MarketTree& mt, const GeneratorSpec& gen, const NodeField& payoff,
                             const SolverOptions& options) {
    PricingResult r;
    r.solution = bsde_solve(mt.tree, gen, payoff, options);
    r.pi_star = extract_strategy(mt, gen, r.solution);
    return r;
}

AmericanResult american_price(const MarketTree& mt, const GeneratorSpec& gen, const NodeField& payoff,
                              const SolverOptions& options) {
    require_domain(mt.tree, payoff, FieldDomain::AllNodes, "american payoff");
    const ScenarioTree& tree = mt.tree;
    AmericanResult r;
    const Obstacle obstacle = Obstacle::from_field(tree, payoff);
    r.solution = rbsde_solve(tree, gen, payoff, obstacle, options);
    r.pi_star = extract_strategy(mt, gen, r.solution);
    r.exercise = hitting_rule(tree, r.solution, obstacle, 0);
    r.exercise_flag = NodeField(tree, FieldDomain::AllNodes, 0.0);
    for (NodeId id = 0; id < tree.size(); ++id)
        r.exercise_flag[id] = std::abs(r.solution.y[id] - payoff[id]) <= hitting_tolerance ? 1.0 : 0.0;

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t d = 0; d < tree.depth(); ++d) {
        BoundaryRow row{d, tree.model().grid[d], nan, nan};
        for (NodeId id = tree.level_begin(d); id < tree.level_end(d); ++id) {
            const double s = mt.price[id];
            if (r.exercise_flag[id] != 0.0) {
                row.min_price_exercised = std::isnan(row.min_price_exercised) ? s : std::min(row.min_price_exercised, s);
            } else {
                row.max_price_continued = std::isnan(row.max_price_continued) ? s : std::max(row.max_price_continued, s);
            }
        }
        r.boundary.push_back(row);
    }
    return r;
}

void write_price_csv(std::ostream& out, const MarketTree& mt, const RbsdeSolution& sol, const NodeField& pi_star,
                     const NodeField* exercise_flag) {
    CsvWriter csv({"node_id", "t", "S", "Y", "exercise_flag", "pi_star"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (NodeId id = 0; id < mt.tree.size(); ++id) {
        const TreeNode& n = mt.tree.node(id);
        csv.cell(id).cell(mt.tree.model().grid[n.depth]).cell(mt.price[id]).cell(sol.y[id]);
        if (exercise_flag) csv.cell(static_cast<int>((*exercise_flag)[id]));
        else csv.cell(0);
        csv.cell(mt.tree.is_leaf(id) ? nan : pi_star[id]).end_row();
    }
    out << csv.str();
}

void write_boundary_csv(std::ostream& out, const std::vector<BoundaryRow>& rows) {
    CsvWriter csv({"t", "min_price_exercised", "max_price_continued"});
    for (const auto& r : rows) csv.cell(r.t).cell(r.min_price_exercised).cell(r.max_price_continued).end_row();
    out << csv.str();
}

}  // namespace rbsde
