#include "rbsde/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "rbsde/csv.hpp"
#include "rbsde/error.hpp"

namespace rbsde {

Obstacle Obstacle::from_field(const ScenarioTree& tree, NodeField field) {
    require_domain(tree, field, FieldDomain::AllNodes, "obstacle");
    Obstacle o;
    o.active_ = true;
    o.field_ = std::move(field);
    return o;
}

double Obstacle::at(NodeId id) const {
    return active_ ? field_[id] : -std::numeric_limits<double>::infinity();
}

StepContext LocalStep::context() const {
    StepContext ctx;
    ctx.node = node;
    ctx.step = step;
    ctx.delta_a = delta_a;
    ctx.delta_t = delta_t;
    ctx.phi = phi;
    ctx.mean = mean;
    ctx.z = z;
    ctx.u = u;
    ctx.child_values = child_values;
    ctx.child_probs = child_probs;
    ctx.child_outcomes = child_outcomes;
    return ctx;
}

LocalStep local_step(const ScenarioTree& tree, NodeId node, std::span<const double> child_y) {
    const TreeNode& n = tree.node(node);
    if (n.child_count == 0) fail(ErrorCode::InvalidArgument, "local_step on a leaf");
    if (child_y.size() != n.child_count) fail(ErrorCode::LengthMismatch, "one value per child is required");
    const MppModel& model = tree.model();

    LocalStep s;
    s.node = node;
    s.step = n.depth;
    s.delta_a = model.delta_a[s.step];
    s.delta_t = model.dt(s.step);
    s.phi = model.phi(s.step);
    s.child_values.assign(child_y.begin(), child_y.end());
    s.child_probs.resize(n.child_count);
    s.child_outcomes.resize(n.child_count);
    for (std::size_t c = 0; c < n.child_count; ++c) {
        const TreeNode& child = tree.node(n.first_child + c);
        s.child_probs[c] = child.prob;
        s.child_outcomes[c] = child.outcome;
        s.mean += child.prob * child_y[c];
    }

    // per outcome: value averaged over the Brownian branch and half the up-down spread
    const std::size_t width = model.brownian ? 2 : 1;
    const std::size_t outcomes = n.child_count / width;
    std::vector<double> level(outcomes);
    double spread = 0.0;
    for (std::size_t o = 0; o < outcomes; ++o) {
        if (model.brownian) {
            const double up = child_y[2 * o];
            const double down = child_y[2 * o + 1];
            level[o] = 0.5 * (up + down);
            spread += 2.0 * s.child_probs[2 * o] * 0.5 * (up - down);
        } else {
            level[o] = child_y[o];
        }
    }
    s.u.resize(model.mark_count());
    for (std::size_t e = 0; e < s.u.size(); ++e) s.u[e] = level[e + 1] - level[0];
    if (model.brownian) s.z = spread / std::sqrt(s.delta_t);
    return s;
}

ImplicitResult implicit_solve(const StepContext& ctx, const GeneratorSpec& gen, const SolverOptions& options,
                              double start) {
    auto inc = [&](double y) { return gen.increment(ctx, y, options.stepping); };
    if (options.mode == SolverMode::Explicit) return {ctx.mean + inc(ctx.mean), 1};

    double c = start;
    for (int it = 1; it <= options.max_iterations; ++it) {
        const double next = ctx.mean + inc(c);
        if (!std::isfinite(next)) break;
        if (std::abs(next - c) <= options.tolerance * (1.0 + std::abs(next))) return {next, it};
        c = next;
    }

    // bisection on r(x) = x - mean - increment(x)
    auto residual = [&](double x) { return x - ctx.mean - inc(x); };
    const double r0 = residual(ctx.mean);
    if (r0 == 0.0) return {ctx.mean, options.max_iterations};
    double lo = 0.0;
    double hi = 0.0;
    bool bracketed = false;
    for (double w = 1.0; w < 1e15 && !bracketed; w *= 2.0) {
        for (double x : {ctx.mean - w, ctx.mean + w}) {
            const double r = residual(x);
            if (std::isfinite(r) && (r > 0.0) != (r0 > 0.0)) {
                lo = std::min(x, ctx.mean);
                hi = std::max(x, ctx.mean);
                bracketed = true;
                break;
            }
        }
    }
    if (!bracketed) {
        fail(ErrorCode::FixedPointDiverged,
             "no fixed point at node " + std::to_string(ctx.node) + " after " +
                 std::to_string(options.max_iterations) + " iterations; beta_tilde * dA may be too large");
    }
    const bool lo_positive = residual(lo) > 0.0;
    int it = options.max_iterations;
    for (int k = 0; k < 400; ++k, ++it) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo <= options.tolerance * (1.0 + std::abs(mid))) break;
        if ((residual(mid) > 0.0) == lo_positive) lo = mid;
        else hi = mid;
    }
    return {0.5 * (lo + hi), it};
}

StepResult backward_step(const ScenarioTree& tree, NodeId node, std::span<const double> child_y,
                         const GeneratorSpec& gen, std::optional<double> obstacle, const SolverOptions& options) {
    const LocalStep s = local_step(tree, node, child_y);
    const ImplicitResult r = implicit_solve(s.context(), gen, options, s.mean);
    StepResult out;
    out.candidate = r.value;
    out.iterations = r.iterations;
    out.mean = s.mean;
    out.z = s.z;
    out.u = s.u;
    out.y = r.value;
    if (obstacle && *obstacle > r.value) {
        out.y = *obstacle;
        out.dk = *obstacle - r.value;
    }
    return out;
}

RbsdeSolution rbsde_solve(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                          const Obstacle& obstacle, const SolverOptions& options) {
    require_domain(tree, terminal, FieldDomain::Leaves, "terminal");
    if (obstacle.active()) {
        if (obstacle.field().size() != tree.size())
            fail(ErrorCode::FieldDomainMismatch, "obstacle was built for a different tree");
        for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) {
            if (obstacle.at(leaf) > terminal[leaf])
                fail(ErrorCode::ObstacleAboveTerminal, "obstacle exceeds terminal value at leaf " + std::to_string(leaf));
        }
    }

    const MppModel& model = tree.model();
    RbsdeSolution sol;
    sol.mode = options.mode;
    sol.stepping = options.stepping;
    sol.y = NodeField(tree, FieldDomain::AllNodes, 0.0);
    sol.u = MarkField(tree, 0.0);
    if (model.brownian) sol.z = NodeField(tree, FieldDomain::Internal, 0.0);
    sol.dk = NodeField(tree, FieldDomain::AllNodes, 0.0);
    sol.mean = NodeField(tree, FieldDomain::Internal, 0.0);
    sol.drift = NodeField(tree, FieldDomain::Internal, 0.0);
    sol.iterations.assign(tree.size(), 0);

    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) sol.y[leaf] = terminal[leaf];

    for (std::size_t d = tree.depth(); d-- > 0;) {
        for (NodeId id = tree.level_begin(d); id < tree.level_end(d); ++id) {
            const TreeNode& n = tree.node(id);
            const std::span<const double> child_y = sol.y.values().subspan(n.first_child, n.child_count);
            std::optional<double> barrier;
            if (obstacle.active()) barrier = obstacle.at(id);
            const StepResult r = backward_step(tree, id, child_y, gen, barrier, options);
            sol.y[id] = r.y;
            sol.dk[id] = r.dk;
            sol.mean[id] = r.mean;
            sol.drift[id] = r.candidate - r.mean;
            if (sol.z) (*sol.z)[id] = r.z;
            std::copy(r.u.begin(), r.u.end(), sol.u.at(id).begin());
            sol.iterations[id] = r.iterations;
        }
    }

    sol.max_flat_off = 0.0;
    sol.min_barrier_gap = std::numeric_limits<double>::infinity();
    if (obstacle.active()) {
        for (NodeId id = 0; id < tree.size(); ++id) {
            const double gap = sol.y[id] - obstacle.at(id);
            sol.max_flat_off = std::max(sol.max_flat_off, gap * sol.dk[id]);
            sol.min_barrier_gap = std::min(sol.min_barrier_gap, gap);
        }
    }
    return sol;
}

RbsdeSolution bsde_solve(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                         const SolverOptions& options) {
    return rbsde_solve(tree, gen, terminal, Obstacle::inactive(), options);
}

double max_pathwise_residual(const ScenarioTree& tree, const RbsdeSolution& sol, const NodeField& terminal) {
    const MppModel& model = tree.model();
    double worst = 0.0;
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) {
        double rhs = terminal[leaf];
        NodeId child = leaf;
        for (NodeId parent = tree.node(leaf).parent; parent != no_node; child = parent, parent = tree.node(parent).parent) {
            const TreeNode& p = tree.node(parent);
            const std::size_t step = p.depth;
            const auto u = sol.u.at(parent);
            const auto phi = model.phi(step);
            const Outcome& o = tree.node(child).outcome;
            double compensator = 0.0;
            for (std::size_t e = 0; e < u.size(); ++e) compensator += u[e] * phi[e];
            double martingale = (o.jump() ? u[static_cast<std::size_t>(o.mark)] : 0.0) - compensator * model.delta_a[step];
            if (model.brownian) {
                // realized Brownian-branch increment; z dW is its average over jump outcomes
                const NodeId up = o.brownian > 0 ? child : child - 1;
                martingale += o.brownian * 0.5 * (sol.y[up] - sol.y[up + 1]);
            }
            rhs += sol.drift[parent] + sol.dk[parent] - martingale;
        }
        worst = std::max(worst, std::abs(sol.root() - rhs));
    }
    return worst;
}

NodeField k_terminal(const ScenarioTree& tree, const RbsdeSolution& sol) {
    NodeField out(tree, FieldDomain::Leaves, 0.0);
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) {
        double k = 0.0;
        for (NodeId p = tree.node(leaf).parent; p != no_node; p = tree.node(p).parent) k += sol.dk[p];
        out[leaf] = k;
    }
    return out;
}

// ---- stopping rules ----------------------------------------------------------

StoppingRule::StoppingRule(const ScenarioTree& tree, bool stop_everywhere)
    : stop_(tree.size(), stop_everywhere ? 1 : 0) {
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) stop_[leaf] = 1;
}

std::vector<NodeId> StoppingRule::stopping_nodes(const ScenarioTree& tree, NodeId from) const {
    std::vector<NodeId> out;
    std::vector<NodeId> stack{from};
    while (!stack.empty()) {
        const NodeId id = stack.back();
        stack.pop_back();
        if (stops(id)) {
            out.push_back(id);
            continue;
        }
        const TreeNode& n = tree.node(id);
        for (std::size_t c = n.child_count; c-- > 0;) stack.push_back(n.first_child + c);
    }
    return out;
}

void require_adapted(const ScenarioTree& tree, const StoppingRule& rule) {
    if (rule.size() != tree.size()) fail(ErrorCode::RuleNotAdapted, "rule does not cover the tree's nodes");
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf)
        if (!rule.stops(leaf)) fail(ErrorCode::RuleNotAdapted, "rule continues at leaf " + std::to_string(leaf));
}

namespace {

double evaluate_from(const ScenarioTree& tree, const GeneratorSpec& gen, const StoppingRule& rule,
                     const NodeField& eta, NodeId id, const SolverOptions& options) {
    if (rule.stops(id)) {
        const double v = eta[id];
        if (!std::isfinite(v))
            fail(ErrorCode::FieldDomainMismatch, "eta is not given at stopping node " + std::to_string(id));
        return v;
    }
    const TreeNode& n = tree.node(id);
    std::vector<double> child_y(n.child_count);
    for (std::size_t c = 0; c < n.child_count; ++c)
        child_y[c] = evaluate_from(tree, gen, rule, eta, n.first_child + c, options);
    const LocalStep s = local_step(tree, id, child_y);
    return implicit_solve(s.context(), gen, options, s.mean).value;
}

}  // namespace

double evaluation_operator(const ScenarioTree& tree, const GeneratorSpec& gen, const StoppingRule& rule,
                           const NodeField& eta, NodeId from, const SolverOptions& options) {
    require_adapted(tree, rule);
    if (eta.size() != tree.size()) fail(ErrorCode::FieldDomainMismatch, "eta was built for a different tree");
    return evaluate_from(tree, gen, rule, eta, from, options);
}

// ---- ladders -----------------------------------------------------------------

NodeField clamp_field(const NodeField& field, double level) {
    NodeField out = field;
    for (NodeId id = 0; id < out.size(); ++id)
        if (!std::isnan(out[id])) out[id] = std::clamp(out[id], -level, level);
    return out;
}

LadderResult approximation_ladder(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                                  const Obstacle& obstacle, const std::vector<double>& n_list, LadderMode mode,
                                  SolverOptions options) {
    for (std::size_t k = 1; k < n_list.size(); ++k)
        if (!(n_list[k] > n_list[k - 1])) fail(ErrorCode::InvalidArgument, "n_list must be increasing");
    if (mode == LadderMode::InfConvolution) options.stepping = Stepping::Euler;

    LadderResult result;
    result.direct = rbsde_solve(tree, gen, terminal, obstacle, options);
    for (double n : n_list) {
        const auto start = std::chrono::steady_clock::now();
        LadderRow row;
        row.n = n;
        if (mode == LadderMode::InfConvolution) {
            row.solution = rbsde_solve(tree, inf_convolution(gen, n), terminal, obstacle, options);
        } else {
            const Obstacle clamped =
                obstacle.active() ? Obstacle::from_field(tree, clamp_field(obstacle.field(), n)) : Obstacle::inactive();
            row.solution = rbsde_solve(tree, gen, clamp_field(terminal, n), clamped, options);
        }
        row.root_y = row.solution.root();
        for (NodeId id = 0; id < tree.size(); ++id)
            row.gap = std::max(row.gap, std::abs(row.solution.y[id] - result.direct.y[id]));
        row.wallclock_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        result.rows.push_back(std::move(row));
    }
    return result;
}

void write_solution_csv(std::ostream& out, const ScenarioTree& tree, const RbsdeSolution& sol) {
    const std::size_t k = tree.model().mark_count();
    std::vector<std::string> header{"node_id", "depth", "y", "z", "dk"};
    for (std::size_t e = 0; e < k; ++e) header.push_back("u_" + std::to_string(e + 1));
    CsvWriter csv(header);
    for (NodeId id = 0; id < tree.size(); ++id) {
        const bool leaf = tree.is_leaf(id);
        csv.cell(id).cell(tree.node(id).depth).cell(sol.y[id]);
        csv.cell(sol.z && !leaf ? (*sol.z)[id] : std::numeric_limits<double>::quiet_NaN());
        csv.cell(sol.dk[id]);
        for (std::size_t e = 0; e < k; ++e)
            csv.cell(leaf ? std::numeric_limits<double>::quiet_NaN() : sol.u.at(id)[e]);
        csv.end_row();
    }
    out << csv.str();
}

}  // namespace rbsde
