#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rbsde/generator.hpp"
#include "rbsde/mpp.hpp"

namespace rbsde {

/// Lower barrier L. An inactive barrier stands for L = -infinity and is kept
/// as a flag rather than a large negative number.
class Obstacle {
public:
    static Obstacle inactive() { return Obstacle(); }
    static Obstacle from_field(const ScenarioTree& tree, NodeField field);

    bool active() const noexcept { return active_; }
    double at(NodeId id) const;
    const NodeField& field() const noexcept { return field_; }

private:
    bool active_ = false;
    NodeField field_;
};

enum class SolverMode { Implicit, Explicit };

struct SolverOptions {
    SolverMode mode = SolverMode::Implicit;
    Stepping stepping = Stepping::Exact;
    int max_iterations = 200;
    double tolerance = 1e-12;
};

/// Child configuration of one internal node with the quantities the solver
/// extracts from it. `context()` returns spans into this object.
struct LocalStep {
    NodeId node = 0;
    std::size_t step = 0;
    double delta_a = 0.0;
    double delta_t = 0.0;
    std::span<const double> phi;
    double mean = 0.0;
    double z = 0.0;
    std::vector<double> u;
    std::vector<double> child_values;
    std::vector<double> child_probs;
    std::vector<Outcome> child_outcomes;

    StepContext context() const;
};

/// Builds the step data of `node` from the values of its children (in tree order).
LocalStep local_step(const ScenarioTree& tree, NodeId node, std::span<const double> child_y);

struct ImplicitResult {
    double value = 0.0;
    int iterations = 0;
};

/// Solves c = mean + increment(c) starting from `start`. Fixed-point
/// iteration first, bisection on a sign change of the residual second.
ImplicitResult implicit_solve(const StepContext& ctx, const GeneratorSpec& gen, const SolverOptions& options,
                              double start);

struct StepResult {
    double y = 0.0;
    double candidate = 0.0;
    double dk = 0.0;
    double z = 0.0;
    double mean = 0.0;
    std::vector<double> u;
    int iterations = 0;
};

StepResult backward_step(const ScenarioTree& tree, NodeId node, std::span<const double> child_y,
                         const GeneratorSpec& gen, std::optional<double> obstacle,
                         const SolverOptions& options = {});

struct RbsdeSolution {
    NodeField y;                // all nodes
    MarkField u;                // internal nodes x marks
    std::optional<NodeField> z;  // internal nodes, Brownian trees only
    NodeField dk;               // all nodes, zero at leaves
    NodeField mean;             // internal nodes: conditional mean of the children
    NodeField drift;            // internal nodes: candidate - mean
    std::vector<int> iterations;
    double max_flat_off = 0.0;
    double min_barrier_gap = 0.0;  // min over nodes of y - L (+inf when inactive)
    SolverMode mode = SolverMode::Implicit;
    Stepping stepping = Stepping::Exact;

    double root() const { return y[0]; }
};

RbsdeSolution bsde_solve(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                         const SolverOptions& options = {});

RbsdeSolution rbsde_solve(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                          const Obstacle& obstacle, const SolverOptions& options = {});

/// Per-leaf residual of the telescoped backward equation along the
/// root-to-leaf path; returns the largest absolute value.
double max_pathwise_residual(const ScenarioTree& tree, const RbsdeSolution& sol, const NodeField& terminal);

/// Running sum of dk along each path up to and including the leaf's parent.
NodeField k_terminal(const ScenarioTree& tree, const RbsdeSolution& sol);

/// Stop/Continue per node. Every node of the tree carries an entry; leaves
/// must be Stop. On a tree each node is a history, so adaptedness reduces to
/// the rule being a function of the node.
class StoppingRule {
public:
    StoppingRule() = default;
    explicit StoppingRule(const ScenarioTree& tree, bool stop_everywhere = true);

    bool stops(NodeId id) const { return stop_.at(id) != 0; }
    void set(NodeId id, bool stop) { stop_.at(id) = stop ? 1 : 0; }
    std::size_t size() const noexcept { return stop_.size(); }

    /// Nodes where the rule stops for the first time below `from`.
    std::vector<NodeId> stopping_nodes(const ScenarioTree& tree, NodeId from) const;

    friend bool operator==(const StoppingRule&, const StoppingRule&) = default;

private:
    std::vector<std::uint8_t> stop_;
};

/// Throws RuleNotAdapted unless the rule matches the tree and stops at leaves.
void require_adapted(const ScenarioTree& tree, const StoppingRule& rule);

/// E^f_{from, tau}[eta] with tau given by the rule: backward recursion
/// without reflection from the stopping nodes to `from`.
double evaluation_operator(const ScenarioTree& tree, const GeneratorSpec& gen, const StoppingRule& rule,
                           const NodeField& eta, NodeId from, const SolverOptions& options = {});

enum class LadderMode { InfConvolution, Truncation };

struct LadderRow {
    double n = 0.0;
    RbsdeSolution solution;
    double root_y = 0.0;
    double gap = 0.0;  // sup over nodes of |y^n - y|
    double wallclock_ms = 0.0;
};

struct LadderResult {
    RbsdeSolution direct;
    std::vector<LadderRow> rows;
};

/// Inf-convolution mode solves with f^n for each n (Euler stepping on both
/// sides so the gap measures the generator change only). Truncation mode
/// clamps terminal and obstacle to [-n, n] and keeps the generator.
LadderResult approximation_ladder(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                                  const Obstacle& obstacle, const std::vector<double>& n_list, LadderMode mode,
                                  SolverOptions options = {});

/// Clamp of a field to [-level, level].
NodeField clamp_field(const NodeField& field, double level);

/// node_id,depth,y,z,dk,u_1..u_K
void write_solution_csv(std::ostream& out, const ScenarioTree& tree, const RbsdeSolution& sol);

}  // namespace rbsde
