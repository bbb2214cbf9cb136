#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace rbsde {

using NodeId = std::size_t;
inline constexpr NodeId no_node = std::numeric_limits<NodeId>::max();

inline constexpr double probability_tolerance = 1e-12;
inline constexpr std::size_t default_node_cap = 5'000'000;

/// Finite mark space: K >= 1 distinct labels.
class MarkSpace {
public:
    explicit MarkSpace(std::vector<std::string> labels);

    /// Labels "e1".."ek".
    static MarkSpace indexed(std::size_t k);

    std::size_t size() const noexcept { return labels_.size(); }
    const std::string& label(std::size_t e) const { return labels_.at(e); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

private:
    std::vector<std::string> labels_;
};

/// Discrete marked point process: deterministic compensator increments and
/// a per-step mark kernel on a fixed time grid. At most one jump per step.
struct MppModel {
    std::vector<double> grid;                 // t_0 = 0 < ... < t_N
    std::vector<double> delta_a;              // N increments, each in [0, 1)
    std::vector<std::vector<double>> kernel;  // N probability vectors over the marks
    bool brownian = false;
    MarkSpace marks = MarkSpace::indexed(1);

    std::size_t steps() const noexcept { return delta_a.size(); }
    std::size_t mark_count() const noexcept { return marks.size(); }
    double dt(std::size_t step) const { return grid.at(step + 1) - grid.at(step); }
    std::span<const double> phi(std::size_t step) const { return kernel.at(step); }

    /// A at grid point i, i.e. the sum of the first i increments.
    double a_at(std::size_t i) const;
    double a_total() const { return a_at(steps()); }
    double max_delta_a() const;
};

MppModel build_model(std::vector<double> grid, std::vector<double> delta_a,
                     std::vector<std::vector<double>> kernel, bool brownian,
                     double tolerance = probability_tolerance);

MppModel build_model(std::vector<double> grid, std::vector<double> delta_a,
                     std::vector<std::vector<double>> kernel, bool brownian, MarkSpace marks,
                     double tolerance = probability_tolerance);

/// Edge label: no jump or a jump with mark e, optionally crossed with a
/// Brownian up (+1) / down (-1) move.
struct Outcome {
    int mark = -1;
    int brownian = 0;

    bool jump() const noexcept { return mark >= 0; }
    std::string label() const;
    friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct TreeNode {
    std::size_t depth = 0;
    NodeId parent = no_node;
    NodeId first_child = no_node;
    std::size_t child_count = 0;
    Outcome outcome;
    double prob = 1.0;       // transition probability from the parent
    double path_prob = 1.0;  // product of transition probabilities from the root
};

/// Complete scenario tree in breadth-first layout. Children of a node are
/// contiguous and ordered outcome-major: NoJump, Jump(e1), ..., each split
/// into (Up, Down) when Brownian branching is on.
class ScenarioTree {
public:
    const MppModel& model() const noexcept { return model_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t depth() const noexcept { return model_.steps(); }
    std::size_t branching() const noexcept { return branching_; }

    const TreeNode& node(NodeId id) const { return nodes_.at(id); }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    bool is_leaf(NodeId id) const { return nodes_.at(id).child_count == 0; }

    NodeId level_begin(std::size_t depth) const { return level_begin_.at(depth); }
    NodeId level_end(std::size_t depth) const { return level_begin_.at(depth + 1); }
    NodeId first_leaf() const { return level_begin(depth()); }
    std::size_t leaf_count() const { return size() - first_leaf(); }

    /// Nodes from the root down to and including `id`.
    std::vector<NodeId> path_to(NodeId id) const;

    /// Leaves of the subtree rooted at `id`, which form a contiguous range.
    std::pair<NodeId, NodeId> leaf_range(NodeId id) const;

    /// One row per node: node_id, depth, parent_id, outcome, prob, path_prob.
    void write_csv(std::ostream& out) const;

private:
    friend ScenarioTree build_tree(const MppModel&, std::size_t);

    MppModel model_;
    std::size_t branching_ = 0;
    std::vector<TreeNode> nodes_;
    std::vector<NodeId> level_begin_;
};

ScenarioTree build_tree(const MppModel& model, std::size_t node_cap = default_node_cap);

/// Total node count for the model, saturating at SIZE_MAX.
std::size_t tree_node_count(const MppModel& model);

enum class FieldDomain { AllNodes, Leaves, Internal };

bool in_domain(const ScenarioTree& tree, FieldDomain domain, NodeId id);

/// Real values attached to a declared node set. Storage spans the whole
/// tree; entries outside the domain hold NaN.
class NodeField {
public:
    NodeField() = default;
    NodeField(const ScenarioTree& tree, FieldDomain domain, double fill = 0.0);

    static NodeField from_function(const ScenarioTree& tree, FieldDomain domain,
                                   const std::function<double(NodeId)>& fn);

    FieldDomain domain() const noexcept { return domain_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](NodeId id) const { return values_[id]; }
    double& operator[](NodeId id) { return values_[id]; }
    std::span<const double> values() const noexcept { return values_; }

private:
    FieldDomain domain_ = FieldDomain::AllNodes;
    std::vector<double> values_;
};

/// Throws FieldDomainMismatch unless `field` covers `required` on `tree`
/// with finite values.
void require_domain(const ScenarioTree& tree, const NodeField& field, FieldDomain required,
                    const char* name);

/// Per-mark values on internal nodes (the predictable integrands U).
class MarkField {
public:
    MarkField() = default;
    MarkField(const ScenarioTree& tree, double fill = 0.0);

    std::size_t width() const noexcept { return width_; }
    std::size_t node_count() const noexcept { return width_ == 0 ? 0 : values_.size() / width_; }
    std::span<double> at(NodeId id) { return {values_.data() + id * width_, width_}; }
    std::span<const double> at(NodeId id) const { return {values_.data() + id * width_, width_}; }

private:
    std::size_t width_ = 0;
    std::vector<double> values_;
};

/// Per-leaf value of sum_{i < upto_step} [u_i(e_i) 1{jump e_i} - sum_e u_i(e) phi_i(e) dA_i].
NodeField compensated_integral(const ScenarioTree& tree, const MarkField& u, std::size_t upto_step);

/// Expectation of a leaf field (sum over leaves of path_prob * value).
double leaf_expectation(const ScenarioTree& tree, const NodeField& leaf_values);

}  // namespace rbsde
