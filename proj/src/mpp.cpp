#include "rbsde/mpp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "rbsde/error.hpp"

namespace rbsde {

MarkSpace::MarkSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) fail(ErrorCode::InvalidArgument, "mark space needs at least one mark");
    std::set<std::string> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) fail(ErrorCode::InvalidArgument, "mark labels must be unique");
}

MarkSpace MarkSpace::indexed(std::size_t k) {
    std::vector<std::string> labels;
    labels.reserve(k);
    for (std::size_t e = 0; e < k; ++e) labels.push_back("e" + std::to_string(e + 1));
    return MarkSpace(std::move(labels));
}

double MppModel::a_at(std::size_t i) const {
    if (i > steps()) fail(ErrorCode::InvalidArgument, "grid index out of range");
    return std::accumulate(delta_a.begin(), delta_a.begin() + static_cast<std::ptrdiff_t>(i), 0.0);
}

double MppModel::max_delta_a() const {
    return delta_a.empty() ? 0.0 : *std::max_element(delta_a.begin(), delta_a.end());
}

MppModel build_model(std::vector<double> grid, std::vector<double> delta_a,
                     std::vector<std::vector<double>> kernel, bool brownian, double tolerance) {
    const std::size_t k = kernel.empty() ? 1 : kernel.front().size();
    return build_model(std::move(grid), std::move(delta_a), std::move(kernel), brownian,
                       MarkSpace::indexed(std::max<std::size_t>(k, 1)), tolerance);
}

MppModel build_model(std::vector<double> grid, std::vector<double> delta_a,
                     std::vector<std::vector<double>> kernel, bool brownian, MarkSpace marks,
                     double tolerance) {
    if (grid.size() < 2) fail(ErrorCode::LengthMismatch, "grid needs at least two points");
    const std::size_t n = grid.size() - 1;
    if (delta_a.size() != n || kernel.size() != n) {
        std::ostringstream msg;
        msg << "expected " << n << " compensator increments and kernels, got " << delta_a.size()
            << " and " << kernel.size();
        fail(ErrorCode::LengthMismatch, msg.str());
    }
    if (grid.front() != 0.0) fail(ErrorCode::NonIncreasingGrid, "grid must start at 0");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(grid[i + 1] > grid[i]) || !std::isfinite(grid[i + 1]))
            fail(ErrorCode::NonIncreasingGrid, "grid not strictly increasing at index " + std::to_string(i + 1));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(delta_a[i] >= 0.0 && delta_a[i] < 1.0))
            fail(ErrorCode::CompensatorOutOfRange,
                 "delta_a[" + std::to_string(i) + "] = " + std::to_string(delta_a[i]) + " not in [0, 1)");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& phi = kernel[i];
        if (phi.size() != marks.size())
            fail(ErrorCode::LengthMismatch, "kernel " + std::to_string(i) + " has wrong number of marks");
        double sum = 0.0;
        for (double w : phi) {
            if (!(w >= 0.0)) fail(ErrorCode::KernelNotProbability, "negative kernel weight at step " + std::to_string(i));
            sum += w;
        }
        if (std::abs(sum - 1.0) > tolerance)
            fail(ErrorCode::KernelNotProbability, "kernel " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
    MppModel model;
    model.grid = std::move(grid);
    model.delta_a = std::move(delta_a);
    model.kernel = std::move(kernel);
    model.brownian = brownian;
    model.marks = std::move(marks);
    return model;
}

std::string Outcome::label() const {
    std::string s = jump() ? "J" + std::to_string(mark + 1) : "N";
    if (brownian > 0) s += "+";
    if (brownian < 0) s += "-";
    return s;
}

std::size_t tree_node_count(const MppModel& model) {
    const std::size_t b = (model.mark_count() + 1) * (model.brownian ? 2 : 1);
    std::size_t total = 0;
    std::size_t level = 1;
    constexpr std::size_t cap = std::numeric_limits<std::size_t>::max();
    for (std::size_t d = 0; d <= model.steps(); ++d) {
        if (total > cap - level) return cap;
        total += level;
        if (d < model.steps()) {
            if (level > cap / b) return cap;
            level *= b;
        }
    }
    return total;
}

ScenarioTree build_tree(const MppModel& model, std::size_t node_cap) {
    const std::size_t count = tree_node_count(model);
    if (count > node_cap) {
        fail(ErrorCode::TreeTooLarge,
             "tree would have " + std::to_string(count) + " nodes, cap is " + std::to_string(node_cap));
    }

    ScenarioTree tree;
    tree.model_ = model;
    const std::size_t k = model.mark_count();
    tree.branching_ = (k + 1) * (model.brownian ? 2 : 1);
    tree.nodes_.reserve(count);
    tree.nodes_.push_back(TreeNode{});
    tree.level_begin_.push_back(0);

    std::vector<Outcome> outcomes;
    for (int mark = -1; mark < static_cast<int>(k); ++mark) {
        if (model.brownian) {
            outcomes.push_back({mark, +1});
            outcomes.push_back({mark, -1});
        } else {
            outcomes.push_back({mark, 0});
        }
    }

    for (std::size_t d = 0; d < model.steps(); ++d) {
        const NodeId begin = tree.level_begin_.back();
        const NodeId end = tree.nodes_.size();
        tree.level_begin_.push_back(end);
        const double da = model.delta_a[d];
        const auto phi = model.phi(d);
        for (NodeId parent = begin; parent < end; ++parent) {
            tree.nodes_[parent].first_child = tree.nodes_.size();
            tree.nodes_[parent].child_count = outcomes.size();
            const double parent_prob = tree.nodes_[parent].path_prob;
            for (const Outcome& o : outcomes) {
                TreeNode child;
                child.depth = d + 1;
                child.parent = parent;
                child.outcome = o;
                double p = o.jump() ? phi[static_cast<std::size_t>(o.mark)] * da : 1.0 - da;
                if (model.brownian) p *= 0.5;
                child.prob = p;
                child.path_prob = parent_prob * p;
                tree.nodes_.push_back(child);
            }
        }
    }
    tree.level_begin_.push_back(tree.nodes_.size());
    return tree;
}

std::vector<NodeId> ScenarioTree::path_to(NodeId id) const {
    std::vector<NodeId> path;
    for (NodeId cur = id; cur != no_node; cur = nodes_.at(cur).parent) path.push_back(cur);
    std::reverse(path.begin(), path.end());
    return path;
}

std::pair<NodeId, NodeId> ScenarioTree::leaf_range(NodeId id) const {
    const std::size_t d = nodes_.at(id).depth;
    std::size_t width = 1;
    for (std::size_t i = d; i < depth(); ++i) width *= branching_;
    const NodeId offset = id - level_begin(d);
    const NodeId first = first_leaf() + offset * width;
    return {first, first + width};
}

void ScenarioTree::write_csv(std::ostream& out) const {
    out << "node_id,depth,parent_id,outcome,prob,path_prob\n";
    out.precision(17);
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        const TreeNode& n = nodes_[id];
        out << id << ',' << n.depth << ',';
        if (n.parent == no_node) out << -1; else out << n.parent;
        out << ',' << (id == 0 ? std::string("root") : n.outcome.label()) << ',' << n.prob << ','
            << n.path_prob << '\n';
    }
}

bool in_domain(const ScenarioTree& tree, FieldDomain domain, NodeId id) {
    switch (domain) {
        case FieldDomain::AllNodes: return id < tree.size();
        case FieldDomain::Leaves: return id < tree.size() && tree.is_leaf(id);
        case FieldDomain::Internal: return id < tree.size() && !tree.is_leaf(id);
    }
    return false;
}

NodeField::NodeField(const ScenarioTree& tree, FieldDomain domain, double fill)
    : domain_(domain), values_(tree.size(), std::numeric_limits<double>::quiet_NaN()) {
    for (NodeId id = 0; id < tree.size(); ++id)
        if (in_domain(tree, domain, id)) values_[id] = fill;
}

NodeField NodeField::from_function(const ScenarioTree& tree, FieldDomain domain,
                                   const std::function<double(NodeId)>& fn) {
    NodeField field(tree, domain);
    for (NodeId id = 0; id < tree.size(); ++id)
        if (in_domain(tree, domain, id)) field.values_[id] = fn(id);
    return field;
}

void require_domain(const ScenarioTree& tree, const NodeField& field, FieldDomain required,
                    const char* name) {
    if (field.size() != tree.size())
        fail(ErrorCode::FieldDomainMismatch, std::string(name) + " was built for a different tree");
    const bool covers = field.domain() == FieldDomain::AllNodes || field.domain() == required;
    if (!covers) fail(ErrorCode::FieldDomainMismatch, std::string(name) + " does not cover the required nodes");
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (in_domain(tree, required, id) && !std::isfinite(field[id]))
            fail(ErrorCode::FieldDomainMismatch, std::string(name) + " is not finite at node " + std::to_string(id));
    }
}

MarkField::MarkField(const ScenarioTree& tree, double fill)
    : width_(tree.model().mark_count()), values_(tree.size() * width_, fill) {}

NodeField compensated_integral(const ScenarioTree& tree, const MarkField& u, std::size_t upto_step) {
    const MppModel& model = tree.model();
    if (u.width() != model.mark_count() || u.node_count() != tree.size())
        fail(ErrorCode::FieldDomainMismatch, "u field does not match the tree's internal nodes x marks");
    if (upto_step > tree.depth()) fail(ErrorCode::InvalidArgument, "upto_step beyond horizon");

    // compensator term per internal node: sum_e u(e) phi(e) dA
    std::vector<double> compensator(tree.first_leaf(), 0.0);
    for (NodeId id = 0; id < tree.first_leaf(); ++id) {
        const std::size_t step = tree.node(id).depth;
        const auto phi = model.phi(step);
        const auto values = u.at(id);
        double s = 0.0;
        for (std::size_t e = 0; e < phi.size(); ++e) s += values[e] * phi[e];
        compensator[id] = s * model.delta_a[step];
    }

    NodeField out(tree, FieldDomain::Leaves, 0.0);
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) {
        double acc = 0.0;
        NodeId child = leaf;
        NodeId parent = tree.node(leaf).parent;
        while (parent != no_node) {
            if (tree.node(parent).depth < upto_step) {
                const Outcome& o = tree.node(child).outcome;
                if (o.jump()) acc += u.at(parent)[static_cast<std::size_t>(o.mark)];
                acc -= compensator[parent];
            }
            child = parent;
            parent = tree.node(parent).parent;
        }
        out[leaf] = acc;
    }
    return out;
}

double leaf_expectation(const ScenarioTree& tree, const NodeField& leaf_values) {
    require_domain(tree, leaf_values, FieldDomain::Leaves, "leaf field");
    double s = 0.0;
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf)
        s += tree.node(leaf).path_prob * leaf_values[leaf];
    return s;
}

}  // namespace rbsde
