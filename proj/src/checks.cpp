#include "rbsde/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "rbsde/csv.hpp"
#include "rbsde/error.hpp"

namespace rbsde {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& log_weights) {
    double peak = -inf;
    for (double v : log_weights) peak = std::max(peak, v);
    if (peak == -inf) return -inf;
    double s = 0.0;
    for (double v : log_weights) s += std::exp(v - peak);
    return peak + std::log(s);
}

// Bottom-up log E_t[exp(leaf_log)] using transition probabilities only.
std::vector<double> conditional_log_expectation(const ScenarioTree& tree, const std::vector<double>& leaf_log) {
    std::vector<double> out(tree.size(), -inf);
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) out[leaf] = leaf_log[leaf - tree.first_leaf()];
    std::vector<double> terms;
    for (NodeId id = tree.first_leaf(); id-- > 0;) {
        const TreeNode& n = tree.node(id);
        terms.clear();
        for (std::size_t c = 0; c < n.child_count; ++c) {
            const TreeNode& child = tree.node(n.first_child + c);
            if (child.prob > 0.0) terms.push_back(std::log(child.prob) + out[n.first_child + c]);
        }
        out[id] = log_sum_exp(terms);
    }
    return out;
}

Verdict verdict_of(double worst, double tolerance) { return worst >= -tolerance ? Verdict::Pass : Verdict::Fail; }

struct HypothesisResult {
    bool ok = true;
    std::string violated;
};

// Hypotheses of one case: `designated` convex or concave, inside its upper
// envelope, and inc_f - inc_fhat <= 0 along `at`.
HypothesisResult case_hypotheses(const ScenarioTree& tree, const GeneratorSpec& designated, const GeneratorSpec& f,
                                 const GeneratorSpec& f_hat, const RbsdeSolution& at, const char* label) {
    const std::string prefix = std::string("case ") + label + ": ";
    if (designated.params().convexity == Convexity::None)
        return {false, prefix + designated.name() + " is neither convex nor concave in u"};
    const MppModel& model = tree.model();
    for (NodeId id = 0; id < tree.first_leaf(); ++id) {
        const TreeNode& n = tree.node(id);
        const LocalStep s = local_step(tree, id, at.y.values().subspan(n.first_child, n.child_count));
        const StepContext ctx = s.context();
        const double y = at.mean[id] + at.drift[id];
        const Envelope env = growth_envelope(designated, n.depth, y, s.u, model.phi(n.depth), s.z);
        if (env.value > env.q_upper + envelope_tolerance) {
            std::ostringstream msg;
            msg << prefix << designated.name() << " exceeds its upper envelope at node " << id;
            return {false, msg.str()};
        }
        const double diff = f.increment(ctx, y, at.stepping) - f_hat.increment(ctx, y, at.stepping);
        if (diff > hypothesis_tolerance) {
            std::ostringstream msg;
            msg << prefix << "driver difference " << diff << " > 0 at node " << id;
            return {false, msg.str()};
        }
    }
    return {};
}

}  // namespace

CheckReport comparison_check(const ScenarioTree& tree, const ComparisonSide& lower, const ComparisonSide& upper) {
    CheckReport report;
    report.name = "comparison";
    report.tolerance = comparison_tolerance;

    auto not_applicable = [&](std::string why) {
        report.verdict = Verdict::NotApplicable;
        report.detail = std::move(why);
        return report;
    };

    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf)
        if (lower.terminal[leaf] > upper.terminal[leaf] + hypothesis_tolerance)
            return not_applicable("terminal values not ordered at leaf " + std::to_string(leaf));
    if (lower.obstacle.active()) {
        if (!upper.obstacle.active()) return not_applicable("obstacles not ordered: upper obstacle is inactive");
        for (NodeId id = 0; id < tree.size(); ++id)
            if (lower.obstacle.at(id) > upper.obstacle.at(id) + hypothesis_tolerance)
                return not_applicable("obstacles not ordered at node " + std::to_string(id));
    }

    const HypothesisResult first = case_hypotheses(tree, lower.gen, lower.gen, upper.gen, upper.solution, "(i)");
    if (!first.ok) {
        const HypothesisResult second = case_hypotheses(tree, upper.gen, lower.gen, upper.gen, lower.solution, "(ii)");
        if (!second.ok) return not_applicable(first.violated + "; " + second.violated);
        report.detail = "hypotheses of case (ii) hold";
    } else {
        report.detail = "hypotheses of case (i) hold";
    }

    report.worst_margin = inf;
    for (NodeId id = 0; id < tree.size(); ++id) {
        const double y = lower.solution.y[id];
        const double y_hat = upper.solution.y[id];
        report.rows.push_back({id, y, y_hat, y_hat - y});
        report.worst_margin = std::min(report.worst_margin, y_hat - y);
    }
    report.verdict = verdict_of(report.worst_margin, report.tolerance);
    return report;
}

CheckReport y_exponential_bound(const ScenarioTree& tree, const RbsdeSolution& sol, const GeneratorSpec& gen,
                                const NodeField& terminal, const Obstacle& obstacle, double p, std::uint64_t seed) {
    CheckReport report;
    report.name = "y_exponential_bound";
    report.tolerance = bound_tolerance;
    const MppModel& model = tree.model();
    if (!(p >= 1.0)) fail(ErrorCode::InvalidArgument, "the bound needs p >= 1");
    {
        std::ostringstream d;
        d << "p=" << p;
        report.detail = d.str();
    }
    if (model.brownian) {
        report.verdict = Verdict::NotApplicable;
        report.detail += "; bound is checked on pure-jump trees only";
        return report;
    }

    // envelope gate
    const std::size_t k = model.mark_count();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> y_dist(-6.0, 6.0);
    std::uniform_real_distribution<double> u_dist(-4.0, 4.0);
    const std::vector<double> axis{-3.0, -1.0, -0.25, 0.0, 0.25, 1.0, 3.0};
    std::vector<double> u(k);
    auto outside = [&](std::size_t step, double y, std::span<const double> uu) {
        return !growth_envelope(gen, step, y, uu, model.phi(step)).within;
    };
    for (std::size_t step = 0; step < model.steps(); ++step) {
        std::size_t grid_points = 1;
        for (std::size_t e = 0; e < k && grid_points < 4096; ++e) grid_points *= axis.size();
        for (std::size_t g = 0; g < grid_points; ++g) {
            std::size_t code = g;
            for (std::size_t e = 0; e < k; ++e) {
                u[e] = axis[code % axis.size()];
                code /= axis.size();
            }
            for (double y : {-4.0, -1.0, 0.0, 1.0, 4.0}) {
                if (outside(step, y, u)) {
                    report.verdict = Verdict::NotApplicable;
                    report.detail += "; generator leaves its declared envelope at step " + std::to_string(step);
                    return report;
                }
            }
        }
        for (int s = 0; s < 64; ++s) {
            for (double& v : u) v = u_dist(rng);
            if (outside(step, y_dist(rng), u)) {
                report.verdict = Verdict::NotApplicable;
                report.detail += "; generator leaves its declared envelope at step " + std::to_string(step);
                return report;
            }
        }
    }
    for (NodeId id = 0; id < tree.first_leaf(); ++id) {
        const std::size_t step = tree.node(id).depth;
        if (outside(step, sol.mean[id] + sol.drift[id], sol.u.at(id))) {
            report.verdict = Verdict::NotApplicable;
            report.detail += "; generator leaves its declared envelope at node " + std::to_string(id);
            return report;
        }
    }

    const double lambda = gen.params().lambda;
    const double beta = gen.params().beta;
    const double a_total = model.a_total();
    const double scale = p * lambda * std::exp(beta * a_total);

    std::vector<double> leaf_log(tree.leaf_count());
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) {
        double l_star = 0.0;
        if (obstacle.active())
            for (NodeId id : tree.path_to(leaf)) l_star = std::max(l_star, obstacle.at(id));
        leaf_log[leaf - tree.first_leaf()] = scale * std::max(std::abs(terminal[leaf]), l_star);
    }
    const std::vector<double> log_e = conditional_log_expectation(tree, leaf_log);

    // tail[d] = sum_{s >= d} e^{beta A_{s+1}} alpha_s dA_s
    std::vector<double> tail(model.steps() + 1, 0.0);
    for (std::size_t s = model.steps(); s-- > 0;)
        tail[s] = tail[s + 1] + std::exp(beta * model.a_at(s + 1)) * gen.alpha(s) * model.delta_a[s];

    report.worst_margin = inf;
    for (NodeId id = 0; id < tree.size(); ++id) {
        const double log_lhs = p * lambda * std::abs(sol.y[id]);
        const double log_rhs = log_e[id] + p * lambda * tail[tree.node(id).depth];
        const double margin = -std::expm1(log_lhs - log_rhs);
        report.rows.push_back({id, log_lhs, log_rhs, margin});
        report.worst_margin = std::min(report.worst_margin, margin);
    }
    report.verdict = verdict_of(report.worst_margin, report.tolerance);
    return report;
}

MomentSummary uk_moments(const ScenarioTree& tree, const RbsdeSolution& sol, const GeneratorSpec& gen, double p) {
    const MppModel& model = tree.model();
    const double lambda = gen.params().lambda;
    const double beta = gen.params().beta;
    const double factor = 36.0 * p * lambda * (1.0 + beta * model.a_total());
    MomentSummary m;
    std::vector<double> log_terms;
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) {
        double su = 0.0;
        double kt = 0.0;
        double y_star = std::abs(sol.y[leaf]);
        for (NodeId id = tree.node(leaf).parent; id != no_node; id = tree.node(id).parent) {
            const std::size_t step = tree.node(id).depth;
            const auto uu = sol.u.at(id);
            const auto phi = model.phi(step);
            for (std::size_t e = 0; e < uu.size(); ++e) su += uu[e] * uu[e] * phi[e] * model.delta_a[step];
            kt += sol.dk[id];
            y_star = std::max(y_star, std::abs(sol.y[id]));
        }
        const double prob = tree.node(leaf).path_prob;
        m.m_u += prob * std::pow(su, p / 2.0);
        m.m_k += prob * std::pow(kt, p);
        if (prob > 0.0) log_terms.push_back(std::log(prob) + factor * y_star);
    }
    m.log_r = log_sum_exp(log_terms);
    const double numerator = m.m_u + m.m_k;
    m.ratio = numerator > 0.0 ? std::exp(std::log(numerator) - m.log_r) : 0.0;
    return m;
}

CheckReport uk_moment_report(const ScenarioTree& tree, const RbsdeSolution& sol, const GeneratorSpec& gen, double p,
                             std::optional<double> baseline) {
    const MomentSummary m = uk_moments(tree, sol, gen, p);
    CheckReport report;
    report.name = "uk_moment_report";
    report.tolerance = 0.0;
    report.rows.push_back({0, m.m_u + m.m_k, m.log_r, m.ratio});
    std::ostringstream d;
    d << "p=" << p << " M_U=" << format_double(m.m_u) << " M_K=" << format_double(m.m_k)
      << " log R=" << format_double(m.log_r) << " ratio=" << format_double(m.ratio);
    if (baseline) {
        report.worst_margin = 2.0 * *baseline - m.ratio;
        report.verdict = report.worst_margin >= 0.0 ? Verdict::Informational : Verdict::Fail;
        d << " baseline=" << format_double(*baseline);
    } else {
        report.worst_margin = 0.0;
        report.verdict = Verdict::Informational;
    }
    report.detail = d.str();
    return report;
}

CheckReport truncation_stability(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                                 const Obstacle& obstacle, const std::vector<double>& n_list,
                                 const SolverOptions& options) {
    CheckReport report;
    report.name = "truncation_stability";
    report.tolerance = 1e-12;

    double range = 0.0;
    bool nonnegative = true;
    bool nonpositive = true;
    auto visit = [&](double v) {
        range = std::max(range, std::abs(v));
        nonnegative = nonnegative && v >= 0.0;
        nonpositive = nonpositive && v <= 0.0;
    };
    for (NodeId leaf = tree.first_leaf(); leaf < tree.size(); ++leaf) visit(terminal[leaf]);
    if (obstacle.active())
        for (NodeId id = 0; id < tree.size(); ++id) visit(obstacle.at(id));
    const bool one_signed = nonnegative || nonpositive;

    const LadderResult ladder = approximation_ladder(tree, gen, terminal, obstacle, n_list, LadderMode::Truncation, options);
    report.worst_margin = inf;
    double previous = inf;
    std::ostringstream d;
    d << "data range " << format_double(range) << (one_signed ? ", one-signed data" : ", mixed-sign data");
    for (std::size_t k = 0; k < ladder.rows.size(); ++k) {
        const auto& row = ladder.rows[k];
        double margin = inf;
        if (row.n >= range) margin = std::min(margin, -row.gap);
        if (one_signed && k > 0) margin = std::min(margin, previous - row.gap);
        if (!one_signed && k > 0 && row.gap > previous + report.tolerance)
            d << "; gap rises from n=" << format_double(ladder.rows[k - 1].n) << " to n=" << format_double(row.n);
        report.rows.push_back({k, row.n, row.gap, margin});
        report.worst_margin = std::min(report.worst_margin, margin);
        previous = row.gap;
    }
    if (report.worst_margin == inf) {
        report.worst_margin = 0.0;
        report.verdict = Verdict::Informational;
    } else {
        report.verdict = verdict_of(report.worst_margin, report.tolerance);
    }
    report.detail = d.str();
    return report;
}

std::string checks_csv(const std::vector<CheckReport>& reports) {
    CsvWriter csv({"check", "instance_id", "worst_margin", "verdict"});
    for (const auto& r : reports)
        csv.cell(r.name).cell(r.instance_id).cell(r.worst_margin).cell(to_string(r.verdict)).end_row();
    return csv.str();
}

std::string checks_text(const std::vector<CheckReport>& reports) {
    std::ostringstream out;
    for (const auto& r : reports) {
        out << r.name;
        if (!r.instance_id.empty()) out << " [" << r.instance_id << "]";
        out << ": " << to_string(r.verdict) << ", worst margin " << format_double(r.worst_margin);
        if (!r.detail.empty()) out << " (" << r.detail << ")";
        out << '\n';
    }
    return out.str();
}

}  // namespace rbsde
