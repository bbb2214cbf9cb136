#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rbsde/generator.hpp"
#include "rbsde/mpp.hpp"
#include "rbsde/solver.hpp"
#include "rbsde/verdict.hpp"

namespace rbsde {

struct CheckRow {
    NodeId node = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
};

struct CheckReport {
    std::string name;
    std::string instance_id;
    double tolerance = 0.0;
    double worst_margin = 0.0;
    Verdict verdict = Verdict::Informational;
    std::string detail;
    std::vector<CheckRow> rows;
};

inline constexpr double comparison_tolerance = 1e-10;
inline constexpr double bound_tolerance = 1e-9;
inline constexpr double hypothesis_tolerance = 1e-12;

/// One side of a comparison: solution, generator and data.
struct ComparisonSide {
    const RbsdeSolution& solution;
    const GeneratorSpec& gen;
    const NodeField& terminal;
    const Obstacle& obstacle;
};

/// Checks y <= y_hat at every node after gating on the hypotheses:
/// xi <= xi_hat, L <= L_hat, and either (i) f convex (or concave) inside its
/// upper envelope with f - f_hat <= 0 at the hat solution, or (ii) the same
/// for f_hat at the solution. The driver difference is taken on the solver's
/// step increments.
CheckReport comparison_check(const ScenarioTree& tree, const ComparisonSide& lower, const ComparisonSide& upper);

/// exp(p lambda |y_t|) <= E_t[exp(p lambda e^{beta A_T} X)] exp(p lambda sum_{s >= t} e^{beta A_{s+1}} alpha_s dA_s)
/// with X = |xi| v sup_path L^+. Gated on the generator staying inside its
/// declared envelope (sampled grid plus the solution's own arguments).
CheckReport y_exponential_bound(const ScenarioTree& tree, const RbsdeSolution& sol, const GeneratorSpec& gen,
                                const NodeField& terminal, const Obstacle& obstacle, double p,
                                std::uint64_t seed = 7);

struct MomentSummary {
    double m_u = 0.0;
    double m_k = 0.0;
    double log_r = 0.0;
    double ratio = 0.0;
};

MomentSummary uk_moments(const ScenarioTree& tree, const RbsdeSolution& sol, const GeneratorSpec& gen, double p);

/// Informational report of (M_U + M_K) / R; fails only when a baseline is
/// given and the ratio exceeds twice the baseline.
CheckReport uk_moment_report(const ScenarioTree& tree, const RbsdeSolution& sol, const GeneratorSpec& gen, double p,
                             std::optional<double> baseline = std::nullopt);

/// Solves with terminal and obstacle clamped to [-n, n]. Fails if the gap
/// stays positive once n covers the data range; the gap must also be
/// nonincreasing when the data are one-signed.
CheckReport truncation_stability(const ScenarioTree& tree, const GeneratorSpec& gen, const NodeField& terminal,
                                 const Obstacle& obstacle, const std::vector<double>& n_list,
                                 const SolverOptions& options = {});

/// check,instance_id,worst_margin,verdict
std::string checks_csv(const std::vector<CheckReport>& reports);

/// One line per report plus its detail.
std::string checks_text(const std::vector<CheckReport>& reports);

}  // namespace rbsde
