#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbsde/expr.hpp"
#include "rbsde/generator.hpp"
#include "rbsde/mpp.hpp"
#include "rbsde/pricing.hpp"
#include "rbsde/solver.hpp"

namespace rbsde {

/// Terminal, obstacle or payoff data: a constant, an expression over node
/// state, or an explicit table (leaf order for terminals, node order for
/// obstacles and payoffs).
struct FieldSpec {
    enum class Kind { Expression, Table } kind = Kind::Expression;
    Expression expr;
    std::vector<double> table;
};

struct RunSpec {
    std::string command;
    std::vector<double> p_values{1.0, 2.0, 4.0};
    std::vector<double> n_list;
    std::uint64_t seed = 1;
    double tolerance = probability_tolerance;
    std::size_t cap_nodes = default_node_cap;
    std::filesystem::path out = "results";
    SolverMode mode = SolverMode::Implicit;
    Stepping stepping = Stepping::Exact;
    LadderMode ladder_mode = LadderMode::InfConvolution;
    std::size_t samples = 2000;
    std::vector<double> wealth{0.0};
    std::string instance_id = "config";
    bool battery = false;
    std::size_t battery_instances = 200;
    std::size_t battery_markets = 20;
};

struct ClaimSpec {
    bool american = false;
    FieldSpec payoff;
};

/// Upper side of a comparison run; empty members reuse the base config.
struct ComparisonSpec {
    std::optional<FieldSpec> terminal;
    std::optional<FieldSpec> obstacle;
    std::optional<nlohmann::json> generator;
};

struct ExperimentConfig {
    std::string text;  // file content, hashed into the manifest
    std::filesystem::path base_dir;
    MppModel model;
    nlohmann::json generator;
    std::optional<FieldSpec> terminal;
    std::optional<FieldSpec> obstacle;
    bool clip_obstacle_at_leaves = false;
    std::optional<MarketModel> market;
    std::optional<ClaimSpec> claim;
    std::optional<ComparisonSpec> comparison;
    RunSpec run;
};

/// Overrides taken from the command line; they win over the run block.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> tolerance;
    std::optional<std::size_t> cap_nodes;
    std::optional<std::filesystem::path> out;
};

/// Throws ConfigError (or a model error such as CompensatorOutOfRange).
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".",
                              const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

FieldSpec parse_field(const nlohmann::json& j, const char* what);

/// Builds the generator block; `market` is required by the pricing family.
GeneratorSpec build_generator(const nlohmann::json& block, const MppModel& model, const MarketTree* market,
                              const std::filesystem::path& base_dir);

/// Variables visible to expressions at a node: t, i, n, m, n1..nK, W, T, N
/// and S when a price field is given.
std::map<std::string, double> node_variables(const ScenarioTree& tree, NodeId id, const NodeField* price = nullptr);

NodeField evaluate_field(const ScenarioTree& tree, const FieldSpec& spec, FieldDomain domain,
                         const NodeField* price = nullptr);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace rbsde
