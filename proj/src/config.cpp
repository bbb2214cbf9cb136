#include "rbsde/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rbsde/csv.hpp"
#include "rbsde/error.hpp"

namespace rbsde {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& what) { fail(ErrorCode::ConfigError, what); }

void check_keys(const json& block, const char* name, std::initializer_list<const char*> allowed) {
    if (!block.is_object()) config_error(std::string(name) + " must be an object");
    const std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& item : block.items()) {
        if (!known.count(item.key())) config_error("unknown key '" + item.key() + "' in " + name);
    }
}

double number(const json& j, const std::string& what) {
    if (!j.is_number()) config_error(what + " must be a number");
    return j.get<double>();
}

double number_or(const json& block, const char* key, double fallback) {
    return block.contains(key) ? number(block.at(key), key) : fallback;
}

std::vector<double> numbers(const json& j, const std::string& what) {
    if (j.is_number()) return {j.get<double>()};
    if (!j.is_array()) config_error(what + " must be a number or an array of numbers");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(number(v, what));
    return out;
}

std::size_t count(const json& j, const std::string& what) {
    if (!j.is_number_integer() || j.get<long long>() < 0) config_error(what + " must be a nonnegative integer");
    return j.get<std::size_t>();
}

std::vector<double> broadcast(std::vector<double> v, std::size_t n, const std::string& what) {
    if (v.size() == 1) return std::vector<double>(n, v.front());
    if (v.size() != n) config_error(what + " has " + std::to_string(v.size()) + " entries, expected " + std::to_string(n));
    return v;
}

MppModel parse_model(const json& block, double tolerance) {
    check_keys(block, "model", {"grid", "horizon", "steps", "delta_a", "kernel", "marks", "brownian"});
    std::vector<double> grid;
    if (block.contains("grid")) {
        grid = numbers(block.at("grid"), "model.grid");
    } else if (block.contains("horizon") && block.contains("steps")) {
        const double horizon = number(block.at("horizon"), "model.horizon");
        const std::size_t steps = count(block.at("steps"), "model.steps");
        for (std::size_t i = 0; i <= steps; ++i) grid.push_back(horizon * static_cast<double>(i) / static_cast<double>(steps));
    } else {
        config_error("model needs either grid or horizon and steps");
    }
    if (grid.size() < 2) config_error("model.grid needs at least two points");
    const std::size_t steps = grid.size() - 1;
    if (!block.contains("delta_a")) config_error("model.delta_a is required");
    std::vector<double> delta_a = broadcast(numbers(block.at("delta_a"), "model.delta_a"), steps, "model.delta_a");

    std::vector<std::vector<double>> kernel;
    if (!block.contains("kernel")) {
        kernel.assign(steps, {1.0});
    } else {
        const json& k = block.at("kernel");
        if (!k.is_array() || k.empty()) config_error("model.kernel must be a nonempty array");
        if (k.front().is_number()) {
            kernel.assign(steps, numbers(k, "model.kernel"));
        } else {
            for (const auto& row : k) kernel.push_back(numbers(row, "model.kernel row"));
            if (kernel.size() == 1) kernel.assign(steps, kernel.front());
        }
    }
    const bool brownian = block.value("brownian", false);
    if (block.contains("marks")) {
        std::vector<std::string> labels;
        for (const auto& l : block.at("marks")) {
            if (!l.is_string()) config_error("model.marks must be strings");
            labels.push_back(l.get<std::string>());
        }
        return build_model(std::move(grid), std::move(delta_a), std::move(kernel), brownian, MarkSpace(std::move(labels)),
                           tolerance);
    }
    return build_model(std::move(grid), std::move(delta_a), std::move(kernel), brownian, tolerance);
}

MarketModel parse_market(const json& block) {
    check_keys(block, "market", {"drift", "volatility", "jump_sizes", "constraint_set", "risk_aversion", "s0"});
    MarketModel m;
    if (block.contains("drift")) m.drift = numbers(block.at("drift"), "market.drift");
    if (block.contains("volatility")) m.volatility = numbers(block.at("volatility"), "market.volatility");
    if (block.contains("jump_sizes")) m.jump_sizes = numbers(block.at("jump_sizes"), "market.jump_sizes");
    if (!block.contains("constraint_set")) config_error("market.constraint_set is required");
    const json& c = block.at("constraint_set");
    if (c.is_array()) {
        for (const auto& v : c) m.constraint_set.push_back(number(v, "market.constraint_set"));
    } else {
        m.constraint_set = numbers(c, "market.constraint_set");
    }
    m.risk_aversion = number_or(block, "risk_aversion", 1.0);
    m.s0 = number_or(block, "s0", 1.0);
    return m;
}

SolverMode parse_mode(const std::string& s) {
    if (s == "implicit") return SolverMode::Implicit;
    if (s == "explicit") return SolverMode::Explicit;
    config_error("run.mode must be implicit or explicit");
}

Stepping parse_stepping(const std::string& s) {
    if (s == "exact") return Stepping::Exact;
    if (s == "euler") return Stepping::Euler;
    config_error("run.stepping must be exact or euler");
}

LadderMode parse_ladder_mode(const std::string& s) {
    if (s == "inf_convolution") return LadderMode::InfConvolution;
    if (s == "truncation") return LadderMode::Truncation;
    config_error("run.ladder_mode must be inf_convolution or truncation");
}

std::string string_at(const json& block, const char* key, const std::string& where) {
    const json& v = block.at(key);
    if (!v.is_string()) config_error(where + "." + key + " must be a string");
    return v.get<std::string>();
}

RunSpec parse_run(const json& block) {
    check_keys(block, "run", {"command", "p", "n_list", "seed", "tolerance", "cap_nodes", "out", "mode", "stepping",
                              "ladder_mode", "samples", "wealth", "instance_id", "battery"});
    RunSpec r;
    if (block.contains("command")) r.command = string_at(block, "command", "run");
    if (block.contains("p")) r.p_values = numbers(block.at("p"), "run.p");
    if (block.contains("n_list")) r.n_list = numbers(block.at("n_list"), "run.n_list");
    if (block.contains("seed")) {
        const json& s = block.at("seed");
        if (!s.is_number_unsigned()) config_error("run.seed must be a nonnegative integer");
        r.seed = s.get<std::uint64_t>();
    }
    r.tolerance = number_or(block, "tolerance", r.tolerance);
    if (block.contains("cap_nodes")) r.cap_nodes = count(block.at("cap_nodes"), "run.cap_nodes");
    if (block.contains("out")) r.out = string_at(block, "out", "run");
    if (block.contains("mode")) r.mode = parse_mode(string_at(block, "mode", "run"));
    if (block.contains("stepping")) r.stepping = parse_stepping(string_at(block, "stepping", "run"));
    if (block.contains("ladder_mode")) r.ladder_mode = parse_ladder_mode(string_at(block, "ladder_mode", "run"));
    if (block.contains("samples")) r.samples = count(block.at("samples"), "run.samples");
    if (block.contains("wealth")) r.wealth = numbers(block.at("wealth"), "run.wealth");
    if (block.contains("instance_id")) r.instance_id = string_at(block, "instance_id", "run");
    if (block.contains("battery")) {
        const json& b = block.at("battery");
        if (b.is_boolean()) {
            r.battery = b.get<bool>();
        } else {
            check_keys(b, "run.battery", {"instances", "markets"});
            r.battery = true;
            if (b.contains("instances")) r.battery_instances = count(b.at("instances"), "run.battery.instances");
            if (b.contains("markets")) r.battery_markets = count(b.at("markets"), "run.battery.markets");
        }
    }
    for (double p : r.p_values) {
        if (!(p >= 1.0)) config_error("run.p values must be >= 1");
    }
    for (double n : r.n_list) {
        if (!(n > 0.0)) config_error("run.n_list values must be positive");
    }
    return r;
}

GeneratorParams parse_declared(const json& block) {
    check_keys(block, "generator.declared",
               {"lambda", "beta", "beta_tilde", "c0", "gamma", "alpha", "convexity"});
    GeneratorParams p;
    p.lambda = number_or(block, "lambda", p.lambda);
    p.beta = number_or(block, "beta", p.beta);
    p.beta_tilde = number_or(block, "beta_tilde", p.beta_tilde);
    p.c0 = number_or(block, "c0", p.c0);
    p.gamma = number_or(block, "gamma", p.gamma);
    if (block.contains("alpha")) p.alpha = numbers(block.at("alpha"), "generator.declared.alpha");
    if (block.contains("convexity")) {
        const std::string c = string_at(block, "convexity", "generator.declared");
        if (c == "convex") p.convexity = Convexity::Convex;
        else if (c == "concave") p.convexity = Convexity::Concave;
        else if (c == "none") p.convexity = Convexity::None;
        else config_error("generator.declared.convexity must be convex, concave or none");
    }
    return p;
}

}  // namespace

FieldSpec parse_field(const json& j, const char* what) {
    FieldSpec spec;
    if (j.is_number()) {
        spec.expr = Expression::parse(format_double(j.get<double>()));
    } else if (j.is_string()) {
        spec.expr = Expression::parse(j.get<std::string>());
    } else if (j.is_object() && (j.contains("leaves") || j.contains("nodes"))) {
        if (j.size() != 1) config_error(std::string(what) + " table takes exactly one of leaves or nodes");
        spec.kind = FieldSpec::Kind::Table;
        spec.table = numbers(j.contains("leaves") ? j.at("leaves") : j.at("nodes"), what);
    } else {
        config_error(std::string(what) + " must be a number, an expression string or a {leaves|nodes} table");
    }
    return spec;
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const ConfigOverrides& overrides) {
    json root;
    try {
        root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        config_error(std::string("malformed config: ") + e.what());
    }
    try {
        check_keys(root, "config", {"model", "generator", "data", "market", "claim", "comparison", "run"});
        ExperimentConfig cfg;
        cfg.text = text;
        cfg.base_dir = base_dir;
        cfg.run = parse_run(root.value("run", json::object()));
        if (overrides.seed) cfg.run.seed = *overrides.seed;
        if (overrides.tolerance) cfg.run.tolerance = *overrides.tolerance;
        if (overrides.cap_nodes) cfg.run.cap_nodes = *overrides.cap_nodes;
        if (overrides.out) cfg.run.out = *overrides.out;
        if (!(cfg.run.tolerance > 0.0)) config_error("tolerance must be positive");

        if (!root.contains("model")) config_error("model block is required");
        cfg.model = parse_model(root.at("model"), cfg.run.tolerance);
        cfg.generator = root.value("generator", json{{"family", root.contains("market") ? "pricing" : "zero"}});
        if (!cfg.generator.is_object() || !cfg.generator.contains("family"))
            config_error("generator block needs a family");

        if (root.contains("data")) {
            const json& data = root.at("data");
            check_keys(data, "data", {"terminal", "obstacle", "obstacle_leaves"});
            if (data.contains("terminal")) cfg.terminal = parse_field(data.at("terminal"), "data.terminal");
            if (data.contains("obstacle") && !data.at("obstacle").is_null())
                cfg.obstacle = parse_field(data.at("obstacle"), "data.obstacle");
            if (data.contains("obstacle_leaves")) {
                const std::string policy = string_at(data, "obstacle_leaves", "data");
                if (policy == "clip") cfg.clip_obstacle_at_leaves = true;
                else if (policy != "strict") config_error("data.obstacle_leaves must be strict or clip");
            }
        }
        if (root.contains("market")) {
            cfg.market = parse_market(root.at("market"));
            validate_market(*cfg.market, cfg.model);
        }
        if (root.contains("claim")) {
            const json& c = root.at("claim");
            check_keys(c, "claim", {"style", "payoff"});
            ClaimSpec claim;
            const std::string style = c.contains("style") ? string_at(c, "style", "claim") : "european";
            if (style == "american") claim.american = true;
            else if (style != "european") config_error("claim.style must be european or american");
            if (!c.contains("payoff")) config_error("claim.payoff is required");
            claim.payoff = parse_field(c.at("payoff"), "claim.payoff");
            cfg.claim = std::move(claim);
        }
        if (root.contains("comparison")) {
            const json& c = root.at("comparison");
            check_keys(c, "comparison", {"terminal", "obstacle", "generator"});
            ComparisonSpec cmp;
            if (c.contains("terminal")) cmp.terminal = parse_field(c.at("terminal"), "comparison.terminal");
            if (c.contains("obstacle")) cmp.obstacle = parse_field(c.at("obstacle"), "comparison.obstacle");
            if (c.contains("generator")) cmp.generator = c.at("generator");
            cfg.comparison = std::move(cmp);
        }
        return cfg;
    } catch (const json::exception& e) {
        config_error(std::string("invalid config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) config_error("cannot read config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.parent_path().empty() ? "." : path.parent_path(), overrides);
}

GeneratorSpec build_generator(const json& block, const MppModel& model, const MarketTree* market,
                              const std::filesystem::path& base_dir) {
    try {
        check_keys(block, "generator",
                   {"family", "value", "lambda", "a", "c", "g", "path", "declared", "shift", "inf_convolution",
                    "truncate"});
        const std::string family = string_at(block, "family", "generator");
        auto make = [&]() -> GeneratorSpec {
            if (family == "zero") return zero_generator();
            if (family == "constant") return constant_generator(number_or(block, "value", 0.0));
            if (family == "entropic") return entropic(number_or(block, "lambda", 1.0));
            if (family == "neg_entropic") return neg_entropic(number_or(block, "lambda", 1.0));
            if (family == "linear_in_u") {
                LinearInUParams p;
                p.a = number_or(block, "a", 0.0);
                p.c = block.contains("c") ? broadcast(numbers(block.at("c"), "generator.c"), model.mark_count(), "generator.c")
                                          : std::vector<double>(model.mark_count(), 0.0);
                if (block.contains("g")) p.g = broadcast(numbers(block.at("g"), "generator.g"), model.steps(), "generator.g");
                p.lambda = number_or(block, "lambda", 1.0);
                if (block.contains("declared")) return linear_in_u(p, parse_declared(block.at("declared")));
                return linear_in_u(model, p);
            }
            if (family == "user_table") {
                if (!block.contains("path")) config_error("generator.path is required for user_table");
                std::filesystem::path path = string_at(block, "path", "generator");
                if (path.is_relative()) path = base_dir / path;
                UserTable table = load_user_table(path.string());
                if (table.marks != model.mark_count())
                    config_error("user table has " + std::to_string(table.marks) + " mark columns, model has " +
                                 std::to_string(model.mark_count()));
                for (const auto& row : table.rows) {
                    if (row.step >= model.steps()) config_error("user table references step " + std::to_string(row.step));
                }
                GeneratorParams declared = block.contains("declared") ? parse_declared(block.at("declared")) : GeneratorParams{};
                return user_table(std::move(table), declared);
            }
            if (family == "pricing") {
                if (!market) config_error("pricing generator needs a market block");
                return pricing_generator(*market);
            }
            config_error("unknown generator family '" + family + "'");
        };
        GeneratorSpec gen = make();
        if (block.contains("shift")) gen = shifted(gen, number(block.at("shift"), "generator.shift"));
        if (block.contains("inf_convolution"))
            gen = inf_convolution(gen, number(block.at("inf_convolution"), "generator.inf_convolution"));
        if (block.contains("truncate")) gen = truncate(gen, number(block.at("truncate"), "generator.truncate"));
        return gen;
    } catch (const json::exception& e) {
        config_error(std::string("invalid generator block: ") + e.what());
    }
}

std::map<std::string, double> node_variables(const ScenarioTree& tree, NodeId id, const NodeField* price) {
    const MppModel& model = tree.model();
    const std::size_t k = model.mark_count();
    std::vector<double> per_mark(k, 0.0);
    double jumps = 0.0;
    double last_mark = 0.0;
    double w = 0.0;
    for (NodeId v : tree.path_to(id)) {
        const TreeNode& node = tree.node(v);
        if (v == 0) continue;
        if (node.outcome.jump()) {
            jumps += 1.0;
            last_mark = node.outcome.mark + 1;
            per_mark[static_cast<std::size_t>(node.outcome.mark)] += 1.0;
        }
        w += node.outcome.brownian * std::sqrt(model.dt(node.depth - 1));
    }
    const std::size_t depth = tree.node(id).depth;
    std::map<std::string, double> vars{
        {"t", model.grid[depth]},
        {"i", static_cast<double>(depth)},
        {"n", jumps},
        {"m", last_mark},
        {"W", w},
        {"T", model.grid.back()},
        {"N", static_cast<double>(model.steps())},
    };
    for (std::size_t e = 0; e < k; ++e) vars["n" + std::to_string(e + 1)] = per_mark[e];
    if (price) vars["S"] = (*price)[id];
    return vars;
}

NodeField evaluate_field(const ScenarioTree& tree, const FieldSpec& spec, FieldDomain domain, const NodeField* price) {
    if (spec.kind == FieldSpec::Kind::Table) {
        const std::size_t expected = domain == FieldDomain::Leaves ? tree.leaf_count() : tree.size();
        if (spec.table.size() != expected)
            config_error("table has " + std::to_string(spec.table.size()) + " entries, the tree needs " +
                         std::to_string(expected));
        const NodeId offset = domain == FieldDomain::Leaves ? tree.first_leaf() : 0;
        return NodeField::from_function(tree, domain, [&](NodeId id) { return spec.table[id - offset]; });
    }
    return NodeField::from_function(tree, domain,
                                    [&](NodeId id) { return spec.expr.evaluate(node_variables(tree, id, price)); });
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace rbsde
