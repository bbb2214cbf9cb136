#include "rbsde/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "rbsde/battery.hpp"
#include "rbsde/checks.hpp"
#include "rbsde/config.hpp"
#include "rbsde/csv.hpp"
#include "rbsde/error.hpp"
#include "rbsde/oracle.hpp"

namespace rbsde {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

inline constexpr double oracle_tolerance = 1e-9;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::FixedPointDiverged:
        case ErrorCode::MinimizerDiverged: return exit_numerical;
        default: return exit_config;
    }
}

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

std::string sanitize(std::string text) {
    std::replace(text.begin(), text.end(), ',', ';');
    std::replace(text.begin(), text.end(), '\n', ' ');
    return text;
}

struct Problem {
    std::optional<MarketTree> market;
    ScenarioTree tree;
    NodeField terminal;
    Obstacle obstacle;
};

class Session {
public:
    Session(const CliOptions& options, ExperimentConfig cfg, std::ostream& out)
        : options_(options), cfg_(std::move(cfg)), out_(out), dir_(cfg_.run.out) {
        fs::create_directories(dir_);
    }

    const ExperimentConfig& cfg() const { return cfg_; }
    const fs::path& dir() const { return dir_; }
    const std::vector<std::string>& outputs() const { return outputs_; }
    std::ostream& out() { return out_; }
    bool timings() const { return options_.timings; }

    void write(const std::string& name, const std::string& content) {
        write_file_atomic(dir_ / name, content);
        outputs_.push_back(name);
    }

    SolverOptions solver_options() const {
        SolverOptions o;
        o.mode = cfg_.run.mode;
        o.stepping = cfg_.run.stepping;
        return o;
    }

    Problem problem(bool need_terminal = true) const {
        Problem p;
        if (cfg_.market) {
            p.market = build_market_tree(*cfg_.market, cfg_.model, cfg_.run.cap_nodes);
            p.tree = p.market->tree;
        } else {
            p.tree = build_tree(cfg_.model, cfg_.run.cap_nodes);
        }
        const NodeField* price = p.market ? &p.market->price : nullptr;
        if (cfg_.terminal) {
            p.terminal = evaluate_field(p.tree, *cfg_.terminal, FieldDomain::Leaves, price);
        } else if (cfg_.claim) {
            p.terminal = evaluate_field(p.tree, cfg_.claim->payoff, FieldDomain::Leaves, price);
        } else if (need_terminal) {
            fail(ErrorCode::ConfigError, "data.terminal is required for this command");
        }
        p.obstacle = obstacle_for(p.tree, cfg_.obstacle, p.terminal, price);
        return p;
    }

    Obstacle obstacle_for(const ScenarioTree& tree, const std::optional<FieldSpec>& spec, const NodeField& terminal,
                          const NodeField* price) const {
        if (!spec) return Obstacle::inactive();
        NodeField field = evaluate_field(tree, *spec, FieldDomain::AllNodes, price);
        if (cfg_.clip_obstacle_at_leaves && terminal.size() == tree.size()) {
            for (NodeId id = tree.first_leaf(); id < tree.size(); ++id) field[id] = std::min(field[id], terminal[id]);
        }
        return Obstacle::from_field(tree, std::move(field));
    }

    GeneratorSpec generator(const Problem& p, const nlohmann::json& block) const {
        return build_generator(block, cfg_.model, p.market ? &*p.market : nullptr, cfg_.base_dir);
    }

private:
    const CliOptions& options_;
    ExperimentConfig cfg_;
    std::ostream& out_;
    fs::path dir_;
    std::vector<std::string> outputs_;
};

int cmd_validate(Session& s) {
    const ExperimentConfig& cfg = s.cfg();
    const std::size_t nodes = tree_node_count(cfg.model);
    s.out() << "model: " << cfg.model.steps() << " steps, " << cfg.model.mark_count() << " marks, "
            << (cfg.model.brownian ? "brownian" : "pure jump") << ", " << nodes << " nodes\n";
    if (nodes > cfg.run.cap_nodes)
        fail(ErrorCode::TreeTooLarge, std::to_string(nodes) + " nodes exceed the cap of " + std::to_string(cfg.run.cap_nodes));

    std::optional<MarketTree> market;
    if (cfg.market) market = build_market_tree(*cfg.market, cfg.model, cfg.run.cap_nodes);
    const GeneratorSpec gen = build_generator(cfg.generator, cfg.model, market ? &*market : nullptr, cfg.base_dir);
    const AssumptionReport report = validate_assumptions(gen, cfg.model, cfg.run.samples, cfg.run.seed);

    CsvWriter csv({"assumption", "verdict", "worst_margin", "detail"});
    for (const auto& e : report.entries) {
        csv.cell(e.name).cell(to_string(e.verdict)).cell(e.worst).cell(sanitize(e.detail)).end_row();
        s.out() << e.name << ": " << to_string(e.verdict) << " (worst " << format_double(e.worst) << ") " << e.detail
                << "\n";
    }
    s.write("assumptions.csv", csv.str());
    if (!report.all_pass()) {
        s.out() << "generator " << gen.name() << " violates its declared assumptions\n";
        return exit_config;
    }
    return exit_ok;
}

int cmd_solve(Session& s) {
    const Problem p = s.problem();
    const GeneratorSpec gen = s.generator(p, s.cfg().generator);
    const RbsdeSolution sol = rbsde_solve(p.tree, gen, p.terminal, p.obstacle, s.solver_options());

    std::ostringstream body;
    write_solution_csv(body, p.tree, sol);
    s.write("solution.csv", body.str());
    const double residual = max_pathwise_residual(p.tree, sol, p.terminal);
    CsvWriter summary({"root_y", "nodes", "max_flat_off", "min_barrier_gap", "max_residual"});
    summary.cell(sol.root()).cell(p.tree.size()).cell(sol.max_flat_off).cell(sol.min_barrier_gap).cell(residual).end_row();
    s.write("summary.csv", summary.str());
    s.out() << "root y = " << format_double(sol.root()) << " (" << p.tree.size() << " nodes, max flat-off "
            << format_double(sol.max_flat_off) << ")\n";
    return exit_ok;
}

int cmd_snell(Session& s) {
    const Problem p = s.problem();
    const GeneratorSpec gen = s.generator(p, s.cfg().generator);
    const SolverOptions options = s.solver_options();
    const RbsdeSolution sol = rbsde_solve(p.tree, gen, p.terminal, p.obstacle, options);
    const auto start = Clock::now();
    const SnellResult snell = snell_value(p.tree, gen, p.terminal, p.obstacle, 0, options);
    OracleRow row{s.cfg().run.instance_id, snell.value, sol.root(), snell.rules, elapsed_ms(start)};
    s.write("snell.csv", oracle_csv({row}, s.timings()));
    const double gap = std::abs(snell.value - sol.root());
    s.out() << "snell value " << format_double(snell.value) << ", solver " << format_double(sol.root()) << ", gap "
            << format_double(gap) << " over " << snell.rules << " rules\n";
    return gap <= oracle_tolerance * std::max(1.0, std::abs(snell.value)) ? exit_ok : exit_check;
}

int cmd_check(Session& s) {
    const ExperimentConfig& cfg = s.cfg();
    const Problem p = s.problem();
    const GeneratorSpec gen = s.generator(p, cfg.generator);
    const SolverOptions options = s.solver_options();
    const RbsdeSolution sol = rbsde_solve(p.tree, gen, p.terminal, p.obstacle, options);
    const NodeField* price = p.market ? &p.market->price : nullptr;

    std::vector<CheckReport> reports;
    if (cfg.comparison) {
        const ComparisonSpec& c = *cfg.comparison;
        const GeneratorSpec hat_gen = s.generator(p, c.generator ? *c.generator : cfg.generator);
        const NodeField hat_terminal =
            c.terminal ? evaluate_field(p.tree, *c.terminal, FieldDomain::Leaves, price) : p.terminal;
        const Obstacle hat_obstacle =
            c.obstacle ? s.obstacle_for(p.tree, c.obstacle, hat_terminal, price) : p.obstacle;
        const RbsdeSolution hat = rbsde_solve(p.tree, hat_gen, hat_terminal, hat_obstacle, options);
        reports.push_back(comparison_check(p.tree, {sol, gen, p.terminal, p.obstacle},
                                           {hat, hat_gen, hat_terminal, hat_obstacle}));
    }
    CsvWriter margins({"p", "node_id", "log_lhs", "log_rhs", "margin"});
    for (double pv : cfg.run.p_values) {
        CheckReport r = y_exponential_bound(p.tree, sol, gen, p.terminal, p.obstacle, pv, cfg.run.seed);
        for (const auto& row : r.rows) margins.cell(pv).cell(row.node).cell(row.lhs).cell(row.rhs).cell(row.margin).end_row();
        reports.push_back(std::move(r));
    }
    for (double pv : cfg.run.p_values) reports.push_back(uk_moment_report(p.tree, sol, gen, pv));
    if (!cfg.run.n_list.empty())
        reports.push_back(truncation_stability(p.tree, gen, p.terminal, p.obstacle, cfg.run.n_list, options));
    for (auto& r : reports) r.instance_id = cfg.run.instance_id;

    s.write("checks.csv", checks_csv(reports));
    s.write("checks.txt", checks_text(reports));
    s.write("bound_margin.csv", margins.str());
    s.out() << checks_text(reports);
    bool failed = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.verdict == Verdict::Fail; });

    if (cfg.run.battery) {
        BatteryOptions bo;
        bo.seed = cfg.run.seed;
        bo.instances = cfg.run.battery_instances;
        bo.markets = cfg.run.battery_markets;
        bo.p_values = cfg.run.p_values;
        for (const auto& [name, outcome] : run_full_battery(bo)) {
            s.write(name, outcome.csv);
            s.out() << name << ": " << (outcome.pass ? "pass" : "fail") << " " << outcome.summary << "\n";
            failed = failed || !outcome.pass;
        }
    }
    return failed ? exit_check : exit_ok;
}

int cmd_ladder(Session& s) {
    const ExperimentConfig& cfg = s.cfg();
    const Problem p = s.problem();
    const GeneratorSpec gen = s.generator(p, cfg.generator);
    std::vector<double> n_list = cfg.run.n_list;
    if (n_list.empty()) n_list = {1, 2, 4, 8, 16, 32, 64};
    const LadderResult ladder =
        approximation_ladder(p.tree, gen, p.terminal, p.obstacle, n_list, cfg.run.ladder_mode, s.solver_options());

    std::vector<std::string> header{"n", "root_y", "direct_root_y", "gap"};
    if (s.timings()) header.push_back("wallclock_ms");
    CsvWriter csv(header);
    for (const auto& row : ladder.rows) {
        csv.cell(row.n).cell(row.root_y).cell(ladder.direct.root()).cell(row.gap);
        if (s.timings()) csv.cell(row.wallclock_ms);
        csv.end_row();
        s.out() << "n = " << format_double(row.n) << ": root " << format_double(row.root_y) << ", gap "
                << format_double(row.gap) << "\n";
    }
    s.write("ladder.csv", csv.str());
    return exit_ok;
}

std::size_t strategy_count(const MarketTree& mt) {
    const std::size_t internal = mt.tree.first_leaf();
    const std::size_t c = mt.market.constraint_set.size();
    std::size_t total = 1;
    for (std::size_t k = 0; k < internal; ++k) {
        if (total > strategy_enumeration_cap / std::max<std::size_t>(c, 1)) return strategy_enumeration_cap + 1;
        total *= c;
    }
    return total;
}

int cmd_price(Session& s) {
    const ExperimentConfig& cfg = s.cfg();
    if (!cfg.market) fail(ErrorCode::ConfigError, "price needs a market block");
    if (!cfg.claim) fail(ErrorCode::ConfigError, "price needs a claim block");
    const MarketTree mt = build_market_tree(*cfg.market, cfg.model, cfg.run.cap_nodes);
    const GeneratorSpec gen = pricing_generator(mt);
    const NodeField payoff = evaluate_field(mt.tree, cfg.claim->payoff, FieldDomain::AllNodes, &mt.price);
    const SolverOptions options = s.solver_options();
    const PricingResult euro = european_price(mt, gen, payoff, options);
    bool failed = false;

    if (cfg.claim->american) {
        const AmericanResult amer = american_price(mt, gen, payoff, options);
        std::ostringstream body;
        write_price_csv(body, mt, amer.solution, amer.pi_star, &amer.exercise_flag);
        s.write("price.csv", body.str());
        std::ostringstream boundary;
        write_boundary_csv(boundary, amer.boundary);
        s.write("boundary.csv", boundary.str());
        const double premium = amer.solution.root() - euro.solution.root();
        s.out() << "american " << format_double(amer.solution.root()) << ", european "
                << format_double(euro.solution.root()) << ", early-exercise premium " << format_double(premium) << "\n";
        for (NodeId id = 0; id < mt.tree.size(); ++id) {
            if (amer.solution.y[id] < euro.solution.y[id] - comparison_tolerance ||
                amer.solution.y[id] < payoff[id] - comparison_tolerance)
                failed = true;
        }
        if (failed) s.out() << "american price falls below the european price or the payoff\n";
    } else {
        std::ostringstream body;
        write_price_csv(body, mt, euro.solution, euro.pi_star);
        s.write("price.csv", body.str());
        s.out() << "european " << format_double(euro.solution.root()) << "\n";
    }

    const std::size_t strategies = strategy_count(mt);
    if (strategies <= strategy_enumeration_cap) {
        std::vector<OracleRow> rows;
        for (double x : cfg.run.wealth) {
            const auto start = Clock::now();
            const UtilityResult oracle = brute_force_utility(mt, payoff, x);
            const double implied = implied_price(oracle.value, x, mt.market.risk_aversion);
            rows.push_back({cfg.run.instance_id + "@x=" + format_double(x), implied, euro.solution.root(),
                            oracle.strategies, elapsed_ms(start)});
            const double gap = std::abs(implied - euro.solution.root());
            s.out() << "utility oracle at x = " << format_double(x) << ": implied price " << format_double(implied)
                    << ", gap " << format_double(gap) << "\n";
            if (gap > oracle_tolerance * std::max(1.0, std::abs(implied))) failed = true;
        }
        s.write("oracle.csv", oracle_csv(rows, s.timings()));
    } else {
        s.out() << "utility oracle skipped: more than " << strategy_enumeration_cap << " strategies\n";
    }
    return failed ? exit_check : exit_ok;
}

void write_manifest(const CliOptions& options, const ExperimentConfig& cfg, const fs::path& dir,
                    const std::vector<std::string>& outputs, double wallclock, int code, const std::string& error) {
    nlohmann::json versions{{"rbsde", library_version},
                            {"compiler", __VERSION__},
                            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    for (const auto& [k, v] : options.versions) versions[k] = v;
    nlohmann::json m{
        {"command", options.command},
        {"config", options.config ? options.config->string() : ""},
        {"config_hash", "fnv1a64:" + hex64(fnv1a64(cfg.text))},
        {"seed", cfg.run.seed},
        {"threads", options.threads.value_or(1)},
        {"tolerance", cfg.run.tolerance},
        {"cap_nodes", cfg.run.cap_nodes},
        {"versions", versions},
        {"wallclock_ms", wallclock},
        {"outputs", outputs},
        {"exit_code", code},
    };
    if (!error.empty()) m["error"] = error;
    write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

std::optional<std::vector<std::string>> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name, const fs::path& file) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorCode::MissingResults, file.string() + " has no column " + name);
    return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

std::vector<fs::path> emit_plotdata(const fs::path& results_dir) {
    const fs::path dir = results_dir / "plotdata";
    std::vector<fs::path> written;
    auto emit = [&](const std::string& input, const std::string& output, std::vector<std::string> columns,
                    const std::string& derived,
                    const std::function<void(CsvWriter&, const std::vector<std::string>&)>& row_fn) {
        const fs::path src = results_dir / input;
        const auto lines = read_lines(src);
        if (!lines || lines->empty()) return;
        const auto header = split_csv_line(lines->front());
        std::vector<std::size_t> idx;
        for (const auto& c : columns) idx.push_back(column(header, c, src));
        std::vector<std::string> out_header = columns;
        if (row_fn) out_header.push_back(derived);
        CsvWriter csv(out_header);
        for (std::size_t r = 1; r < lines->size(); ++r) {
            const auto cells = split_csv_line((*lines)[r]);
            std::vector<std::string> picked;
            for (std::size_t i : idx) picked.push_back(i < cells.size() ? cells[i] : "");
            for (const auto& c : picked) csv.cell(std::string_view(c));
            if (row_fn) row_fn(csv, picked);
            csv.end_row();
        }
        fs::create_directories(dir);
        write_file_atomic(dir / output, csv.str());
        written.push_back(dir / output);
    };
    auto log10_cell = [](CsvWriter& csv, const std::vector<std::string>& picked) {
        const std::string& v = picked.back();
        const double x = v.empty() ? 0.0 : std::stod(v);
        csv.cell(x > 0.0 ? std::log10(x) : std::nan(""));
    };
    emit("ladder.csv", "ladder_convergence.csv", {"n", "gap"}, "log10_gap", log10_cell);
    emit("boundary.csv", "exercise_boundary.csv", {"t", "min_price_exercised", "max_price_continued"}, "", {});
    emit("bound_margin.csv", "bound_margin.csv", {"p", "node_id", "margin"}, "log10_margin", log10_cell);
    if (written.empty())
        fail(ErrorCode::MissingResults,
             "no ladder.csv, boundary.csv or bound_margin.csv in " + results_dir.string());
    return written;
}

int run_command(const CliOptions& options, std::ostream& out, std::ostream& err) {
    static const std::map<std::string, std::function<int(Session&)>> commands{
        {"validate", cmd_validate}, {"solve", cmd_solve}, {"snell", cmd_snell}, {"check", cmd_check},
        {"ladder", cmd_ladder},     {"price", cmd_price},
    };
    const auto start = Clock::now();

    if (options.command == "plotdata") {
        try {
            fs::path dir = options.out.value_or("results");
            if (!options.out && options.config) dir = load_config(*options.config).run.out;
            for (const auto& path : emit_plotdata(dir)) out << "wrote " << path.string() << "\n";
            return exit_ok;
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            return exit_code_for(e.code());
        }
    }

    ExperimentConfig cfg;
    try {
        if (!options.config) fail(ErrorCode::ConfigError, "--config is required");
        ConfigOverrides overrides{options.seed, options.tolerance, options.cap_nodes, options.out};
        cfg = load_config(*options.config, overrides);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    }

    std::string command = options.command.empty() ? cfg.run.command : options.command;
    const auto it = commands.find(command);
    if (it == commands.end()) {
        err << "error: " << to_string(ErrorCode::ConfigError) << ": unknown command '" << command << "'\n";
        return exit_config;
    }
    cfg.run.command = command;

    int code = exit_ok;
    std::string error;
    std::optional<Session> session;
    try {
        session.emplace(options, cfg, out);
        if (options.dump_tree) {
            std::ostringstream body;
            build_tree(cfg.model, cfg.run.cap_nodes).write_csv(body);
            session->write("tree.csv", body.str());
        }
        code = it->second(*session);
    } catch (const Error& e) {
        error = e.what();
        code = exit_code_for(e.code());
    } catch (const std::exception& e) {
        error = e.what();
        code = exit_numerical;
    }
    if (!error.empty()) err << "error: " << error << "\n";
    if (session) {
        CliOptions effective = options;
        effective.command = command;
        write_manifest(effective, session->cfg(), session->dir(), session->outputs(), elapsed_ms(start), code, error);
    }
    return code;
}

}  // namespace rbsde
