#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rbsde/cli.hpp"
#include "rbsde/config.hpp"
#include "rbsde/csv.hpp"
#include "rbsde/error.hpp"
#include "rbsde/expr.hpp"

using namespace rbsde;
namespace fs = std::filesystem;

namespace {

const char* fixture = R"cfg({
  "model": {"grid": [0, 1], "delta_a": 0.2, "kernel": [1.0]},
  "generator": {"family": "zero"},
  "data": {"terminal": "n", "obstacle": 0.5, "obstacle_leaves": "clip"},
  "run": {"seed": 1}
})cfg";

const char* put_config = R"cfg({
  "model": {"horizon": 1, "steps": 3, "delta_a": 0.3, "kernel": [0.5, 0.5]},
  "market": {"jump_sizes": [0.25, -0.2], "constraint_set": [-1, 0, 1]},
  "claim": {"style": "american", "payoff": "max(1.05 - S, 0)"},
  "run": {"seed": 1, "wealth": [0]}
})cfg";

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("rbsde_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text, const std::string& name = "config.json") {
    std::ofstream(dir / name) << text;
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::string& command, const fs::path& config, const fs::path& out_dir) {
    CliOptions o;
    o.command = command;
    o.config = config;
    o.out = out_dir;
    std::ostringstream out, err;
    const int code = run_command(o, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> rows(const fs::path& csv) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(slurp(csv));
    for (std::string line; std::getline(in, line);) out.push_back(split_csv_line(line));
    return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("expressions") {
    const std::map<std::string, double> vars{{"S", 0.8}, {"n", 2.0}, {"t", 0.5}};
    CHECK(Expression::parse("1 + 2 * 3 ^ 2").evaluate({}) == 19.0);
    CHECK(Expression::parse("-2^2").evaluate({}) == -4.0);
    CHECK(Expression::parse("(1 - 3) / 4").evaluate({}) == -0.5);
    CHECK(Expression::parse("max(1.05 - S, 0)").evaluate(vars) == doctest::Approx(0.25));
    CHECK(Expression::parse("min(n, 1, 3)").evaluate(vars) == 1.0);
    CHECK(Expression::parse("(n >= 2) * 5 + (t < 0.5)").evaluate(vars) == 5.0);
    CHECK(Expression::parse("exp(log(2)) + sqrt(9) + abs(-1)").evaluate({}) == doctest::Approx(6.0));
    CHECK(Expression::parse("1e-3 * 2").evaluate({}) == doctest::Approx(0.002));
    CHECK_THROWS_AS(Expression::parse("1 +"), Error);
    CHECK_THROWS_AS(Expression::parse("system(1)"), Error);
    CHECK_THROWS_AS(Expression::parse("q + 1").evaluate(vars), Error);
    CHECK_THROWS_AS(Expression::parse("abs(1, 2)"), Error);
}

TEST_CASE("FNV-1a reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("config parsing") {
    const ExperimentConfig cfg = parse_config(fixture);
    CHECK(cfg.model.steps() == 1);
    CHECK(cfg.terminal.has_value());
    CHECK(cfg.clip_obstacle_at_leaves);
    CHECK(cfg.run.seed == 1);

    ConfigOverrides o;
    o.seed = 99;
    CHECK(parse_config(fixture, ".", o).run.seed == 99);

    auto code = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidArgument;
    };
    CHECK(code(R"cfg({"model": {"grid": [0, 1], "delta_a": 1.2}})cfg") == ErrorCode::CompensatorOutOfRange);
    CHECK(code(R"cfg({"model": {"grid": [0, 1], "delta_a": 0.2}, "modle": {}})cfg") == ErrorCode::ConfigError);
    CHECK(code(R"cfg({"model": {"grid": [0, 1], "delta_a": 0.2}, "run": {"seed": -1}})cfg") == ErrorCode::ConfigError);
    CHECK(code("{ not json")== ErrorCode::ConfigError);
    CHECK(code(R"cfg({"model": {"grid": [0, 1], "delta_a": 0.2}, "data": {"terminal": "1 +"}})cfg") == ErrorCode::ConfigError);
}

TEST_CASE("node variables") {
    const ScenarioTree tree = build_tree(build_model({0.0, 0.5, 1.0}, {0.3, 0.3}, {{0.5, 0.5}, {0.5, 0.5}}, false));
    // children are ordered NoJump, e1, e2: node 3 is reached by mark 2 at step 0
    const auto v = node_variables(tree, 3);
    CHECK(v.at("i") == 1.0);
    CHECK(v.at("t") == 0.5);
    CHECK(v.at("n") == 1.0);
    CHECK(v.at("m") == 2.0);
    CHECK(v.at("n1") == 0.0);
    CHECK(v.at("n2") == 1.0);
    CHECK(v.count("S") == 0);

    FieldSpec table;
    table.kind = FieldSpec::Kind::Table;
    table.table = {1, 2, 3};
    CHECK_THROWS_AS(evaluate_field(tree, table, FieldDomain::Leaves), Error);
}

TEST_CASE("solve and snell on the reflected fixture") {
    const fs::path dir = scratch("fixture");
    const fs::path cfg = write_config(dir, fixture);
    const Run solve = run("solve", cfg, dir / "out");
    REQUIRE(solve.code == exit_ok);
    const auto sol = rows(dir / "out" / "solution.csv");
    CHECK(sol[0][0] == "node_id");
    CHECK(sol[1][2] == "0.5");

    const Run snell = run("snell", cfg, dir / "out");
    CHECK(snell.code == exit_ok);
    const auto s = rows(dir / "out" / "snell.csv");
    CHECK(s[1][3] == "0");

    const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
    CHECK(manifest["command"] == "snell");
    CHECK(manifest["seed"] == 1);
    CHECK(manifest["exit_code"] == 0);
}

TEST_CASE("validate reports an out-of-range compensator with exit 1") {
    const fs::path dir = scratch("bad");
    const fs::path cfg = write_config(dir, R"cfg({"model": {"grid": [0, 1], "delta_a": 1.2}})cfg");
    const Run r = run("validate", cfg, dir / "out");
    CHECK(r.code == exit_config);
    CHECK(r.err.find("CompensatorOutOfRange") != std::string::npos);
}

TEST_CASE("numerical failures map to exit 2") {
    const fs::path dir = scratch("diverge");
    // a * dA = 1 makes the implicit step y = mean + y, which has no solution
    const fs::path cfg = write_config(dir, R"cfg({
      "model": {"grid": [0, 1], "delta_a": 0.2},
      "generator": {"family": "linear_in_u", "a": 5, "declared": {"beta_tilde": 5}},
      "data": {"terminal": "n"}
    })cfg");
    const Run r = run("solve", cfg, dir / "out");
    CHECK(r.code == exit_numerical);
}

TEST_CASE("ladder gap column is nonincreasing") {
    const fs::path dir = scratch("ladder");
    const fs::path cfg = write_config(dir, R"cfg({
      "model": {"horizon": 1, "steps": 3, "delta_a": 0.3, "kernel": [0.6, 0.4]},
      "generator": {"family": "entropic", "lambda": 1},
      "data": {"terminal": "1.5*n1 - n2"},
      "run": {"n_list": [0.5, 1, 2, 4, 8]}
    })cfg");
    REQUIRE(run("ladder", cfg, dir / "out").code == exit_ok);
    const auto r = rows(dir / "out" / "ladder.csv");
    REQUIRE(r.size() == 6);
    CHECK(r[0][3] == "gap");
    for (std::size_t k = 2; k < r.size(); ++k) CHECK(std::stod(r[k][3]) <= std::stod(r[k - 1][3]));
    CHECK(std::stod(r.back()[3]) == 0.0);

    const auto plots = emit_plotdata(dir / "out");
    CHECK(plots.size() == 1);
    CHECK(fs::exists(dir / "out" / "plotdata" / "ladder_convergence.csv"));
}

TEST_CASE("price run writes one boundary row per step") {
    const fs::path dir = scratch("price");
    const fs::path cfg = write_config(dir, put_config);
    const Run r = run("price", cfg, dir / "out");
    REQUIRE(r.code == exit_ok);
    const auto b = rows(dir / "out" / "boundary.csv");
    CHECK(b[0] == std::vector<std::string>{"t", "min_price_exercised", "max_price_continued"});
    CHECK(b.size() == 1 + 3);
    const auto oracle = rows(dir / "out" / "oracle.csv");
    CHECK(std::abs(std::stod(oracle[1][3])) <= 1e-9);
    emit_plotdata(dir / "out");
    CHECK(fs::exists(dir / "out" / "plotdata" / "exercise_boundary.csv"));
}

TEST_CASE("check command writes reports and bound margins") {
    const fs::path dir = scratch("check");
    const fs::path cfg = write_config(dir, R"cfg({
      "model": {"horizon": 1, "steps": 3, "delta_a": [0.2, 0.3, 0.25], "kernel": [[0.5, 0.5]]},
      "generator": {"family": "linear_in_u", "a": 0.3, "c": [0.5, -0.4], "g": 0.1},
      "data": {"terminal": "max(n1 - n2, -1)", "obstacle": "0.5 - 0.2*i", "obstacle_leaves": "clip"},
      "comparison": {"terminal": "max(n1 - n2, -1) + 0.5"},
      "run": {"p": [1, 2], "n_list": [0.5, 1, 2]}
    })cfg");
    const Run r = run("check", cfg, dir / "out");
    CHECK(r.code == exit_ok);
    const auto checks = rows(dir / "out" / "checks.csv");
    CHECK(checks[1][0] == "comparison");
    CHECK(checks[1][3] == "pass");
    CHECK(fs::exists(dir / "out" / "bound_margin.csv"));
}

TEST_CASE("plotdata on an empty directory") {
    const fs::path dir = scratch("empty");
    try {
        emit_plotdata(dir);
        FAIL("expected MissingResults");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingResults);
    }
}

TEST_CASE("reruns are byte-identical and the hash tracks config content") {
    const fs::path dir = scratch("determinism");
    const fs::path cfg = write_config(dir, put_config);
    REQUIRE(run("price", cfg, dir / "a").code == exit_ok);
    REQUIRE(run("price", cfg, dir / "b").code == exit_ok);
    for (const char* f : {"price.csv", "boundary.csv", "oracle.csv"}) CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

    auto hash = [&](const fs::path& out) { return nlohmann::json::parse(slurp(out / "manifest.json"))["config_hash"]; };
    CHECK(hash(dir / "a") == hash(dir / "b"));
    std::string edited = put_config;
    edited.replace(edited.find("1.05"), 4, "1.10");
    const fs::path cfg2 = write_config(dir, edited, "edited.json");
    REQUIRE(run("price", cfg2, dir / "c").code == exit_ok);
    CHECK(hash(dir / "c") != hash(dir / "a"));
}

}
