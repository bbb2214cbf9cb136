#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rbsde {

inline constexpr const char* library_version = "0.1.0";

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_numerical = 2, exit_check = 3 };

struct CliOptions {
    std::string command;
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<double> tolerance;
    std::optional<std::size_t> cap_nodes;
    bool timings = false;
    bool dump_tree = false;
    std::map<std::string, std::string> versions;  // extra entries for the manifest
};

/// Runs one command: validate, solve, snell, check, ladder, price or
/// plotdata. Errors are reported on `err` and mapped to exit codes.
int run_command(const CliOptions& options, std::ostream& out, std::ostream& err);

/// Reads ladder.csv, boundary.csv and bound_margin.csv from `results_dir`
/// and writes plot-ready CSVs into results_dir/plotdata. Returns the files
/// written; throws MissingResults when none of the inputs exist.
std::vector<std::filesystem::path> emit_plotdata(const std::filesystem::path& results_dir);

}  // namespace rbsde
