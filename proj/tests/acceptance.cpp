// Prints one line per acceptance criterion and exits nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "rbsde/battery.hpp"

namespace {

struct Criterion {
    int number;
    const char* title;
    double budget_s;
    std::function<rbsde::BatteryOutcome()> run;
};

}  // namespace

int main() {
    const rbsde::BatteryOptions options;
    const std::vector<Criterion> criteria{
        {1, "Snell equivalence", 30, [&] { return rbsde::snell_battery(options); }},
        {2, "flat-off and barrier", 5, [&] { return rbsde::barrier_battery(options); }},
        {3, "comparison theorem", 30, [&] { return rbsde::comparison_battery(options); }},
        {4, "exponential Y-bound", 30, [&] { return rbsde::bound_battery(options); }},
        {5, "inf-convolution ladder", 60, [&] { return rbsde::ladder_experiment(options); }},
        {6, "j_lambda properties", 5, [&] { return rbsde::j_lambda_battery(options); }},
        {7, "indifference identity", 120, [&] { return rbsde::indifference_battery(options); }},
        {8, "American dominance and representation", 60, [&] { return rbsde::american_battery(options); }},
        {9, "martingale identity", 5, [&] { return rbsde::martingale_battery(options); }},
        {10, "determinism", 600,
         [&] {
             const auto first = rbsde::run_full_battery(options);
             const auto second = rbsde::run_full_battery(options);
             bool same = first.size() == second.size();
             std::size_t bytes = 0;
             for (const auto& [name, outcome] : first) {
                 const auto it = second.find(name);
                 same = same && it != second.end() && it->second.csv == outcome.csv;
                 bytes += outcome.csv.size();
             }
             return rbsde::BatteryOutcome{same,
                                          std::to_string(first.size()) + " CSV files, " + std::to_string(bytes) +
                                              " bytes, identical across two runs: " + (same ? "yes" : "no"),
                                          {}};
         }},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        rbsde::BatteryOutcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.summary = std::string("error: ") + e.what();
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds <= c.budget_s;
        const bool pass = outcome.pass && in_time;
        if (!pass) ++failures;
        std::printf("criterion %2d %-38s %s  (%.2f s of %.0f s) %s\n", c.number, c.title, pass ? "PASS" : "FAIL",
                    seconds, c.budget_s, outcome.summary.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
