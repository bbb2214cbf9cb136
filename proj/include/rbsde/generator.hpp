#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rbsde/mpp.hpp"
#include "rbsde/verdict.hpp"

namespace rbsde {

enum class Convexity { Convex, Concave, None };

/// Point at which a driver is evaluated.
struct DriverArgs {
    std::size_t step = 0;
    double y = 0.0;
    double z = 0.0;
    std::span<const double> u;
    std::span<const double> phi;
};

/// Everything the solver knows about one backward step at an internal node.
/// `mean` is the conditional expectation of the child values, `u` and `z`
/// the extracted jump and Brownian coefficients.
struct StepContext {
    NodeId node = 0;
    std::size_t step = 0;
    double delta_a = 0.0;
    double delta_t = 0.0;
    std::span<const double> phi;
    double mean = 0.0;
    double z = 0.0;
    std::span<const double> u;
    std::span<const double> child_values;
    std::span<const double> child_probs;
    std::span<const Outcome> child_outcomes;
};

using Driver = std::function<double(const DriverArgs&)>;

/// Drift added over one step given the candidate value y: the solver's
/// candidate solves c = mean + increment(ctx, c).
using StepIncrement = std::function<double(const StepContext&, double y)>;

/// Exact: use the generator's exact one-step increment when it has one.
/// Euler: always use f * dA (+ g * dt).
enum class Stepping { Exact, Euler };

struct GeneratorParams {
    double lambda = 1.0;      // growth scale, > 0
    double beta = 0.0;        // growth slope in |y|
    double beta_tilde = 0.0;  // Lipschitz constant in y
    double c0 = 0.0;          // uniform linear bound constant
    double gamma = 0.0;       // quadratic growth in z (Brownian drivers only)
    std::vector<double> alpha;  // per-step growth intercept; empty means zero
    double alpha_shift = 0.0;   // added to every alpha_i
    Convexity convexity = Convexity::None;
};

class GeneratorSpec {
public:
    GeneratorSpec(std::string name, GeneratorParams params, Driver jump_driver, Driver time_driver = {});

    const std::string& name() const noexcept { return name_; }
    const GeneratorParams& params() const noexcept { return params_; }
    GeneratorParams& params() noexcept { return params_; }

    /// f(step, y, z, u): the part integrated against dA.
    double operator()(const DriverArgs& args) const { return jump_(args); }
    double eval(std::size_t step, double y, std::span<const double> u, std::span<const double> phi,
                double z = 0.0) const {
        return jump_(DriverArgs{step, y, z, u, phi});
    }

    bool has_time_part() const noexcept { return static_cast<bool>(time_); }
    /// g(step, y, z): the part integrated against dt; zero when absent.
    double time_part(const DriverArgs& args) const { return time_ ? time_(args) : 0.0; }

    double alpha(std::size_t step) const noexcept {
        return (step < params_.alpha.size() ? params_.alpha[step] : 0.0) + params_.alpha_shift;
    }

    bool has_exact_step() const noexcept { return static_cast<bool>(exact_); }
    GeneratorSpec& with_exact_step(StepIncrement step);
    GeneratorSpec& with_euler_step(StepIncrement step);

    double euler_increment(const StepContext& ctx, double y) const;
    double increment(const StepContext& ctx, double y, Stepping stepping) const;

    const Driver& jump_driver() const noexcept { return jump_; }
    const Driver& time_driver() const noexcept { return time_; }

private:
    std::string name_;
    GeneratorParams params_;
    Driver jump_;
    Driver time_;
    StepIncrement exact_;
    StepIncrement euler_;
};

/// j_lambda(u) = sum_e (exp(lambda u_e) - 1 - lambda u_e) phi_e.
double j_lambda(double lambda, std::span<const double> u, std::span<const double> phi);

/// One-step analogue of j_lambda on a tree step with compensator increment dA:
/// (1/dA) ln(1 + dA sum phi (e^{lambda u} - 1)) - lambda sum phi u. Equals
/// j_lambda at dA = 0 and never exceeds it.
double j_lambda_step(double lambda, std::span<const double> u, std::span<const double> phi, double delta_a);

/// ||v||_phi = (sum_e v_e^2 phi_e)^{1/2}
double phi_norm(std::span<const double> v, std::span<const double> phi);

struct Envelope {
    double q_lower = 0.0;
    double q_upper = 0.0;
    double value = 0.0;
    bool within = false;
};

inline constexpr double envelope_tolerance = 1e-10;

Envelope growth_envelope(const GeneratorSpec& gen, std::size_t step, double y, std::span<const double> u,
                         std::span<const double> phi, double z = 0.0);

// ---- built-in families -------------------------------------------------

GeneratorSpec zero_generator();
GeneratorSpec constant_generator(double value);

/// f = (1/lambda) j_lambda(u). Convex, beta = beta_tilde = c0 = 0.
GeneratorSpec entropic(double lambda);

/// f = -(1/lambda) j_lambda(-u). Concave.
GeneratorSpec neg_entropic(double lambda);

struct LinearInUParams {
    double a = 0.0;            // coefficient on y
    std::vector<double> c;     // per-mark coefficient on u(e) phi(e)
    std::vector<double> g;     // per-step intercept; empty means zero
    double lambda = 1.0;
};

/// f = a y + sum_e c(e) u(e) phi(e) + g_i with growth constants derived
/// from the model so that the driver sits inside its declared envelope
/// with the one-step j. Requires c(e) > -1 and dA_i (1 + sum phi c) < 1.
GeneratorSpec linear_in_u(const MppModel& model, const LinearInUParams& p);

/// Same driver with caller-declared constants (used to probe validators).
GeneratorSpec linear_in_u(const LinearInUParams& p, GeneratorParams declared);

/// sup_u [sum_e c_e u_e phi_e - (1/lambda) j_lambda_step(u)], in closed form.
double linear_envelope_intercept(std::span<const double> c, std::span<const double> phi, double delta_a,
                                 double lambda);

/// Table of values f(step, y, u) with nearest-neighbour lookup. Columns of
/// the CSV are step,y,u_1..u_K,f.
struct UserTable {
    std::size_t marks = 0;
    struct Row {
        std::size_t step;
        double y;
        std::vector<double> u;
        double f;
    };
    std::vector<Row> rows;
};

UserTable load_user_table(const std::string& path);
UserTable parse_user_table(std::istream& in);
GeneratorSpec user_table(UserTable table, GeneratorParams declared = {});

// ---- transformations ---------------------------------------------------

/// f + offset; the exact step (if any) is shifted by offset * dA.
GeneratorSpec shifted(const GeneratorSpec& gen, double offset);

struct InfConvolutionOptions {
    int max_sweeps = 500;
    double improvement_tolerance = 1e-13;
    double divergence_radius = 1e8;
};

/// f^n(i, y, u) = inf_r { f(i, y, r) + n ||u - r||_i } for convex f, and the
/// mirrored sup_r { f(i, y, r) - n ||u - r||_i } for concave f.
GeneratorSpec inf_convolution(const GeneratorSpec& gen, double n, InfConvolutionOptions options = {});

/// Driver clamped to [-k, k].
GeneratorSpec truncate(const GeneratorSpec& gen, double k);

// ---- assumption validation ---------------------------------------------

struct AssumptionEntry {
    std::string name;
    Verdict verdict = Verdict::Informational;
    double worst = 0.0;  // worst observed margin (negative means violated)
    std::string detail;
};

struct AssumptionReport {
    std::vector<AssumptionEntry> entries;

    const AssumptionEntry& find(const std::string& name) const;
    bool all_pass() const;
};

inline constexpr double probe_tolerance = 1e-9;

AssumptionReport validate_assumptions(const GeneratorSpec& gen, const MppModel& model, std::size_t sample_budget,
                                      std::uint64_t seed = 1);

}  // namespace rbsde
