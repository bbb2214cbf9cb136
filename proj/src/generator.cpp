#include "rbsde/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "convex_min.hpp"
#include "rbsde/error.hpp"

namespace rbsde {

GeneratorSpec::GeneratorSpec(std::string name, GeneratorParams params, Driver jump_driver, Driver time_driver)
    : name_(std::move(name)), params_(std::move(params)), jump_(std::move(jump_driver)), time_(std::move(time_driver)) {
    if (!(params_.lambda > 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be positive");
    for (double a : params_.alpha)
        if (!(a >= 0.0)) fail(ErrorCode::InvalidArgument, "alpha must be nonnegative");
    if (!(params_.alpha_shift >= 0.0)) fail(ErrorCode::InvalidArgument, "alpha must be nonnegative");
    if (!jump_) fail(ErrorCode::InvalidArgument, "generator needs a driver");
}

GeneratorSpec& GeneratorSpec::with_exact_step(StepIncrement step) {
    exact_ = std::move(step);
    return *this;
}

GeneratorSpec& GeneratorSpec::with_euler_step(StepIncrement step) {
    euler_ = std::move(step);
    return *this;
}

double GeneratorSpec::euler_increment(const StepContext& ctx, double y) const {
    if (euler_) return euler_(ctx, y);
    const DriverArgs args{ctx.step, y, ctx.z, ctx.u, ctx.phi};
    double inc = jump_(args) * ctx.delta_a;
    if (time_) inc += time_(args) * ctx.delta_t;
    return inc;
}

double GeneratorSpec::increment(const StepContext& ctx, double y, Stepping stepping) const {
    if (stepping == Stepping::Exact && exact_) return exact_(ctx, y);
    return euler_increment(ctx, y);
}

double j_lambda(double lambda, std::span<const double> u, std::span<const double> phi) {
    if (u.size() != phi.size()) fail(ErrorCode::LengthMismatch, "u and phi differ in length");
    double s = 0.0;
    for (std::size_t e = 0; e < u.size(); ++e) {
        const double x = lambda * u[e];
        s += (std::expm1(x) - x) * phi[e];
    }
    return s;
}

double j_lambda_step(double lambda, std::span<const double> u, std::span<const double> phi, double delta_a) {
    if (delta_a <= 0.0) return j_lambda(lambda, u, phi);
    if (u.size() != phi.size()) fail(ErrorCode::LengthMismatch, "u and phi differ in length");
    double jump_mass = 0.0;
    double mean = 0.0;
    for (std::size_t e = 0; e < u.size(); ++e) {
        jump_mass += phi[e] * std::expm1(lambda * u[e]);
        mean += phi[e] * u[e];
    }
    return std::log1p(delta_a * jump_mass) / delta_a - lambda * mean;
}

double phi_norm(std::span<const double> v, std::span<const double> phi) {
    double s = 0.0;
    for (std::size_t e = 0; e < v.size(); ++e) s += v[e] * v[e] * phi[e];
    return std::sqrt(s);
}

Envelope growth_envelope(const GeneratorSpec& gen, std::size_t step, double y, std::span<const double> u,
                         std::span<const double> phi, double z) {
    const auto& p = gen.params();
    std::vector<double> neg(u.begin(), u.end());
    for (double& v : neg) v = -v;
    const double slack = gen.alpha(step) + p.beta * std::abs(y) + 0.5 * p.gamma * z * z;
    Envelope env;
    env.q_lower = -j_lambda(p.lambda, neg, phi) / p.lambda - slack;
    env.q_upper = j_lambda(p.lambda, u, phi) / p.lambda + slack;
    const DriverArgs args{step, y, z, u, phi};
    env.value = gen(args) + gen.time_part(args);
    env.within = env.value >= env.q_lower - envelope_tolerance && env.value <= env.q_upper + envelope_tolerance;
    return env;
}

// ---- families ------------------------------------------------------------

GeneratorSpec zero_generator() {
    GeneratorParams p;
    p.convexity = Convexity::Convex;
    return GeneratorSpec("zero", p, [](const DriverArgs&) { return 0.0; })
        .with_exact_step([](const StepContext&, double) { return 0.0; });
}

GeneratorSpec constant_generator(double value) {
    GeneratorParams p;
    p.convexity = Convexity::Convex;
    return GeneratorSpec("constant", p, [value](const DriverArgs&) { return value; });
}

GeneratorSpec entropic(double lambda) {
    GeneratorParams p;
    p.lambda = lambda;
    p.convexity = Convexity::Convex;
    GeneratorSpec gen("entropic", p, [lambda](const DriverArgs& a) { return j_lambda(lambda, a.u, a.phi) / lambda; });
    // e^{lambda Y} stays a martingale across the step
    gen.with_exact_step([lambda](const StepContext& ctx, double) {
        return ctx.delta_a * j_lambda_step(lambda, ctx.u, ctx.phi, ctx.delta_a) / lambda;
    });
    return gen;
}

GeneratorSpec neg_entropic(double lambda) {
    GeneratorParams p;
    p.lambda = lambda;
    p.convexity = Convexity::Concave;
    auto negate = [](std::span<const double> u) {
        std::vector<double> v(u.begin(), u.end());
        for (double& x : v) x = -x;
        return v;
    };
    GeneratorSpec gen("neg_entropic", p, [lambda, negate](const DriverArgs& a) {
        return -j_lambda(lambda, negate(a.u), a.phi) / lambda;
    });
    gen.with_exact_step([lambda, negate](const StepContext& ctx, double) {
        return -ctx.delta_a * j_lambda_step(lambda, negate(ctx.u), ctx.phi, ctx.delta_a) / lambda;
    });
    return gen;
}

double linear_envelope_intercept(std::span<const double> c, std::span<const double> phi, double delta_a,
                                 double lambda) {
    if (c.size() != phi.size()) fail(ErrorCode::LengthMismatch, "c and phi differ in length");
    double entropy = 0.0;
    double c_bar = 0.0;
    for (std::size_t e = 0; e < c.size(); ++e) {
        if (phi[e] == 0.0) continue;
        if (!(c[e] > -1.0)) fail(ErrorCode::InvalidArgument, "linear coefficient c(e) must exceed -1");
        entropy += phi[e] * (1.0 + c[e]) * std::log1p(c[e]);
        c_bar += phi[e] * c[e];
    }
    if (delta_a <= 0.0) return (entropy - c_bar) / lambda;
    if (!(delta_a * (1.0 + c_bar) < 1.0))
        fail(ErrorCode::InvalidArgument, "dA (1 + sum phi c) >= 1: no finite envelope intercept");
    const double log_s = std::log1p(-delta_a) - std::log1p(-delta_a * (1.0 + c_bar));
    return (entropy + ((1.0 + c_bar) - 1.0 / delta_a) * log_s) / lambda;
}

namespace {

Driver linear_driver(const LinearInUParams& p) {
    return [p](const DriverArgs& args) {
        double s = p.a * args.y;
        for (std::size_t e = 0; e < args.u.size(); ++e) s += p.c.at(e) * args.u[e] * args.phi[e];
        if (args.step < p.g.size()) s += p.g[args.step];
        return s;
    };
}

}  // namespace

GeneratorSpec linear_in_u(const LinearInUParams& p, GeneratorParams declared) {
    return GeneratorSpec("linear_in_u", std::move(declared), linear_driver(p));
}

GeneratorSpec linear_in_u(const MppModel& model, const LinearInUParams& p) {
    if (p.c.size() != model.mark_count()) fail(ErrorCode::LengthMismatch, "c needs one entry per mark");
    if (!p.g.empty() && p.g.size() != model.steps()) fail(ErrorCode::LengthMismatch, "g needs one entry per step");
    GeneratorParams params;
    params.lambda = p.lambda;
    params.beta_tilde = std::abs(p.a);
    params.convexity = Convexity::Convex;
    params.alpha.resize(model.steps());
    double beta = std::abs(p.a);
    double c0 = 0.0;
    for (std::size_t i = 0; i < model.steps(); ++i) {
        const double da = model.delta_a[i];
        const double g = i < p.g.size() ? p.g[i] : 0.0;
        params.alpha[i] = std::abs(g) + linear_envelope_intercept(p.c, model.phi(i), da, p.lambda);
        // the implicit step compounds |a| as 1/(1 - |a| dA); declare the
        // matching exponential rate
        if (da > 0.0 && std::abs(p.a) > 0.0) {
            if (!(std::abs(p.a) * da < 1.0)) fail(ErrorCode::InvalidArgument, "|a| dA >= 1");
            beta = std::max(beta, -std::log1p(-std::abs(p.a) * da) / da);
        }
        double norm2 = 0.0;
        for (std::size_t e = 0; e < p.c.size(); ++e) norm2 += p.c[e] * p.c[e] * model.kernel[i][e];
        c0 = std::max(c0, std::sqrt(norm2));
    }
    params.beta = beta;
    params.c0 = c0;
    return GeneratorSpec("linear_in_u", params, linear_driver(p));
}

UserTable parse_user_table(std::istream& in) {
    UserTable table;
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::ConfigError, "user table is empty");
    {
        std::stringstream header(line);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(header, col, ',')) cols.push_back(col);
        if (cols.size() < 4 || cols.front() != "step" || cols[1] != "y" || cols.back() != "f")
            fail(ErrorCode::ConfigError, "user table header must be step,y,u_1..u_K,f");
        table.marks = cols.size() - 3;
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(row, cell, ',')) {
            try {
                v.push_back(std::stod(cell));
            } catch (const std::exception&) {
                fail(ErrorCode::ConfigError, "user table cell '" + cell + "' is not a number");
            }
        }
        if (v.size() != table.marks + 3) fail(ErrorCode::ConfigError, "user table row has wrong width");
        UserTable::Row r;
        r.step = static_cast<std::size_t>(v[0]);
        r.y = v[1];
        r.u.assign(v.begin() + 2, v.end() - 1);
        r.f = v.back();
        table.rows.push_back(std::move(r));
    }
    if (table.rows.empty()) fail(ErrorCode::ConfigError, "user table has no rows");
    return table;
}

UserTable load_user_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open user table " + path);
    return parse_user_table(in);
}

GeneratorSpec user_table(UserTable table, GeneratorParams declared) {
    auto shared = std::make_shared<const UserTable>(std::move(table));
    return GeneratorSpec("user_table", std::move(declared), [shared](const DriverArgs& a) {
        const UserTable::Row* best = nullptr;
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& r : shared->rows) {
            if (r.step != a.step) continue;
            double d = (r.y - a.y) * (r.y - a.y);
            for (std::size_t e = 0; e < r.u.size() && e < a.u.size(); ++e) d += (r.u[e] - a.u[e]) * (r.u[e] - a.u[e]);
            if (!best || d < best_d) {
                best_d = d;
                best = &r;
            }
        }
        if (!best) fail(ErrorCode::InvalidArgument, "user table has no rows for step " + std::to_string(a.step));
        return best->f;
    });
}

// ---- transformations -----------------------------------------------------

GeneratorSpec shifted(const GeneratorSpec& gen, double offset) {
    GeneratorParams p = gen.params();
    p.alpha_shift += std::abs(offset);
    const Driver base = gen.jump_driver();
    GeneratorSpec out(gen.name() + (offset >= 0 ? "+" : "") + std::to_string(offset), p,
                      [base, offset](const DriverArgs& a) { return base(a) + offset; }, gen.time_driver());
    if (gen.has_exact_step()) {
        out.with_exact_step([gen, offset](const StepContext& ctx, double y) {
            return gen.increment(ctx, y, Stepping::Exact) + offset * ctx.delta_a;
        });
    } else {
        out.with_euler_step([gen, offset](const StepContext& ctx, double y) {
            return gen.euler_increment(ctx, y) + offset * ctx.delta_a;
        });
    }
    return out;
}

GeneratorSpec inf_convolution(const GeneratorSpec& gen, double n, InfConvolutionOptions options) {
    if (!(n > 0.0)) fail(ErrorCode::InvalidArgument, "inf-convolution needs n > 0");
    const Convexity cx = gen.params().convexity;
    if (cx == Convexity::None) fail(ErrorCode::NotConvex, gen.name() + " is neither convex nor concave in u");
    const double sign = cx == Convexity::Convex ? 1.0 : -1.0;

    GeneratorParams p = gen.params();
    if (n > p.c0) {
        for (double& a : p.alpha) a *= 3.0;
        p.alpha_shift *= 3.0;
        p.beta *= 3.0;
    }
    const Driver base = gen.jump_driver();
    const detail::MinimizeOptions mopts{options.max_sweeps, options.improvement_tolerance, options.divergence_radius};

    Driver driver = [base, n, sign, mopts](const DriverArgs& a) {
        // minimize over the marks carrying mass, in coordinates w = sqrt(phi) (r - u)
        std::vector<std::size_t> active;
        for (std::size_t e = 0; e < a.phi.size(); ++e)
            if (a.phi[e] > 0.0) active.push_back(e);
        std::vector<double> r(a.u.begin(), a.u.end());
        auto objective = [&](std::span<const double> w) {
            double norm2 = 0.0;
            for (std::size_t k = 0; k < active.size(); ++k) {
                const std::size_t e = active[k];
                r[e] = a.u[e] + w[k] / std::sqrt(a.phi[e]);
                norm2 += w[k] * w[k];
            }
            return sign * base(DriverArgs{a.step, a.y, a.z, r, a.phi}) + n * std::sqrt(norm2);
        };
        if (active.empty()) return base(a);

        auto best = detail::minimize_convex(objective, std::vector<double>(active.size(), 0.0), mopts);
        std::vector<double> origin(active.size());
        for (std::size_t k = 0; k < active.size(); ++k)
            origin[k] = -std::sqrt(a.phi[active[k]]) * a.u[active[k]];
        auto other = detail::minimize_convex(objective, origin, mopts);
        if (best.diverged || other.diverged)
            fail(ErrorCode::MinimizerDiverged, "inner minimization is unbounded below");
        return sign * std::min(best.value, other.value);
    };
    return GeneratorSpec(gen.name() + "^n=" + std::to_string(n), p, std::move(driver), gen.time_driver());
}

GeneratorSpec truncate(const GeneratorSpec& gen, double k) {
    if (!(k > 0.0)) fail(ErrorCode::InvalidArgument, "truncation level must be positive");
    GeneratorParams p = gen.params();
    p.convexity = Convexity::None;  // a clamp of a convex map is not convex in general
    const Driver base = gen.jump_driver();
    return GeneratorSpec(gen.name() + "|k=" + std::to_string(k), p,
                         [base, k](const DriverArgs& a) { return std::clamp(base(a), -k, k); }, gen.time_driver());
}

// ---- validation ------------------------------------------------------------

const AssumptionEntry& AssumptionReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e;
    fail(ErrorCode::InvalidArgument, "no report entry " + name);
}

bool AssumptionReport::all_pass() const {
    return std::none_of(entries.begin(), entries.end(), [](const auto& e) { return e.verdict == Verdict::Fail; });
}

AssumptionReport validate_assumptions(const GeneratorSpec& gen, const MppModel& model, std::size_t sample_budget,
                                      std::uint64_t seed) {
    if (sample_budget < 1) fail(ErrorCode::InvalidArgument, "sample budget must be at least 1");
    const auto& p = gen.params();
    const std::size_t k = model.mark_count();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> y_dist(-5.0, 5.0);
    std::uniform_real_distribution<double> u_dist(-3.0, 3.0);
    std::uniform_int_distribution<std::size_t> step_dist(0, model.steps() - 1);

    double lip_worst = std::numeric_limits<double>::infinity();
    double cvx_worst = std::numeric_limits<double>::infinity();
    double bound_worst = std::numeric_limits<double>::infinity();
    double env_worst = std::numeric_limits<double>::infinity();
    double lip_max = 0.0;

    std::vector<double> u(k), v(k), mid(k), zero(k, 0.0);
    for (std::size_t s = 0; s < sample_budget; ++s) {
        const std::size_t step = step_dist(rng);
        const auto phi = model.phi(step);
        const double y1 = y_dist(rng);
        const double y2 = y_dist(rng);
        for (std::size_t e = 0; e < k; ++e) {
            u[e] = u_dist(rng);
            v[e] = u_dist(rng);
            mid[e] = 0.5 * (u[e] + v[e]);
        }
        // Lipschitz in y
        if (y1 != y2) {
            const double diff = std::abs(gen.eval(step, y1, u, phi) - gen.eval(step, y2, u, phi));
            lip_max = std::max(lip_max, diff / std::abs(y1 - y2));
            lip_worst = std::min(lip_worst, p.beta_tilde * std::abs(y1 - y2) + probe_tolerance - diff);
        }
        // midpoint convexity / concavity in u
        if (p.convexity != Convexity::None) {
            const double fm = gen.eval(step, y1, mid, phi);
            const double avg = 0.5 * (gen.eval(step, y1, u, phi) + gen.eval(step, y1, v, phi));
            const double margin = p.convexity == Convexity::Convex ? avg - fm : fm - avg;
            cvx_worst = std::min(cvx_worst, margin + probe_tolerance);
        }
        // uniform linear bound at y = 0
        {
            const double d = gen.eval(step, 0.0, u, phi) - gen.eval(step, 0.0, zero, phi);
            const double bound = p.c0 * phi_norm(u, phi);
            double margin = 0.0;
            if (p.convexity == Convexity::Concave) margin = bound - d;
            else margin = d + bound;
            bound_worst = std::min(bound_worst, margin + probe_tolerance);
        }
        // growth envelope
        {
            const Envelope env = growth_envelope(gen, step, y1, u, phi);
            env_worst = std::min(env_worst, std::min(env.value - env.q_lower, env.q_upper - env.value) + envelope_tolerance);
        }
    }

    AssumptionReport report;
    auto verdict = [](double worst) { return worst >= 0.0 ? Verdict::Pass : Verdict::Fail; };
    {
        std::ostringstream d;
        d << "max observed slope " << lip_max << " vs declared " << p.beta_tilde;
        report.entries.push_back({"lipschitz_y", verdict(lip_worst), lip_worst, d.str()});
    }
    if (p.convexity == Convexity::None) {
        report.entries.push_back({"convexity_u", Verdict::NotApplicable, 0.0, "no convexity declared"});
    } else {
        report.entries.push_back({"convexity_u", verdict(cvx_worst), cvx_worst,
                                  p.convexity == Convexity::Convex ? "midpoint test (convex)" : "midpoint test (concave)"});
    }
    report.entries.push_back({"linear_bound", verdict(bound_worst), bound_worst, "f(0,u) - f(0,0) vs C0 ||u||"});
    report.entries.push_back({"growth_envelope", verdict(env_worst), env_worst, "q_lower <= f <= q_upper"});
    report.entries.push_back({"measurability", Verdict::Informational, 0.0, "automatic on a finite tree"});
    report.entries.push_back({"integrability", Verdict::Informational, 0.0,
                              "finite tree: all exponential moments of xi, L and alpha are finite"});
    return report;
}

}  // namespace rbsde
