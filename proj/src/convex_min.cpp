#include "convex_min.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rbsde::detail {
namespace {

constexpr double golden = 0.6180339887498949;

struct LineState {
    const Objective& f;
    std::vector<double>& x;
    double& fx;
    const MinimizeOptions& options;
    std::vector<double> trial;
    bool diverged = false;

    double at(std::span<const double> dir, double t) {
        for (std::size_t k = 0; k < x.size(); ++k) trial[k] = x[k] + t * dir[k];
        return f(trial);
    }

    // Minimizes t -> f(x + t dir) and moves x there. Returns the decrease.
    double minimize(std::span<const double> dir) {
        double norm = 0.0;
        for (double d : dir) norm += d * d;
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm)) return 0.0;

        double scale = 1.0;
        for (double v : x) scale = std::max(scale, std::abs(v));
        double step = 1e-3 * scale / norm;

        double sign = 1.0;
        double f1 = at(dir, step);
        if (!(f1 < fx)) {
            double f2 = at(dir, -step);
            if (!(f2 < fx)) {
                // minimum lies within (-step, step)
                return refine(dir, -step, 0.0, step);
            }
            sign = -1.0;
            f1 = f2;
        }
        // expand until the objective rises again
        double a = 0.0;
        double b = sign * step;
        double fb = f1;
        double c = b + sign * step / golden;
        double fc = at(dir, c);
        while (fc < fb) {
            if (std::abs(c) * norm > options.divergence_radius) {
                diverged = true;
                return 0.0;
            }
            a = b;
            b = c;
            fb = fc;
            c = b + (b - a) / golden;
            fc = at(dir, c);
        }
        return refine(dir, a, b, c);
    }

    // Golden-section on the bracket [lo, hi] known to contain the minimum near mid.
    double refine(std::span<const double> dir, double lo, double mid, double hi) {
        if (lo > hi) std::swap(lo, hi);
        (void)mid;
        double x1 = hi - golden * (hi - lo);
        double x2 = lo + golden * (hi - lo);
        double f1 = at(dir, x1);
        double f2 = at(dir, x2);
        for (int it = 0; it < 200; ++it) {
            const double width = hi - lo;
            if (width <= 1e-14 * (1.0 + std::abs(x1))) break;
            if (f1 < f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - golden * (hi - lo);
                f1 = at(dir, x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + golden * (hi - lo);
                f2 = at(dir, x2);
            }
        }
        const double t = f1 < f2 ? x1 : x2;
        const double ft = std::min(f1, f2);
        if (ft < fx) {
            const double drop = fx - ft;
            for (std::size_t k = 0; k < x.size(); ++k) x[k] += t * dir[k];
            fx = ft;
            return drop;
        }
        return 0.0;
    }
};

std::vector<double> gradient(const Objective& f, std::span<const double> x) {
    std::vector<double> g(x.size());
    std::vector<double> probe(x.begin(), x.end());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double h = 1e-6 * (1.0 + std::abs(x[k]));
        probe[k] = x[k] + h;
        const double fp = f(probe);
        probe[k] = x[k] - h;
        const double fm = f(probe);
        probe[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace

MinimizeResult minimize_convex(const Objective& f, std::vector<double> start, const MinimizeOptions& options) {
    MinimizeResult result;
    result.x = std::move(start);
    result.value = f(result.x);
    const std::size_t m = result.x.size();
    if (m == 0) return result;

    LineState line{f, result.x, result.value, options, std::vector<double>(m)};

    auto coordinate_dirs = [m] {
        std::vector<std::vector<double>> dirs(m, std::vector<double>(m, 0.0));
        for (std::size_t k = 0; k < m; ++k) dirs[k][k] = 1.0;
        return dirs;
    };
    std::vector<std::vector<double>> dirs = coordinate_dirs();

    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        result.sweeps = sweep + 1;
        const double f_start = result.value;
        const std::vector<double> x_start = result.x;

        double biggest = 0.0;
        std::size_t biggest_idx = 0;
        for (std::size_t k = 0; k < dirs.size(); ++k) {
            const double drop = line.minimize(dirs[k]);
            if (line.diverged) break;
            if (drop > biggest) {
                biggest = drop;
                biggest_idx = k;
            }
        }
        if (!line.diverged) {
            std::vector<double> g = gradient(f, result.x);
            for (double& v : g) v = -v;
            line.minimize(g);
        }
        if (!line.diverged) {
            std::vector<double> disp(m);
            double norm = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                disp[k] = result.x[k] - x_start[k];
                norm += disp[k] * disp[k];
            }
            if (norm > 0.0) {
                line.minimize(disp);
                norm = std::sqrt(norm);
                for (double& v : disp) v /= norm;
                dirs[biggest_idx] = disp;
            }
        }
        if (line.diverged) {
            result.diverged = true;
            return result;
        }
        if ((sweep + 1) % static_cast<int>(m + 1) == 0) dirs = coordinate_dirs();
        if (f_start - result.value <= options.improvement_tolerance * (1.0 + std::abs(result.value))) break;
    }
    return result;
}

}  // namespace rbsde::detail
