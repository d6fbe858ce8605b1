#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "detail/fit.hpp"
#include "detail/format.hpp"
#include "detail/parallel.hpp"
#include "detail/rng.hpp"
#include "error.hpp"
#include "maps.hpp"
#include "pullback.hpp"
#include "region.hpp"

namespace dynlab {

// Weighted point masses. Real maps keep their atoms on the real axis.
struct AtomMeasure {
    std::vector<cplx> points;
    std::vector<double> weights;
    double exponent = 0;
    int generation_depth = 0;
    cplx base_point{};
    bool normalized = false;
    // atoms are a stratified sample of normalized length (real domain) or
    // normalized arc length (circle); bin masses are then taken exactly
    bool lebesgue = false;
    double total() const {
        double s = 0;
        for (double w : weights) s += w;
        return s;
    }
};

// Closed ball |z - center| <= radius; on the real line an interval.
struct TestSet {
    cplx center{};
    double radius = 0;
    bool contains(cplx z) const { return std::abs(z - center) <= radius; }
};

inline AtomMeasure uniform_measure(const MapSpec& f, std::size_t n) {
    if (!f.is_real()) throw PreconditionError("uniform_measure needs a real map; use uniform_circle_measure");
    if (n == 0) throw PreconditionError("need at least one atom");
    AtomMeasure mu;
    const double u = std::sqrt(2.0) - 1.0;  // irrational offset keeps atoms off dyadic orbits
    double L = f.domain_hi() - f.domain_lo();
    for (std::size_t k = 0; k < n; ++k) {
        mu.points.emplace_back(f.domain_lo() + (double(k) + u) / double(n) * L, 0.0);
        mu.weights.push_back(1.0 / double(n));
    }
    mu.exponent = 1;
    mu.normalized = true;
    mu.lebesgue = true;
    return mu;
}

inline AtomMeasure uniform_circle_measure(cplx center, double radius, std::size_t n) {
    if (n == 0) throw PreconditionError("need at least one atom");
    AtomMeasure mu;
    const double u = std::sqrt(2.0) - 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        double a = 2 * std::numbers::pi * (double(k) + u) / double(n);
        mu.points.push_back(center + std::polar(radius, a));
        mu.weights.push_back(1.0 / double(n));
    }
    mu.exponent = 1;
    mu.normalized = true;
    mu.lebesgue = true;
    return mu;
}

inline void write_atoms_csv(std::ostream& os, const AtomMeasure& mu) {
    os << "re,im,weight\n";
    os.precision(17);
    for (std::size_t i = 0; i < mu.points.size(); ++i)
        os << mu.points[i].real() << ',' << mu.points[i].imag() << ',' << mu.weights[i] << '\n';
}

namespace detail {

inline double log_sum_exp(const std::vector<double>& logd, double s) {
    double m = -std::numeric_limits<double>::infinity();
    for (double l : logd) m = std::max(m, -s * l);
    if (!std::isfinite(m)) return m;
    double acc = 0;
    for (double l : logd) acc += std::exp(-s * l - m);
    return m + std::log(acc);
}

// One level of the backward tree: points of f^-n(x0) with log|Df^n|.
struct PreimageLevel {
    std::vector<cplx> points;
    std::vector<double> logd;
    std::vector<std::size_t> parent;
};

inline bool near_critical(const MapSpec& f, cplx x) {
    double tol = (f.is_real() ? 1e-10 : 1e-7) * f.scale();
    for (const auto& c : f.critical_points())
        if (std::abs(x - c.location) <= tol) return true;
    return false;
}

// Children in fixed order (parent, then preimage order). Preimages through a
// critical point carry infinite weight and are dropped and counted.
inline PreimageLevel next_level(const MapSpec& f, const PreimageLevel& L, int workers, long& singular) {
    const std::size_t block = 512;
    std::size_t nb = (L.points.size() + block - 1) / block;
    std::vector<PreimageLevel> parts(nb);
    std::vector<long> sing(nb, 0);
    parallel_for(nb, workers, [&](std::size_t b) {
        auto& P = parts[b];
        for (std::size_t i = b * block; i < std::min(L.points.size(), (b + 1) * block); ++i) {
            for (cplx x : preimages(f, L.points[i])) {
                if (f.is_real()) {
                    x = cplx(x.real(), 0.0);
                    if (!f.in_domain(x.real())) continue;
                }
                if (near_critical(f, x)) {
                    ++sing[b];
                    continue;
                }
                P.points.push_back(x);
                P.logd.push_back(L.logd[i] + std::log(std::abs(f.deriv(x))));
                P.parent.push_back(i);
            }
        }
    });
    PreimageLevel out;
    for (std::size_t b = 0; b < nb; ++b) {
        singular += sing[b];
        out.points.insert(out.points.end(), parts[b].points.begin(), parts[b].points.end());
        out.logd.insert(out.logd.end(), parts[b].logd.begin(), parts[b].logd.end());
        out.parent.insert(out.parent.end(), parts[b].parent.begin(), parts[b].parent.end());
    }
    return out;
}

// A point is exceptional when its backward orbit is finite; at most two
// points can be, so a depth-3 tree with at most two distinct points flags it.
inline bool exceptional(const MapSpec& f, cplx x0) {
    std::vector<cplx> seen{x0}, level{x0};
    double tol = 1e-9 * f.scale();
    for (int n = 1; n <= 3; ++n) {
        std::vector<cplx> next;
        for (auto y : level)
            for (auto x : preimages(f, y)) {
                if (f.is_real() && !f.in_domain(x.real())) continue;
                next.push_back(x);
            }
        for (auto x : next) {
            bool dup = false;
            for (auto s : seen) dup = dup || std::abs(s - x) <= tol;
            if (!dup) seen.push_back(x);
            if (seen.size() > 2) return false;
        }
        level = std::move(next);
    }
    return true;
}

inline std::vector<PreimageLevel> backward_tree(const MapSpec& f, cplx x0, int depth, int workers, long& singular) {
    if (f.is_real() && (std::abs(x0.imag()) > 0 || !f.in_domain(x0.real())))
        throw PreconditionError("base point must lie in the real domain");
    if (exceptional(f, x0)) throw PreconditionError("base point is exceptional (finite backward orbit)");
    std::vector<PreimageLevel> levels(1);
    levels[0].points.push_back(f.is_real() ? cplx(x0.real(), 0.0) : x0);
    levels[0].logd.push_back(0.0);
    levels[0].parent.push_back(0);
    for (int n = 1; n <= depth; ++n) levels.push_back(next_level(f, levels.back(), workers, singular));
    return levels;
}

inline double growth_rate(const std::vector<double>& log_inc, std::size_t last = 5) {
    std::vector<double> xs, ys;
    std::size_t n0 = log_inc.size() > last ? log_inc.size() - last : 0;
    for (std::size_t n = n0; n < log_inc.size(); ++n) {
        if (!std::isfinite(log_inc[n])) continue;
        xs.push_back(double(n + 1));
        ys.push_back(log_inc[n]);
    }
    return least_squares(xs, ys).slope;
}

}  // namespace detail

struct PoincareTable {
    cplx base_point{};
    std::vector<double> s_grid;
    int max_depth = 0;
    // [n - 1][k]: depth n, exponent s_grid[k]
    std::vector<std::vector<double>> increments;
    std::vector<std::vector<double>> log_increments;
    std::vector<std::vector<double>> partial_sums;
    std::vector<long> preimage_counts;  // per depth
    long singular = 0;
    std::vector<double> growth_rate;  // fitted slope of log increment per depth, last 5 depths
    std::vector<std::string> verdict; // converging, diverging, marginal
    // log|Df^n| at the last depths, kept for bisection between grid points
    std::vector<std::vector<double>> tail_logd;
    int tail_first_depth = 1;

    double rate_at(double s) const {
        std::vector<double> li;
        for (const auto& l : tail_logd) li.push_back(detail::log_sum_exp(l, s));
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < li.size(); ++i) {
            if (!std::isfinite(li[i])) continue;
            xs.push_back(double(tail_first_depth + int(i)));
            ys.push_back(li[i]);
        }
        return detail::least_squares(xs, ys).slope;
    }
};

inline PoincareTable poincare_series(const MapSpec& f, cplx x0, const std::vector<double>& s_grid, int max_depth,
                                     int workers = 1) {
    if (max_depth < 1) throw PreconditionError("max_depth must be >= 1");
    if (s_grid.empty()) throw PreconditionError("empty exponent grid");
    PoincareTable T;
    T.base_point = x0;
    T.s_grid = s_grid;
    T.max_depth = max_depth;
    auto levels = detail::backward_tree(f, x0, max_depth, workers, T.singular);
    std::vector<double> run(s_grid.size(), 0.0);
    for (int n = 1; n <= max_depth; ++n) {
        const auto& L = levels[std::size_t(n)];
        T.preimage_counts.push_back(long(L.points.size()));
        std::vector<double> inc, linc;
        for (std::size_t k = 0; k < s_grid.size(); ++k) {
            double li = detail::log_sum_exp(L.logd, s_grid[k]);
            linc.push_back(li);
            inc.push_back(std::exp(li));
            run[k] += inc.back();
        }
        T.increments.push_back(inc);
        T.log_increments.push_back(linc);
        T.partial_sums.push_back(run);
    }
    for (std::size_t k = 0; k < s_grid.size(); ++k) {
        std::vector<double> li;
        for (int n = 0; n < max_depth; ++n) li.push_back(T.log_increments[std::size_t(n)][k]);
        double g = detail::growth_rate(li);
        T.growth_rate.push_back(g);
        if (std::abs(g) <= 1e-6) T.verdict.push_back("marginal");
        else T.verdict.push_back(g < 0 ? "converging" : "diverging");
    }
    T.tail_first_depth = std::max(1, max_depth - 4);
    for (int n = T.tail_first_depth; n <= max_depth; ++n) T.tail_logd.push_back(levels[std::size_t(n)].logd);
    return T;
}

struct PoincareExponent {
    double estimate = std::numeric_limits<double>::quiet_NaN();
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();
    // estimate, converged everywhere, diverging everywhere, undetermined
    std::string status = "undetermined";
};

// Transition of the fitted growth rate from positive to negative, refined by
// bisection inside the grid bracket.
inline PoincareExponent poincare_exponent(const PoincareTable& T) {
    PoincareExponent e;
    const auto& s = T.s_grid;
    const auto& g = T.growth_rate;
    const double tol = 1e-6;
    bool all_neg = true, all_pos = true;
    for (double v : g) {
        all_neg = all_neg && v < -tol;
        all_pos = all_pos && v > tol;
    }
    if (all_neg) {
        e.status = "converged everywhere";
        e.hi = s.front();
        return e;
    }
    if (all_pos) {
        e.status = "diverging everywhere";
        e.lo = s.back();
        return e;
    }
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (std::abs(g[k]) <= tol) {
            e.estimate = e.lo = e.hi = s[k];
            if (k > 0) e.lo = s[k - 1];
            if (k + 1 < s.size()) e.hi = s[k + 1];
            e.status = "estimate";
            return e;
        }
        if (k + 1 < s.size() && g[k] > tol && g[k + 1] < -tol) {
            double a = s[k], b = s[k + 1];
            for (int it = 0; it < 60; ++it) {
                double m = 0.5 * (a + b);
                (T.rate_at(m) > 0 ? a : b) = m;
            }
            e.estimate = 0.5 * (a + b);
            e.lo = s[k];
            e.hi = s[k + 1];
            e.status = "estimate";
            return e;
        }
    }
    return e;
}

struct ConformalResidual {
    TestSet set;
    double image_mass = 0;   // mu(f(A)) with the same atoms
    double transported = 0;  // sum over atoms in A of |Df|^s w
    double residual = 0;
    // |mu_{n-1}(f(A)) Z_{n-1}/Z_n - transported|: zero up to rounding
    double exact_gap = 0;
};

struct ConformalMeasure {
    AtomMeasure measure;
    long singular = 0;
    std::vector<ConformalResidual> residuals;
    double max_residual = 0;
};

namespace detail {

// Sets on which f is injective: quarters of each lap, or small disks around
// a few atoms kept away from the critical points.
inline std::vector<TestSet> injective_panel(const MapSpec& f, const std::vector<cplx>& atoms) {
    std::vector<TestSet> panel;
    if (f.is_real()) {
        const auto& L = f.laps();
        for (std::size_t k = 0; k + 1 < L.size(); ++k)
            for (int j = 0; j < 4; ++j) {
                double a = L[k] + (L[k + 1] - L[k]) * j / 4.0, b = L[k] + (L[k + 1] - L[k]) * (j + 1) / 4.0;
                double pad = 1e-9 * (b - a);
                panel.push_back({cplx(0.5 * (a + b), 0.0), 0.5 * (b - a) - pad});
            }
        return panel;
    }
    if (atoms.empty()) return panel;
    for (int j = 0; j < 8; ++j) {
        cplx z = atoms[atoms.size() * std::size_t(j) / 8];
        double d = std::numeric_limits<double>::infinity();
        for (const auto& c : f.critical_points()) d = std::min(d, std::abs(z - c.location));
        panel.push_back({z, 0.25 * d});
    }
    return panel;
}

// mass of f(A) for injective A: y lies in f(A) iff one of its preimages is in A
inline double image_mass(const MapSpec& f, const std::vector<cplx>& pts, const std::vector<double>& w,
                         const TestSet& A) {
    double m = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (cplx x : preimages(f, pts[i]))
            if (A.contains(f.is_real() ? cplx(x.real(), 0.0) : x)) {
                m += w[i];
                break;
            }
    return m;
}

}  // namespace detail

// Atoms at f^-depth(base) with weights |Df^depth|^-s, normalized.
inline ConformalMeasure conformal_measure(const MapSpec& f, double s, cplx base, int depth, int workers = 1) {
    if (depth < 0) throw PreconditionError("depth must be nonnegative");
    ConformalMeasure out;
    auto& mu = out.measure;
    mu.exponent = s;
    mu.generation_depth = depth;
    mu.base_point = base;
    mu.normalized = true;
    if (depth == 0) {
        if (f.is_real() && !f.in_domain(base.real())) throw PreconditionError("base point must lie in the real domain");
        mu.points.push_back(f.is_real() ? cplx(base.real(), 0.0) : base);
        mu.weights.push_back(1.0);
        return out;
    }
    auto levels = detail::backward_tree(f, base, depth, workers, out.singular);
    const auto& L = levels.back();
    const auto& P = levels[levels.size() - 2];
    if (L.points.empty()) throw ConstructionFailure("every branch is singular; no atoms left");
    double logZ = detail::log_sum_exp(L.logd, s);
    double logZp = detail::log_sum_exp(P.logd, s);
    mu.points = L.points;
    for (double l : L.logd) mu.weights.push_back(std::exp(-s * l - logZ));
    std::vector<double> wp;
    for (double l : P.logd) wp.push_back(std::exp(-s * l - logZp));
    for (const auto& A : detail::injective_panel(f, mu.points)) {
        ConformalResidual r;
        r.set = A;
        for (std::size_t i = 0; i < mu.points.size(); ++i)
            if (A.contains(mu.points[i])) r.transported += std::pow(std::abs(f.deriv(mu.points[i])), s) * mu.weights[i];
        r.image_mass = detail::image_mass(f, mu.points, mu.weights, A);
        r.residual = std::abs(r.image_mass - r.transported);
        r.exact_gap = std::abs(detail::image_mass(f, P.points, wp, A) * std::exp(logZp - logZ) - r.transported);
        out.max_residual = std::max(out.max_residual, r.residual);
        out.residuals.push_back(r);
    }
    return out;
}

// 1/2 sum |mu(arc) - 1/n| over n equal arcs of arguments around `center`.
inline double tv_distance_to_arclength(const AtomMeasure& mu, int arcs, cplx center = 0.0) {
    if (arcs < 1) throw PreconditionError("need at least one arc");
    std::vector<double> m(std::size_t(arcs), 0.0);
    double tot = mu.total();
    for (std::size_t i = 0; i < mu.points.size(); ++i) {
        double a = std::arg(mu.points[i] - center) + std::numbers::pi;
        int k = std::min(arcs - 1, int(a / (2 * std::numbers::pi) * arcs));
        m[std::size_t(k)] += mu.weights[i] / tot;
    }
    double tv = 0;
    for (double v : m) tv += std::abs(v - 1.0 / arcs);
    return 0.5 * tv;
}

inline double mass_in(const AtomMeasure& mu, const TestSet& A) {
    double m = 0;
    for (std::size_t i = 0; i < mu.points.size(); ++i)
        if (A.contains(mu.points[i])) m += mu.weights[i];
    return m;
}

struct RegularityRow {
    cplx center{};
    double delta = 0;
    double mass = 0;
    double exponent = 0;  // log mu(B) / log delta
};

struct RegularityReport {
    std::vector<RegularityRow> rows;
    double worst_exponent = std::numeric_limits<double>::infinity();
    double threshold = 0;  // hd - eps
    bool pass = false;
    long excluded = 0;  // empty balls
};

// mu(B(x, delta)) <= delta^(hd - eps) for every center and delta in the grid.
inline RegularityReport measure_regularity(const AtomMeasure& mu, double hd, double eps,
                                           const std::vector<double>& delta_grid, const std::vector<cplx>& centers) {
    if (!mu.normalized) throw PreconditionError("measure must be normalized");
    RegularityReport rep;
    rep.threshold = hd - eps;
    for (double d : delta_grid)
        if (!(d > 0 && d < 1)) throw PreconditionError("radii must lie in (0, 1)");
    for (auto x : centers)
        for (double d : delta_grid) {
            RegularityRow row{x, d, mass_in(mu, {x, d}), 0};
            if (row.mass <= 0) {
                ++rep.excluded;
                continue;
            }
            row.exponent = std::log(row.mass) / std::log(d);
            rep.worst_exponent = std::min(rep.worst_exponent, row.exponent);
            rep.rows.push_back(row);
        }
    rep.pass = !rep.rows.empty() && rep.worst_exponent >= rep.threshold;
    return rep;
}

struct DensityLevel {
    int bins = 0;
    std::vector<double> nu_mass;
    std::vector<double> mu_mass;
    std::vector<double> density;  // nu/mu per bin, NaN where mu vanishes
};

struct InvariantDensity {
    // interval: bins over [lo, hi] of the real domain; argument: bins over arg(z) in [-pi, pi)
    std::string binning;
    double lo = 0, hi = 0;
    int cesaro_depth = 0;
    double effective_samples = 0;
    double total_mass = 0;
    long clamped = 0;  // pushed atoms that left the domain and were clamped to the end bins
    std::vector<DensityLevel> levels;
    AtomMeasure measure;  // filled only when atoms are kept
};

// (1/n) sum_{i<n} f^i_* mu, binned at each requested resolution.
inline InvariantDensity invariant_density(const MapSpec& f, const AtomMeasure& mu, int cesaro_depth,
                                          const std::vector<int>& bin_levels = {16, 256, 4096, 65536},
                                          bool keep_atoms = false, int workers = 1) {
    if (cesaro_depth < 1) throw PreconditionError("cesaro_depth must be >= 1");
    if (mu.points.empty()) throw PreconditionError("empty measure");
    InvariantDensity D;
    D.cesaro_depth = cesaro_depth;
    D.binning = f.is_real() ? "interval" : "argument";
    D.lo = f.is_real() ? f.domain_lo() : -std::numbers::pi;
    D.hi = f.is_real() ? f.domain_hi() : std::numbers::pi;
    D.effective_samples = double(mu.points.size()) * cesaro_depth;
    auto coord = [&](cplx z) { return f.is_real() ? z.real() : std::arg(z); };
    auto bin_of = [&](double x, int bins, bool& clamped) {
        double u = (x - D.lo) / (D.hi - D.lo);
        int k = int(std::floor(u * bins));
        if (k < 0 || k >= bins) {
            clamped = clamped || u < -1e-12 || u > 1 + 1e-12;
            k = std::clamp(k, 0, bins - 1);
        }
        return k;
    };
    // fixed partition of the atoms, independent of the worker count
    const std::size_t chunks = 16;
    std::size_t n = mu.points.size();
    std::vector<std::vector<std::vector<double>>> part(chunks);
    std::vector<long> clamp_count(chunks, 0);
    std::vector<std::vector<cplx>> kept(chunks);
    std::vector<std::vector<double>> kept_w(chunks);
    const double inv = 1.0 / cesaro_depth;
    detail::parallel_for(chunks, workers, [&](std::size_t c) {
        auto& H = part[c];
        for (int b : bin_levels) H.emplace_back(std::size_t(b), 0.0);
        for (std::size_t i = c * n / chunks; i < (c + 1) * n / chunks; ++i) {
            cplx z = mu.points[i];
            double w = mu.weights[i] * inv;
            for (int t = 0; t < cesaro_depth; ++t) {
                bool cl = false;
                double x = coord(z);
                for (std::size_t l = 0; l < bin_levels.size(); ++l) H[l][std::size_t(bin_of(x, bin_levels[l], cl))] += w;
                if (cl) ++clamp_count[c];
                if (keep_atoms) {
                    kept[c].push_back(z);
                    kept_w[c].push_back(w);
                }
                z = f.is_real() ? cplx(f(z.real()), 0.0) : f(z);
            }
        }
    });
    for (std::size_t l = 0; l < bin_levels.size(); ++l) {
        DensityLevel lev;
        lev.bins = bin_levels[l];
        lev.nu_mass.assign(std::size_t(lev.bins), 0.0);
        for (std::size_t c = 0; c < chunks; ++c)
            for (int k = 0; k < lev.bins; ++k) lev.nu_mass[std::size_t(k)] += part[c][l][std::size_t(k)];
        if (mu.lebesgue) {
            lev.mu_mass.assign(std::size_t(lev.bins), mu.total() / lev.bins);
        } else {
            lev.mu_mass.assign(std::size_t(lev.bins), 0.0);
            bool cl = false;
            for (std::size_t i = 0; i < n; ++i) lev.mu_mass[std::size_t(bin_of(coord(mu.points[i]), lev.bins, cl))] += mu.weights[i];
        }
        for (int k = 0; k < lev.bins; ++k) {
            double m = lev.mu_mass[std::size_t(k)];
            lev.density.push_back(m > 0 ? lev.nu_mass[std::size_t(k)] / m : std::numeric_limits<double>::quiet_NaN());
        }
        D.levels.push_back(std::move(lev));
    }
    for (double v : D.levels.front().nu_mass) D.total_mass += v;
    for (auto c : clamp_count) D.clamped += c;
    if (keep_atoms) {
        D.measure.exponent = mu.exponent;
        D.measure.base_point = mu.base_point;
        D.measure.generation_depth = mu.generation_depth;
        D.measure.normalized = mu.normalized;
        for (std::size_t c = 0; c < chunks; ++c) {
            D.measure.points.insert(D.measure.points.end(), kept[c].begin(), kept[c].end());
            D.measure.weights.insert(D.measure.weights.end(), kept_w[c].begin(), kept_w[c].end());
        }
    }
    return D;
}

struct LpRow {
    double p = 0;
    std::vector<double> integrals;  // per refinement level
    std::string verdict;            // stable, diverging, undetermined
};

// int density^p dmu per level; stable when the last two levels differ by
// less than 5%, diverging when the last level grew by more than 50%.
inline std::vector<LpRow> lp_regularity(const InvariantDensity& D, const std::vector<double>& p_grid) {
    if (D.levels.size() < 3) throw PreconditionError("density must be built at three or more refinement levels");
    std::vector<LpRow> out;
    for (double p : p_grid) {
        LpRow row;
        row.p = p;
        for (const auto& lev : D.levels) {
            double I = 0;
            for (std::size_t k = 0; k < lev.density.size(); ++k)
                if (lev.mu_mass[k] > 0) I += lev.mu_mass[k] * std::pow(lev.density[k], p);
            row.integrals.push_back(I);
        }
        double a = row.integrals[row.integrals.size() - 2], b = row.integrals.back();
        if (std::abs(b - a) < 0.05 * std::abs(a)) row.verdict = "stable";
        else if (b > 1.5 * a) row.verdict = "diverging";
        else row.verdict = "undetermined";
        out.push_back(row);
    }
    return out;
}

struct PushforwardRow {
    std::size_t set = 0;
    int n = 0;
    double preimage_mass = 0;  // mu(f^-n(A))
    double image_mass = 0;     // mu(f(A))
    double ratio = 0;
};

struct PushforwardProbe {
    double q = 0;
    std::vector<PushforwardRow> rows;
    double max_ratio = 0;
    long excluded = 0;
    double trend_slope = 0;  // d log(max_n ratio) / d log mu(f(A)) across the sets
    std::string verdict;     // bounded, growing, undetermined
};

// max over (A, n) of mu(f^-n(A)) / mu(f(A))^(1/q). The constant is never
// estimated; the verdict looks at how the ratio moves as the sets shrink.
inline PushforwardProbe pushforward_bound_probe(const MapSpec& f, const AtomMeasure& mu, double q,
                                                const std::vector<TestSet>& sets, const std::vector<int>& n_grid,
                                                int workers = 1) {
    if (!(q > 0)) throw PreconditionError("q must be positive");
    PushforwardProbe P;
    P.q = q;
    int nmax = 0;
    for (int n : n_grid) {
        if (n < 0) throw PreconditionError("n must be nonnegative");
        nmax = std::max(nmax, n);
    }
    // pre[s][n]: mass of atoms whose n-th iterate lies in set s
    std::vector<std::vector<double>> pre(sets.size(), std::vector<double>(std::size_t(nmax) + 1, 0.0));
    const std::size_t chunks = 16;
    std::size_t N = mu.points.size();
    std::vector<std::vector<std::vector<double>>> part(chunks, pre);
    detail::parallel_for(chunks, workers, [&](std::size_t c) {
        for (std::size_t i = c * N / chunks; i < (c + 1) * N / chunks; ++i) {
            cplx z = mu.points[i];
            for (int n = 0; n <= nmax; ++n) {
                for (std::size_t s = 0; s < sets.size(); ++s)
                    if (sets[s].contains(z)) part[c][s][std::size_t(n)] += mu.weights[i];
                z = f.is_real() ? cplx(f(z.real()), 0.0) : f(z);
            }
        }
    });
    for (std::size_t c = 0; c < chunks; ++c)
        for (std::size_t s = 0; s < sets.size(); ++s)
            for (int n = 0; n <= nmax; ++n) pre[s][std::size_t(n)] += part[c][s][std::size_t(n)];
    std::vector<double> lx, ly;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        double img;
        if (f.is_real() && mu.lebesgue) {
            double a = sets[s].center.real() - sets[s].radius, b = sets[s].center.real() + sets[s].radius;
            double ya = f(a), yb = f(b);
            double lo = std::max(std::min(ya, yb), f.domain_lo()), hi = std::min(std::max(ya, yb), f.domain_hi());
            img = std::max(0.0, hi - lo) / (f.domain_hi() - f.domain_lo()) * mu.total();
        } else {
            img = detail::image_mass(f, mu.points, mu.weights, sets[s]);
        }
        if (img <= 0) {
            P.excluded += long(n_grid.size());
            continue;
        }
        double best = 0;
        for (int n : n_grid) {
            PushforwardRow r{s, n, pre[s][std::size_t(n)], img, pre[s][std::size_t(n)] / std::pow(img, 1.0 / q)};
            best = std::max(best, r.ratio);
            P.rows.push_back(r);
        }
        P.max_ratio = std::max(P.max_ratio, best);
        if (best > 0) {
            lx.push_back(std::log(img));
            ly.push_back(std::log(best));
        }
    }
    if (lx.size() >= 2) {
        P.trend_slope = detail::least_squares(lx, ly).slope;
        P.verdict = P.trend_slope < -0.1 ? "growing" : "bounded";
    } else {
        P.verdict = "undetermined";
    }
    return P;
}

// Observables for correlation measurements on real maps.
struct Observable {
    std::string id;
    std::function<double(double)> fn;
};

namespace observables {

inline Observable coordinate() {
    return {"x", [](double x) { return x; }};
}
inline Observable cosine(double k = 1.0) {
    return {"cos(" + detail::fmt(k) + "pi x)", [k](double x) { return std::cos(k * std::numbers::pi * x); }};
}
inline Observable sine(double k = 1.0) {
    return {"sin(" + detail::fmt(k) + "pi x)", [k](double x) { return std::sin(k * std::numbers::pi * x); }};
}
// logistic smoothing of the indicator of [a, b]
inline Observable smooth_indicator(double a, double b, double width) {
    return {"ind[" + detail::fmt(a) + "," + detail::fmt(b) + "]",
            [=](double x) { return 1.0 / (1.0 + std::exp(-(x - a) / width)) - 1.0 / (1.0 + std::exp(-(x - b) / width)); }};
}
inline Observable constant(double c = 1.0) {
    return {"const", [c](double) { return c; }};
}

}  // namespace observables

struct DecayFit {
    double poly_exponent = std::numeric_limits<double>::quiet_NaN();
    double poly_rms = std::numeric_limits<double>::quiet_NaN();
    double exp_rate = std::numeric_limits<double>::quiet_NaN();  // C_n ~ exp(-rate n)
    double exp_rms = std::numeric_limits<double>::quiet_NaN();
    int points = 0;
    int floor_from = -1;  // first n >= 1 from which every |C_n| is at the floor
    // polynomial, faster-than-polynomial, undetermined
    std::string classification = "undetermined";
    std::string note;
};

// Fits log|C_n| against log n and against n, using n >= 1 above the floor
// (|C_n| > 3 sigma_n). The better fit decides; when the sequence sinks into
// the floor early and stays there, too few points remain and the decay is
// reported as faster than polynomial.
inline DecayFit classify_decay(const std::vector<double>& C, const std::vector<double>& sigma) {
    DecayFit d;
    std::vector<double> ln, n1, lc;
    auto above = [&](std::size_t n) { return std::abs(C[n]) > 3.0 * (n < sigma.size() ? sigma[n] : 0.0); };
    for (std::size_t n = 1; n < C.size(); ++n) {
        if (!above(n) || C[n] == 0.0) continue;
        ln.push_back(std::log(double(n)));
        n1.push_back(double(n));
        lc.push_back(std::log(std::abs(C[n])));
    }
    d.points = int(ln.size());
    for (std::size_t n = C.size(); n-- > 1;) {
        if (above(n)) break;
        d.floor_from = int(n);
    }
    if (d.points >= 3) {
        auto p = detail::least_squares(ln, lc);
        auto e = detail::least_squares(n1, lc);
        d.poly_exponent = -p.slope;
        d.poly_rms = p.rms;
        d.exp_rate = -e.slope;
        d.exp_rms = e.rms;
        if (d.exp_rms < d.poly_rms && d.exp_rate > 0) {
            d.classification = "faster-than-polynomial";
            d.note = "exponential fit preferred by residual";
        } else {
            d.classification = "polynomial";
            d.note = "power-law fit preferred by residual";
        }
        return d;
    }
    std::size_t nmax = C.size() - 1;
    if (d.floor_from >= 1 && std::size_t(d.floor_from) * 4 <= nmax) {
        d.classification = "faster-than-polynomial";
        d.note = "noise floor reached at n=" + std::to_string(d.floor_from) + "; too few points for a fit";
    } else {
        d.note = "too few points above the noise floor";
    }
    return d;
}

struct MixingReport {
    std::string phi_id, psi_id;
    std::vector<double> C;      // C_0 .. C_nmax
    std::vector<double> sigma;  // batch-means standard error per n
    std::vector<bool> at_floor;
    DecayFit fit;
    long samples = 0;
    int chunks = 0;
    std::uint64_t seed = 0;
};

using NuSampler = std::function<double(std::mt19937_64&)>;

inline NuSampler uniform_sampler(const MapSpec& f) {
    double lo = f.domain_lo(), hi = f.domain_hi();
    return [lo, hi](std::mt19937_64& g) { return lo + (hi - lo) * detail::uniform01(g); };
}

// Time averages along independent orbits, one per chunk. Each chunk gives its
// own estimate of C_n; their mean is reported and their spread is the noise
// floor (batch means).
inline MixingReport correlation_decay(const MapSpec& f, const NuSampler& sampler, const Observable& phi,
                                      const Observable& psi, int n_max, long samples, std::uint64_t seed,
                                      int workers = 1, int burn_in = 1000, int chunks = 64) {
    if (!f.is_real()) throw PreconditionError("correlations are measured for real maps");
    if (n_max < 0) throw PreconditionError("n_max must be nonnegative");
    if (chunks < 2) throw PreconditionError("need at least two chunks");
    long per = samples / chunks;
    if (per < 2) throw PreconditionError("too few samples per chunk");
    MixingReport R;
    R.phi_id = phi.id;
    R.psi_id = psi.id;
    R.samples = per * chunks;
    R.chunks = chunks;
    R.seed = seed;
    std::vector<std::vector<double>> est(std::size_t(chunks), std::vector<double>(std::size_t(n_max) + 1, 0.0));
    detail::parallel_for(std::size_t(chunks), workers, [&](std::size_t c) {
        auto g = detail::stream(seed, c);
        double x = sampler(g);
        auto step = [&](double y) {
            double z = f(y);
            // a rounded orbit stuck on a fixed point is restarted
            if (z == y || !f.in_domain(z)) z = sampler(g);
            return z;
        };
        for (int t = 0; t < burn_in; ++t) x = step(x);
        std::vector<double> ph(std::size_t(per + n_max)), ps(std::size_t(per + n_max));
        for (long t = 0; t < per + n_max; ++t) {
            ph[std::size_t(t)] = phi.fn(x);
            ps[std::size_t(t)] = psi.fn(x);
            x = step(x);
        }
        double mps = 0;
        for (long t = 0; t < per; ++t) mps += ps[std::size_t(t)];
        mps /= double(per);
        for (int n = 0; n <= n_max; ++n) {
            double s = 0, mph = 0;
            for (long t = 0; t < per; ++t) {
                s += ph[std::size_t(t + n)] * ps[std::size_t(t)];
                mph += ph[std::size_t(t + n)];
            }
            mph /= double(per);
            est[c][std::size_t(n)] = s / double(per) - mph * mps;
        }
    });
    for (int n = 0; n <= n_max; ++n) {
        double m = 0, v = 0;
        for (int c = 0; c < chunks; ++c) m += est[std::size_t(c)][std::size_t(n)];
        m /= chunks;
        for (int c = 0; c < chunks; ++c) v += std::pow(est[std::size_t(c)][std::size_t(n)] - m, 2);
        v /= (chunks - 1);
        R.C.push_back(m);
        R.sigma.push_back(std::sqrt(v / chunks));
        R.at_floor.push_back(std::abs(m) <= 3.0 * R.sigma.back());
    }
    R.fit = classify_decay(R.C, R.sigma);
    return R;
}

// Empirical measure of long orbits, binned over the real domain.
inline std::vector<double> orbit_histogram(const MapSpec& f, const NuSampler& sampler, int bins, long samples,
                                           std::uint64_t seed, int workers = 1, int burn_in = 1000, int chunks = 64) {
    if (!f.is_real()) throw PreconditionError("orbit histograms are taken for real maps");
    long per = samples / chunks;
    std::vector<std::vector<double>> part(std::size_t(chunks), std::vector<double>(std::size_t(bins), 0.0));
    double lo = f.domain_lo(), hi = f.domain_hi();
    detail::parallel_for(std::size_t(chunks), workers, [&](std::size_t c) {
        auto g = detail::stream(seed, c);
        double x = sampler(g);
        for (long t = 0; t < burn_in + per; ++t) {
            if (t >= burn_in) {
                int k = std::clamp(int((x - lo) / (hi - lo) * bins), 0, bins - 1);
                part[c][std::size_t(k)] += 1.0;
            }
            double z = f(x);
            x = (z == x || !f.in_domain(z)) ? sampler(g) : z;
        }
    });
    std::vector<double> h(std::size_t(bins), 0.0);
    for (auto& p : part)
        for (int k = 0; k < bins; ++k) h[std::size_t(k)] += p[std::size_t(k)];
    for (auto& v : h) v /= double(per * chunks);
    return h;
}

// Largest relative difference between two binned measures of equal size.
inline double histogram_discrepancy(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw PreconditionError("histograms differ in size");
    double worst = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double ref = std::max(std::abs(b[k]), 1e-300);
        worst = std::max(worst, std::abs(a[k] - b[k]) / ref);
    }
    return worst;
}

// coarsen a histogram whose size is a multiple of `bins`
inline std::vector<double> rebin(const std::vector<double>& h, int bins) {
    if (bins < 1 || h.size() % std::size_t(bins) != 0) throw PreconditionError("bin count must divide the histogram");
    std::size_t f = h.size() / std::size_t(bins);
    std::vector<double> out(std::size_t(bins), 0.0);
    for (std::size_t k = 0; k < h.size(); ++k) out[k / f] += h[k];
    return out;
}

struct DeltaXiRow {
    int m = 0;
    double Delta = 0;      // distance from z to f^j(Crit'), 1 <= j <= max(m, 1)
    double xi = 0;         // largest component of f^-m(B(z, eps Delta))
    double ball_diam = 0;  // 2 eps Delta
    bool truncated = false;
};

struct DeltaXiDiagnostic {
    cplx z{};
    double eps = 0.1;
    std::vector<DeltaXiRow> rows;
    bool excluded = false;  // z sits on a critical orbit
};

template <class Space>
DeltaXiDiagnostic delta_xi_diagnostics(const MapSpec& f, cplx z, const std::vector<int>& m_grid, double eps = 0.1,
                                       long budget = 2'000'000) {
    if (!(eps > 0)) throw PreconditionError("eps must be positive");
    DeltaXiDiagnostic D;
    D.z = z;
    D.eps = eps;
    int mmax = 1;
    for (int m : m_grid) {
        if (m < 0) throw PreconditionError("depths must be nonnegative");
        mmax = std::max(mmax, m);
    }
    // running minimum distance to the forward critical orbits
    std::vector<double> dist(std::size_t(mmax) + 1, std::numeric_limits<double>::infinity());
    auto crit = f.julia_critical_points();
    std::vector<cplx> w;
    for (const auto& c : crit) w.push_back(c.location);
    for (int j = 1; j <= mmax; ++j) {
        double d = std::numeric_limits<double>::infinity();
        for (auto& v : w) {
            v = f.is_real() ? cplx(f(v.real()), 0.0) : f(v);
            d = std::min(d, std::abs(v - z));
        }
        dist[std::size_t(j)] = std::min(dist[std::size_t(j - 1)], d);
    }
    for (int m : m_grid) {
        DeltaXiRow r;
        r.m = m;
        r.Delta = dist[std::size_t(std::max(m, 1))];
        if (r.Delta <= 1e-12 * f.scale()) {
            D.excluded = true;
            D.rows.clear();
            return D;
        }
        r.ball_diam = 2 * eps * r.Delta;
        if (!std::isfinite(r.Delta)) {
            r.xi = std::numeric_limits<double>::infinity();
            D.rows.push_back(r);
            continue;
        }
        auto B = Space::ball(Space::from(z), eps * r.Delta);
        auto cs = all_components<Space>(f, B, m, budget);
        r.truncated = cs.truncated;
        for (const auto& c : cs.components) r.xi = std::max(r.xi, c.diameter);
        D.rows.push_back(r);
    }
    return D;
}

struct BoundedTrend {
    double rate = 0;   // fitted ratio of successive increments
    double limit = std::numeric_limits<double>::quiet_NaN();  // geometric extrapolation
    std::string verdict;  // bounded, growing, undetermined
};

// Looks at the increments of the sequence over the second half of the
// depths. Increments that shrink geometrically mean a finite limit; increments
// that do not shrink mean growth without bound.
inline BoundedTrend bounded_trend(const std::vector<int>& depths, const std::vector<double>& seq) {
    BoundedTrend b;
    std::vector<double> xs, ys;
    std::size_t start = std::max<std::size_t>(1, depths.size() / 2);
    bool rising = false;
    for (std::size_t i = start; i < depths.size(); ++i) {
        if (!std::isfinite(seq[i]) || !std::isfinite(seq[i - 1])) {
            b.verdict = "undetermined";
            return b;
        }
        double d = seq[i] - seq[i - 1];
        if (d > 0) {
            rising = true;
            xs.push_back(double(depths[i]));
            ys.push_back(std::log(d));
        }
    }
    if (!rising) {
        b.rate = 0;
        b.limit = seq.back();
        b.verdict = "bounded";
        return b;
    }
    if (xs.size() < 3) {
        b.verdict = "undetermined";
        return b;
    }
    b.rate = std::exp(detail::least_squares(xs, ys).slope);
    if (b.rate < 1) b.limit = seq.back() + std::exp(ys.back()) * b.rate / (1 - b.rate);
    b.verdict = b.rate < 0.95 ? "bounded" : (b.rate >= 0.99 ? "growing" : "undetermined");
    return b;
}

struct PoincareBound {
    double s = 0, t = 0, eps = 0.1;
    std::vector<int> depths;
    std::vector<double> lhs;    // P_M(z; s), n = 0 .. M
    std::vector<double> rhs;    // sum_{m<=M} L_m xi_m^(s-t) Delta_m^-s
    std::vector<double> ratio;
    BoundedTrend trend;
    // largest relative change of the right side when eps is doubled
    double eps_sensitivity = 0;
    bool excluded = false;
};

// Both sides of the Poincare-series bound at finite depth. bad_weights[m] is
// the weighted sum over bad pull-backs of V-hat at depth m. The constant is
// unknown; only the trend of the ratio is reported.
template <class Space>
PoincareBound poincare_bound_probe(const MapSpec& f, cplx z, double s, double t,
                                   const std::vector<double>& bad_weights, int max_depth, double eps = 0.1,
                                   int workers = 1) {
    if (max_depth < 1) throw PreconditionError("max_depth must be >= 1");
    if (int(bad_weights.size()) < max_depth + 1) throw PreconditionError("bad weights needed for depths 0 .. max_depth");
    PoincareBound P;
    P.s = s;
    P.t = t;
    P.eps = eps;
    std::vector<int> grid;
    for (int m = 0; m <= max_depth; ++m) grid.push_back(m);
    auto dx = delta_xi_diagnostics<Space>(f, z, grid, eps);
    auto dx2 = delta_xi_diagnostics<Space>(f, z, grid, 2 * eps);
    if (dx.excluded) {
        P.excluded = true;
        return P;
    }
    long singular = 0;
    auto levels = detail::backward_tree(f, z, max_depth, workers, singular);
    double L = 0, R = 0, R2 = 0;
    for (int M = 0; M <= max_depth; ++M) {
        L += std::exp(detail::log_sum_exp(levels[std::size_t(M)].logd, s));
        const auto& row = dx.rows[std::size_t(M)];
        const auto& row2 = dx2.rows[std::size_t(M)];
        R += bad_weights[std::size_t(M)] * std::pow(row.xi, s - t) * std::pow(row.Delta, -s);
        R2 += bad_weights[std::size_t(M)] * std::pow(row2.xi, s - t) * std::pow(row2.Delta, -s);
        P.depths.push_back(M);
        P.lhs.push_back(L);
        P.rhs.push_back(R);
        P.ratio.push_back(R > 0 ? L / R : std::numeric_limits<double>::infinity());
        if (R > 0) P.eps_sensitivity = std::max(P.eps_sensitivity, std::abs(R2 - R) / R);
    }
    P.trend = bounded_trend(P.depths, P.ratio);
    return P;
}

}  // namespace dynlab
