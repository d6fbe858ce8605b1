#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "detail/fit.hpp"
#include "detail/parallel.hpp"
#include "detail/poly.hpp"
#include "detail/rng.hpp"
#include "error.hpp"
#include "inducing.hpp"
#include "maps.hpp"
#include "region.hpp"

namespace dynlab {

struct JuliaSample {
    std::vector<cplx> points;
    std::string method;  // inverse-iteration or escape-time
    int depth = 0;
    std::uint64_t seed = 0;
    cplx start{};        // repelling fixed point the walks start from
    long resampled = 0;  // steps that hit a critical point and were redrawn
};

struct DimensionReport {
    std::vector<double> scales;  // box side
    std::vector<long> counts;
    double dimension = std::numeric_limits<double>::quiet_NaN();
    double bracket = std::numeric_limits<double>::quiet_NaN();  // max deviation of two-scale slopes
    double fit_residual = 0;
    std::string method;
    bool undersampled = false;
};

// A repelling fixed point, taken among the roots of f(z) - z. Real maps need
// it inside the domain. Points on a critical orbit are passed over: their
// backward tree can be trapped (2 for x^2 - 2 has preimages 2 and -2 only,
// and -2 has only the critical point).
inline PeriodicPoint repelling_fixed_point(const MapSpec& f) {
    auto postcritical = [&](cplx z) {
        for (const auto& c : f.critical_points()) {
            cplx w = c.location;
            for (int k = 1; k <= 64; ++k) {
                w = f(w);
                if (!std::isfinite(std::abs(w)) || std::abs(w) > f.escape_radius() * 4) break;
                if (std::abs(w - z) <= 1e-9 * f.scale()) return true;
            }
        }
        return false;
    };
    auto c = f.coefficients();
    c[1] -= 1.0;
    auto roots = detail::roots(detail::trim(c));
    std::vector<PeriodicPoint> found;
    for (auto z : roots) {
        if (f.is_real()) {
            if (std::abs(z.imag()) > 1e-9 * f.scale()) continue;
            z = cplx(z.real(), 0.0);
            if (!f.in_domain(z.real())) continue;
        }
        auto p = find_periodic_point(f, 1, z);
        if (std::abs(p.multiplier) > 1.0 + 1e-9 && !postcritical(p.point)) found.push_back(p);
    }
    if (found.empty()) throw ConstructionFailure("no repelling fixed point available");
    // the most repelling one, ties broken by position
    std::sort(found.begin(), found.end(), [](const PeriodicPoint& a, const PeriodicPoint& b) {
        if (std::abs(a.multiplier) != std::abs(b.multiplier)) return std::abs(a.multiplier) > std::abs(b.multiplier);
        return a.point.real() != b.point.real() ? a.point.real() < b.point.real() : a.point.imag() < b.point.imag();
    });
    return found.front();
}

// n_points random backward walks of length `depth` from a repelling fixed
// point. Walk i uses its own random stream, so the sample does not depend on
// the worker count.
inline JuliaSample julia_sample(const MapSpec& f, std::size_t n_points, int depth, std::uint64_t seed,
                                int workers = 1) {
    if (depth < 1) throw PreconditionError("depth must be >= 1");
    JuliaSample S;
    S.method = "inverse-iteration";
    S.depth = depth;
    S.seed = seed;
    S.start = repelling_fixed_point(f).point;
    S.points.assign(n_points, S.start);
    std::vector<long> redraw(n_points, 0);
    const double tol = (f.is_real() ? 1e-10 : 1e-7) * f.scale();
    auto critical = [&](cplx x) {
        for (const auto& c : f.critical_points())
            if (std::abs(x - c.location) <= tol) return true;
        return false;
    };
    detail::parallel_for(n_points, workers, [&](std::size_t i) {
        auto g = detail::stream(seed, i);
        std::vector<cplx> path{S.start};
        long steps = 0;
        while (int(path.size()) <= depth) {
            if (++steps > 64L * depth) throw ConstructionFailure("backward walk keeps hitting critical points");
            std::vector<cplx> ok;
            for (auto x : preimages(f, path.back())) {
                if (f.is_real()) {
                    x = cplx(x.real(), 0.0);
                    if (!f.in_domain(x.real())) continue;
                }
                ok.push_back(x);
            }
            if (ok.empty()) throw ConstructionFailure("backward walk left the domain");
            cplx next = ok[std::size_t(g() % ok.size())];
            if (critical(next)) {
                // redraw this step; back up one level when the current point is a critical value
                ++redraw[i];
                bool any = false;
                for (auto x : ok) any = any || !critical(x);
                if (!any && path.size() > 1) path.pop_back();
                continue;
            }
            path.push_back(next);
        }
        cplx z = path.back();
        S.points[i] = z;
    });
    for (long r : redraw) S.resampled += r;
    return S;
}

namespace detail {

inline DimensionReport fit_counts(std::vector<double> scales, std::vector<long> counts, std::string method) {
    DimensionReport R;
    R.scales = std::move(scales);
    R.counts = std::move(counts);
    R.method = std::move(method);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < R.scales.size(); ++i) {
        if (R.counts[i] <= 0) continue;
        x.push_back(-std::log(R.scales[i]));
        y.push_back(std::log(double(R.counts[i])));
    }
    auto fit = least_squares(x, y);
    R.dimension = fit.slope;
    R.fit_residual = fit.rms;
    double dev = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) dev = std::max(dev, std::abs((y[j] - y[i]) / (x[j] - x[i]) - fit.slope));
    R.bracket = dev;
    return R;
}

}  // namespace detail

// Grid box counting. Boxes are anchored at the lower-left corner of the
// sample's bounding box, so dyadic scales give nested grids.
inline DimensionReport box_dimension(const JuliaSample& sample, const std::vector<double>& scales) {
    if (scales.size() < 5) throw PreconditionError("need at least five scales");
    if (sample.points.empty()) throw PreconditionError("empty sample");
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
    for (auto z : sample.points) {
        x0 = std::min(x0, z.real());
        y0 = std::min(y0, z.imag());
    }
    std::vector<double> sc = scales;
    std::sort(sc.begin(), sc.end(), std::greater<>());
    std::vector<long> counts;
    for (double h : sc) {
        if (!(h > 0)) throw PreconditionError("scales must be positive");
        std::unordered_set<std::uint64_t> boxes;
        for (auto z : sample.points) {
            auto i = std::uint64_t(std::int64_t(std::floor((z.real() - x0) / h)));
            auto j = std::uint64_t(std::int64_t(std::floor((z.imag() - y0) / h)));
            boxes.insert(i * 0x9e3779b97f4a7c15ULL ^ (j + 0x632be59bd9b4e019ULL));
        }
        counts.push_back(long(boxes.size()));
    }
    auto R = detail::fit_counts(sc, counts, sample.method + " box counting");
    // the finest grid is near one box per point: counts no longer see the set
    R.undersampled = double(R.counts.back()) >= 0.5 * double(sample.points.size());
    return R;
}

struct EscapeCell {
    bool escaped = false;
    double distance = 0;  // exterior distance estimate when escaped
};

namespace detail {

inline EscapeCell escape_probe(const MapSpec& f, cplx z, int max_iter) {
    const double bail = 1e8;
    cplx dz = 1.0;
    for (int n = 0; n < max_iter; ++n) {
        double r = std::abs(z);
        if (r > bail) {
            double d = std::abs(dz);
            return {true, d > 0 ? r * std::log(r) / d : 0.0};
        }
        dz *= f.deriv(z);
        z = f(z);
        // derivative collapsing inside the set: attracted to a cycle
        if (std::abs(dz) < 1e-300) break;
    }
    return {false, 0.0};
}

}  // namespace detail

// Quadtree scan of the square [-R, R]^2, R the escape radius. A cell is
// counted when its center and corners disagree on escaping, or when the
// exterior distance estimate at the center is within the cell's half
// diagonal. Only counted cells are refined.
inline DimensionReport escape_time_dimension(const MapSpec& f, int k_min, int k_max, int max_iter = 2000,
                                             int workers = 1) {
    if (f.is_real()) throw PreconditionError("escape-time scan needs a complex map");
    if (k_max - k_min + 1 < 5) throw PreconditionError("need at least five scales");
    if (k_min < 1) throw PreconditionError("k_min must be >= 1");
    const double R = f.escape_radius();
    struct Cell {
        std::int64_t i, j;
    };
    auto side_at = [&](int k) { return 2 * R / double(std::int64_t(1) << k); };
    auto corner = [&](int k, std::int64_t i, std::int64_t j) { return cplx(-R + i * side_at(k), -R + j * side_at(k)); };
    std::vector<Cell> cells;
    for (std::int64_t i = 0; i < (std::int64_t(1) << k_min); ++i)
        for (std::int64_t j = 0; j < (std::int64_t(1) << k_min); ++j) cells.push_back({i, j});
    std::vector<double> scales;
    std::vector<long> counts;
    for (int k = k_min; k <= k_max; ++k) {
        double h = side_at(k);
        double half_diag = h * std::sqrt(0.5);
        std::vector<char> hit(cells.size(), 0);
        detail::parallel_for((cells.size() + 255) / 256, workers, [&](std::size_t b) {
            for (std::size_t c = b * 256; c < std::min(cells.size(), (b + 1) * 256); ++c) {
                cplx lo = corner(k, cells[c].i, cells[c].j);
                auto mid = detail::escape_probe(f, lo + cplx(h / 2, h / 2), max_iter);
                if (mid.escaped && mid.distance <= half_diag) {
                    hit[c] = 1;
                    continue;
                }
                for (cplx d : {cplx(0, 0), cplx(h, 0), cplx(0, h), cplx(h, h)}) {
                    if (detail::escape_probe(f, lo + d, max_iter).escaped != mid.escaped) {
                        hit[c] = 1;
                        break;
                    }
                }
            }
        });
        std::vector<Cell> next;
        long n = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (!hit[c]) continue;
            ++n;
            if (k < k_max)
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b) next.push_back({2 * cells[c].i + a, 2 * cells[c].j + b});
        }
        scales.push_back(h);
        counts.push_back(n);
        cells = std::move(next);
    }
    return detail::fit_counts(scales, counts, "escape-time scan");
}

inline void write_counts_csv(std::ostream& os, const DimensionReport& r) {
    os << "scale,count\n";
    os.precision(17);
    for (std::size_t i = 0; i < r.scales.size(); ++i) os << r.scales[i] << ',' << r.counts[i] << '\n';
}

struct BranchBound {
    double inf_deriv = 0;
    double sup_deriv = 0;
};

struct HyperbolicBracket {
    double lower = 0;  // from sup |DF|
    double upper = 0;  // from inf |DF|
    std::size_t branches = 0;
    bool defined = false;
    std::string flag;
};

namespace detail {

// s with sum a_i^-s = 1; every a_i > 1
inline double moran_root(const std::vector<double>& a) {
    auto g = [&](double s) {
        double t = 0;
        for (double v : a) t += std::exp(-s * std::log(v));
        return t - 1.0;
    };
    double lo = 0, hi = 1;
    while (g(hi) > 0 && hi < 1e6) hi *= 2;
    for (int it = 0; it < 200; ++it) {
        double m = 0.5 * (lo + hi);
        (g(m) > 0 ? lo : hi) = m;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

// Moran equation on derivative bounds: sup |DF| gives the lower end,
// inf |DF| the upper end.
inline HyperbolicBracket hyperbolic_dimension_lb(const std::vector<BranchBound>& bounds) {
    HyperbolicBracket H;
    H.branches = bounds.size();
    if (bounds.size() < 2) {
        H.flag = "fewer than two branches";
        return H;
    }
    std::vector<double> lo, hi;
    for (const auto& b : bounds) {
        if (!(b.inf_deriv > 1.0) || b.sup_deriv < b.inf_deriv) {
            H.flag = "branch without expansion";
            return H;
        }
        lo.push_back(b.sup_deriv);
        hi.push_back(b.inf_deriv);
    }
    H.lower = detail::moran_root(lo);
    H.upper = detail::moran_root(hi);
    H.defined = true;
    return H;
}

// |DF| = |Df^m| sampled on a branch: a grid including both ends (real), or
// the boundary polygon where the extremes of a nonvanishing holomorphic
// derivative sit (complex).
template <class Space>
BranchBound branch_derivative_bound(const MapSpec& f, const InducedBranch<Space>& b, int samples = 33) {
    std::vector<cplx> pts;
    if constexpr (std::is_same_v<Space, RealSpace>) {
        for (int k = 0; k < samples; ++k)
            pts.emplace_back(b.region.lo + (b.region.hi - b.region.lo) * k / double(samples - 1), 0.0);
    } else {
        for (auto z : b.region.pts) pts.push_back(z);
    }
    BranchBound B{std::numeric_limits<double>::infinity(), 0.0};
    for (auto z : pts) {
        double d = 1;
        for (int n = 0; n < b.inducing_time; ++n) {
            d *= std::abs(f.deriv(z));
            z = f.is_real() ? cplx(f(z.real()), 0.0) : f(z);
        }
        B.inf_deriv = std::min(B.inf_deriv, d);
        B.sup_deriv = std::max(B.sup_deriv, d);
    }
    return B;
}

template <class Space>
HyperbolicBracket hyperbolic_dimension_lb(const MapSpec& f, const std::vector<InducedBranch<Space>>& branches,
                                          int samples = 33) {
    for (std::size_t i = 1; i < branches.size(); ++i)
        if (branches[i].target_component != branches[0].target_component)
            throw PreconditionError("branches must map onto a common component of V");
    if constexpr (std::is_same_v<Space, RealSpace>) {
        std::vector<Interval> iv;
        for (const auto& b : branches) iv.push_back(b.region);
        std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
        for (std::size_t i = 1; i < iv.size(); ++i)
            if (iv[i].lo < iv[i - 1].hi) throw PreconditionError("branches must be pairwise disjoint");
    }
    std::vector<BranchBound> bounds;
    for (const auto& b : branches) bounds.push_back(branch_derivative_bound<Space>(f, b, samples));
    return hyperbolic_dimension_lb(bounds);
}

}  // namespace dynlab
