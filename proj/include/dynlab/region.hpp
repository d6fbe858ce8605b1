#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"
#include "maps.hpp"

namespace dynlab {

// Closed polygon approximating a Jordan curve, plus a point known to lie inside.
struct Loop {
    std::vector<cplx> pts;
    cplx rep;
};

inline Loop circle(cplx c, double r, int n = 64) {
    Loop L;
    L.rep = c;
    for (int k = 0; k < n; ++k) {
        double a = 2.0 * std::numbers::pi * k / n;
        L.pts.push_back(c + r * cplx(std::cos(a), std::sin(a)));
    }
    return L;
}

inline bool point_in_polygon(const std::vector<cplx>& poly, cplx p) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        double yi = poly[i].imag(), yj = poly[j].imag();
        if ((yi > p.imag()) != (yj > p.imag())) {
            double x = poly[j].real() + (p.imag() - yj) * (poly[i].real() - poly[j].real()) / (yi - yj);
            if (p.real() < x) inside = !inside;
        }
    }
    return inside;
}

inline double polygon_diameter(const std::vector<cplx>& poly) {
    double d = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i)
        for (std::size_t j = i + 1; j < poly.size(); ++j) d = std::max(d, std::abs(poly[i] - poly[j]));
    return d;
}

struct RealPiece {
    Interval region;
    int index = 0;           // position among the pieces of f^-1(U), left to right
    std::vector<int> crits;  // indices into critical_points()
    int degree() const { return crits.empty() ? 1 : 2; }
};

struct ComplexPiece {
    Loop region;
    int index = 0;  // which preimage of the first boundary sample starts the lift
    std::vector<int> crits;
    int deg = 1;
    int degree() const { return deg; }
};

// Pull-back primitives on the real line. Regions are open intervals, which may
// stick out of the domain; only the part inside the laps is pulled back.
struct RealSpace {
    using Point = double;
    using Region = Interval;
    using Piece = RealPiece;

    static Point rep(const Region& r) { return r.mid(); }
    static Region ball(Point y, double r) { return {y - r, y + r}; }
    static bool contains(const Region& r, Point p) { return r.contains(p); }
    static double dist(const Region& r, Point p) { return std::max({0.0, r.lo - p, p - r.hi}); }
    static double diam(const Region& r) { return r.length(); }
    static Point apply(const MapSpec& f, Point x) { return f(x); }
    static double abs_deriv(const MapSpec& f, Point x) { return std::abs(f.deriv(x)); }
    static Point from(cplx z) { return z.real(); }
    static cplx to_complex(Point x) { return {x, 0.0}; }
    // points of the region used for sampling: endpoints pulled in slightly
    static std::vector<Point> samples(const Region& r, int n) {
        std::vector<Point> s;
        for (int k = 0; k < n; ++k) s.push_back(r.lo + (k + 0.5) / n * r.length());
        return s;
    }

    static std::vector<Piece> pull(const MapSpec& f, const Region& U) {
        const auto& L = f.laps();
        struct Raw {
            double lo, hi;
            bool left_closed, right_closed;
        };
        std::vector<Raw> raw(L.size() - 1, Raw{0, 0, false, false});
        std::vector<bool> present(L.size() - 1, false);
        for (std::size_t k = 0; k + 1 < L.size(); ++k) {
            double a = L[k], b = L[k + 1];
            double fa = f(a), fb = f(b);
            auto solve = [&](double y) { return detail::bisect([&](double t) { return f(t) - y; }, a, b); };
            double xl, xr;
            bool la = U.contains(fa), rb = U.contains(fb);
            if (fa <= fb) {
                if (fa >= U.hi || fb <= U.lo) continue;
                xl = la ? a : solve(U.lo);
                xr = rb ? b : solve(U.hi);
            } else {
                if (fb >= U.hi || fa <= U.lo) continue;
                xl = la ? a : solve(U.hi);
                xr = rb ? b : solve(U.lo);
            }
            if (!(xl < xr)) continue;
            raw[k] = {xl, xr, la, rb};
            present[k] = true;
        }
        std::vector<Piece> out;
        for (std::size_t k = 0; k < raw.size(); ++k) {
            if (!present[k]) continue;
            Piece p;
            p.region = {raw[k].lo, raw[k].hi, raw[k].left_closed && k == 0, false};
            // merge across interior lap junctions whose value lies in U
            while (raw[k].right_closed && k + 1 < raw.size() && present[k + 1] && raw[k + 1].left_closed) {
                p.crits.push_back(int(k));  // junction k+1 is critical point k
                ++k;
                p.region.hi = raw[k].hi;
            }
            p.region.closed_hi = raw[k].right_closed && k + 1 == raw.size();
            p.index = int(out.size());
            out.push_back(p);
        }
        return out;
    }

    static Piece pull_containing(const MapSpec& f, const Region& U, Point p) {
        auto pieces = pull(f, U);
        const Piece* best = nullptr;
        double best_gap = std::numeric_limits<double>::infinity();
        for (const auto& q : pieces) {
            double gap = std::max({0.0, q.region.lo - p, p - q.region.hi});
            if (gap < best_gap) {
                best_gap = gap;
                best = &q;
            }
        }
        if (!best || best_gap > 1e-12 * f.scale())
            throw PreconditionError("point is not in the preimage of the region");
        return *best;
    }
};

// Pull-back primitives in the plane. A preimage component is found by lifting
// the boundary polygon with nearest-preimage continuation; the number of laps
// needed to close up is the degree of the component.
struct ComplexSpace {
    using Point = cplx;
    using Region = Loop;
    using Piece = ComplexPiece;

    static Point rep(const Region& r) { return r.rep; }
    static Region ball(Point y, double r) { return circle(y, r); }
    static bool contains(const Region& r, Point p) { return point_in_polygon(r.pts, p); }
    static double dist(const Region& r, Point p) {
        if (point_in_polygon(r.pts, p)) return 0.0;
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < r.pts.size(); ++i) {
            cplx a = r.pts[i], b = r.pts[(i + 1) % r.pts.size()];
            cplx ab = b - a;
            double t = std::norm(ab) > 0 ? std::clamp(std::real((p - a) * std::conj(ab)) / std::norm(ab), 0.0, 1.0) : 0.0;
            d = std::min(d, std::abs(p - (a + t * ab)));
        }
        return d;
    }
    static double diam(const Region& r) { return polygon_diameter(r.pts); }
    static Point apply(const MapSpec& f, Point z) { return f(z); }
    static double abs_deriv(const MapSpec& f, Point z) { return std::abs(f.deriv(z)); }
    static Point from(cplx z) { return z; }
    static cplx to_complex(Point z) { return z; }
    static std::vector<Point> samples(const Region& r, int n) {
        std::vector<Point> s;
        s.push_back(r.rep);
        std::size_t stride = std::max<std::size_t>(1, r.pts.size() / std::size_t(std::max(1, n - 1)));
        for (std::size_t k = 0; k < r.pts.size() && int(s.size()) < n; k += stride)
            s.push_back(0.5 * (r.pts[k] + r.rep));
        return s;
    }

    static std::vector<Piece> pull(const MapSpec& f, const Region& D) { return trace(f, D, nullptr); }

    static Piece pull_containing(const MapSpec& f, const Region& D, Point p) {
        auto pieces = trace(f, D, &p);
        if (pieces.empty()) throw PreconditionError("point is not in the preimage of the region");
        return pieces.front();
    }

private:
    static std::vector<cplx> pre(const MapSpec& f, cplx w) { return preimages(f, w); }

    static void step(const MapSpec& f, cplx w0, cplx w1, cplx& cur, std::vector<cplx>& out, int depth) {
        auto rs = pre(f, w1);
        double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
        cplx best = cur;
        for (const auto& r : rs) {
            double d = std::abs(r - cur);
            if (d < d1) {
                d2 = d1;
                d1 = d;
                best = r;
            } else if (d < d2) {
                d2 = d;
            }
        }
        if (d1 <= 0.3 * d2) {
            cur = best;
            out.push_back(cur);
            return;
        }
        if (depth >= 14) throw AmbiguityError("boundary lift passes too close to a critical point");
        cplx wm = 0.5 * (w0 + w1);
        step(f, w0, wm, cur, out, depth + 1);
        step(f, wm, w1, cur, out, depth + 1);
    }

    static std::vector<Piece> trace(const MapSpec& f, const Region& D, const Point* want) {
        const std::size_t n = D.pts.size();
        auto roots0 = pre(f, D.pts[0]);
        std::vector<bool> used(roots0.size(), false);
        auto nearest = [&](cplx z) {
            std::size_t b = 0;
            for (std::size_t j = 1; j < roots0.size(); ++j)
                if (std::abs(roots0[j] - z) < std::abs(roots0[b] - z)) b = j;
            return b;
        };
        std::vector<std::size_t> order(roots0.size());
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        if (want)
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return std::abs(roots0[a] - *want) < std::abs(roots0[b] - *want);
            });
        std::vector<Piece> out;
        for (std::size_t j0 : order) {
            if (used[j0]) continue;
            used[j0] = true;
            Piece piece;
            piece.index = int(j0);
            auto& pts = piece.region.pts;
            cplx cur = roots0[j0];
            pts.push_back(cur);
            int deg = 0;
            for (;;) {
                for (std::size_t i = 0; i < n; ++i) step(f, D.pts[i], D.pts[(i + 1) % n], cur, pts, 0);
                ++deg;
                std::size_t j = nearest(cur);
                pts.pop_back();
                if (j == j0) break;
                if (used[j] || deg >= f.degree()) throw AmbiguityError("boundary lift did not close up consistently");
                used[j] = true;
                pts.push_back(cur);
            }
            piece.deg = deg;
            int expected = 1;
            const auto& C = f.critical_points();
            for (std::size_t c = 0; c < C.size(); ++c) {
                if (point_in_polygon(pts, C[c].location)) {
                    piece.crits.push_back(int(c));
                    expected += C[c].order - 1;
                }
            }
            if (expected != deg) throw AmbiguityError("lifted boundary disagrees with the critical points it encloses");
            auto reps = pre(f, D.rep);
            bool found = false;
            for (const auto& r : reps) {
                if (point_in_polygon(pts, r)) {
                    piece.region.rep = r;
                    found = true;
                    break;
                }
            }
            if (!found) throw AmbiguityError("no preimage of the interior point inside the lifted boundary");
            if (want) {
                if (point_in_polygon(pts, *want)) return {piece};
                continue;
            }
            out.push_back(std::move(piece));
        }
        if (want) return {};
        return out;
    }
};

// Calls fn with the pull-back space matching the map's kind.
template <class Fn>
decltype(auto) with_space(const MapSpec& f, Fn&& fn) {
    if (f.is_real()) return fn(RealSpace{});
    return fn(ComplexSpace{});
}

}  // namespace dynlab
