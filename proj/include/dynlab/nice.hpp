#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "detail/format.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "maps.hpp"
#include "pullback.hpp"
#include "region.hpp"

namespace dynlab {

// Certificate for one boundary point of a nice set.
struct BoundaryTag {
    enum class Kind { eventually_periodic, escaped, horizon };
    cplx point;
    Kind kind = Kind::horizon;
    int steps = 0;             // horizon checked, or escape time
    std::vector<cplx> orbit;   // eventually periodic: f(b), f^2(b), ... ending on the cycle
    int period = 0;
};

struct NiceComponent {
    int critical_index = 0;  // index into MapSpec::critical_points()
    cplx critical_point;
    Interval interval;       // real maps
    Disk disk;               // complex maps
    std::vector<BoundaryTag> tags;
};

struct NiceSet {
    bool real = true;
    bool symmetric = true;  // false for the disk approximation in the plane
    std::vector<NiceComponent> components;

    bool vacuous() const { return components.empty(); }

    bool contains(cplx z) const {
        for (const auto& c : components) {
            if (real ? c.interval.contains(z.real()) && z.imag() == 0.0 : std::abs(z - c.disk.center) < c.disk.radius)
                return true;
        }
        return false;
    }

    // index of the component containing z, or -1
    int component_of(cplx z) const {
        for (std::size_t i = 0; i < components.size(); ++i) {
            const auto& c = components[i];
            if (real ? c.interval.contains(z.real()) : std::abs(z - c.disk.center) < c.disk.radius) return int(i);
        }
        return -1;
    }

    // signed depth of z inside the set (positive inside, negative outside)
    double depth_inside(cplx z) const {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& c : components) {
            double d = real ? std::min(z.real() - c.interval.lo, c.interval.hi - z.real()) - std::abs(z.imag())
                            : c.disk.radius - std::abs(z - c.disk.center);
            best = std::max(best, d);
        }
        return best;
    }
};

template <class Space>
typename Space::Region region_of(const NiceComponent& c) {
    if constexpr (std::is_same_v<Space, RealSpace>) {
        return c.interval;
    } else {
        auto L = circle(c.disk.center, c.disk.radius, 64);
        L.rep = c.critical_point;
        return L;
    }
}

struct NicenessViolation {
    int n = 0;
    cplx boundary_point;
    cplx landing_point;
};

struct NicenessCertificate {
    bool pass = true;
    int horizon = 0;
    long exact = 0;    // boundary points certified for every n
    long limited = 0;  // certified only up to the horizon
    std::vector<NicenessViolation> violations;
};

struct CoupleCertificate {
    bool pass = true;
    int depth_checked = 0;
    long pullbacks_checked = 0;
    bool truncated = false;
    bool closure_inside = true;  // closure of V inside V-hat
    // first counterexample: a pull-back of V-hat meeting V but not inside it
    int counterexample_depth = -1;
    cplx counterexample_point;
};

struct NiceCouple {
    NiceSet outer;  // V-hat
    NiceSet inner;  // V
    double delta = 0;
    double r = 0;
    CoupleCertificate certificate;
    bool vacuous() const { return inner.vacuous(); }
};

// f^n(boundary) must stay out of the set. Eventually periodic tags are
// checked along the stored orbit and its cycle, which covers every n.
inline NicenessCertificate verify_niceness(const MapSpec& f, const NiceSet& set, int horizon) {
    if (horizon < 1) throw PreconditionError("horizon must be >= 1");
    NicenessCertificate cert;
    cert.horizon = horizon;
    const double tol = 1e-12 * f.scale();
    auto inside = [&](cplx z) { return set.depth_inside(z) > tol; };
    for (const auto& comp : set.components) {
        for (const auto& tag : comp.tags) {
            if (tag.kind == BoundaryTag::Kind::eventually_periodic && !tag.orbit.empty()) {
                bool ok = std::abs(f(tag.point) - tag.orbit.front()) <= 1e-10 * f.scale();
                for (std::size_t k = 0; ok && k + 1 < tag.orbit.size(); ++k)
                    ok = std::abs(f(tag.orbit[k]) - tag.orbit[k + 1]) <= 1e-10 * f.scale();
                cplx p = tag.orbit.back(), w = p;
                for (int k = 0; ok && k < tag.period; ++k) w = f(w);
                ok = ok && tag.period >= 1 && std::abs(w - p) <= 1e-10 * f.scale();
                if (ok) {
                    int n = 0;
                    for (const auto& z : tag.orbit) {
                        ++n;
                        if (inside(z)) {
                            cert.violations.push_back({n, tag.point, z});
                            ok = false;
                            break;
                        }
                    }
                    cplx z = p;
                    for (int k = 0; ok && k < tag.period; ++k) {
                        z = f(z);
                        if (inside(z)) {
                            cert.violations.push_back({n + k + 1, tag.point, z});
                            ok = false;
                        }
                    }
                    if (ok) {
                        ++cert.exact;
                        continue;
                    }
                    cert.pass = false;
                    continue;
                }
                // a broken tag falls back to plain iteration
            }
            cplx z = tag.point;
            bool escaped = false, bad = false;
            for (int n = 1; n <= horizon; ++n) {
                z = f.is_real() ? cplx(f(z.real()), 0.0) : f(z);
                if (!f.is_real() && std::abs(z) > f.escape_radius()) {
                    escaped = true;
                    break;
                }
                if (inside(z)) {
                    cert.violations.push_back({n, tag.point, z});
                    bad = true;
                    break;
                }
            }
            if (bad) {
                cert.pass = false;
            } else if (escaped) {
                ++cert.exact;
            } else {
                ++cert.limited;
            }
        }
    }
    return cert;
}

namespace detail {

struct TreeNode {
    cplx z;
    int parent;  // -1 for the cycle point
    int depth;
};

inline std::vector<cplx> poly_compose(const std::vector<cplx>& f, const std::vector<cplx>& g) {
    std::vector<cplx> acc{f.back()};
    for (std::size_t k = f.size() - 1; k-- > 0;) {
        std::vector<cplx> next(acc.size() + g.size() - 1, 0.0);
        for (std::size_t i = 0; i < acc.size(); ++i)
            for (std::size_t j = 0; j < g.size(); ++j) next[i + j] += acc[i] * g[j];
        next[0] += f[k];
        acc = std::move(next);
    }
    return acc;
}

// Repelling cycles of period 1 and 2, most useful first: interior of the
// domain, then by multiplier.
inline std::vector<PeriodicPoint> repelling_cycles(const MapSpec& f) {
    std::vector<PeriodicPoint> out;
    for (int p = 1; p <= 2; ++p) {
        auto c = f.coefficients();
        if (p == 2) c = poly_compose(c, c);
        c[1] -= 1.0;
        for (auto z : roots(c)) {
            z = newton_polish(c, z, 4);
            if (f.is_real()) {
                if (std::abs(z.imag()) > 1e-9) continue;
                z = cplx(z.real(), 0.0);
                double tol = 1e-9 * f.scale();
                if (z.real() <= f.domain_lo() + tol || z.real() >= f.domain_hi() - tol) continue;
            }
            cplx w = z, d = 1.0;
            for (int k = 0; k < p; ++k) {
                d *= f.deriv(w);
                w = f(w);
            }
            if (std::abs(w - z) > 1e-8 * std::max(1.0, std::abs(z))) continue;
            if (p == 2 && std::abs(f(z) - z) < 1e-8) continue;  // a fixed point
            if (std::abs(d) <= 1.0 + 1e-9) continue;
            bool dup = false;
            for (const auto& q : out) dup = dup || std::abs(q.point - z) < 1e-9;
            if (!dup) out.push_back({z, p, d});
        }
    }
    return out;
}

}  // namespace detail

namespace detail {

struct BoundaryChoice {
    cplx q;               // value f(boundary)
    std::vector<cplx> orbit;
    int period = 0;
    double eps = 0;       // |q - f(c)|
};

// Backward tree of a repelling cycle, never entering `hole`; returns points
// whose distance to f(c) (signed towards the side f maps c's neighbourhood
// to, in the real case) falls in [lo, hi].
template <class Hole, class Accept>
std::vector<BoundaryChoice> boundary_candidates(const MapSpec& f, cplx fc, int side, double lo, double hi,
                                                Hole&& hole, Accept&& accept, long budget, int max_depth) {
    std::vector<BoundaryChoice> out;
    for (const auto& cyc : repelling_cycles(f)) {
        std::vector<cplx> cycle{cyc.point};
        for (int k = 1; k < cyc.period; ++k) cycle.push_back(f(cycle.back()));
        bool clean = true;
        for (auto z : cycle) clean = clean && !hole(z);
        if (!clean) continue;
        std::vector<TreeNode> nodes;
        for (auto z : cycle) nodes.push_back({z, -1, 0});
        std::size_t head = 0;
        int first_hit = -1;
        while (head < nodes.size() && long(nodes.size()) < budget) {
            TreeNode cur = nodes[head++];
            if (cur.depth >= max_depth) continue;
            if (first_hit >= 0 && (cur.depth >= first_hit + 8 || out.size() >= 512)) break;
            for (auto z : preimages(f, cur.z)) {
                if (f.is_real()) z = cplx(z.real(), 0.0);
                bool on_cycle = false;
                for (auto w : cycle) on_cycle = on_cycle || std::abs(z - w) < 1e-12 * f.scale();
                if (on_cycle || hole(z)) continue;
                nodes.push_back({z, int(head - 1), cur.depth + 1});
                double e = f.is_real() ? side * (z.real() - fc.real()) : std::abs(z - fc);
                if (e >= lo && e <= hi) {
                    BoundaryChoice b;
                    b.q = z;
                    b.eps = e;
                    for (int k = int(nodes.size()) - 1; k >= 0; k = nodes[std::size_t(k)].parent)
                        b.orbit.push_back(nodes[std::size_t(k)].z);
                    b.period = cyc.period;
                    if (!accept(b)) continue;
                    out.push_back(std::move(b));
                    if (first_hit < 0) first_hit = cur.depth + 1;
                }
            }
        }
        if (!out.empty()) break;
    }
    return out;
}

}  // namespace detail

struct CoupleOptions {
    long search_budget = 2'000'000;
    int search_depth = 60;
    long couple_budget = 400'000;  // pull-backs examined by the couple check
    int boundary_samples = 64;     // complex disks
};

namespace detail {

template <class Space>
CoupleCertificate check_couple(const MapSpec& f, const NiceSet& outer, const NiceSet& inner, int depth, long budget) {
    CoupleCertificate cert;
    const double tol = 1e-9 * f.scale();
    for (std::size_t i = 0; i < inner.components.size(); ++i) {
        const auto& vi = inner.components[i];
        const auto& vo = outer.components[i];
        bool inside = inner.real ? (vi.interval.lo > vo.interval.lo && vi.interval.hi < vo.interval.hi)
                                 : std::abs(vi.disk.center - vo.disk.center) + vi.disk.radius < vo.disk.radius;
        cert.closure_inside = cert.closure_inside && inside;
    }
    if (!cert.closure_inside) cert.pass = false;
    std::vector<typename Space::Region> level;
    for (const auto& c : outer.components) level.push_back(region_of<Space>(c));
    for (int m = 1; m <= depth; ++m) {
        std::vector<typename Space::Region> next;
        for (const auto& W : level) {
            if (cert.pullbacks_checked >= budget) {
                cert.truncated = true;
                break;
            }
            for (auto& p : Space::pull(f, W)) {
                ++cert.pullbacks_checked;
                // does p meet V, and if so is it inside?
                bool meets = false, all_in = true;
                std::vector<typename Space::Point> pts;
                if constexpr (std::is_same_v<Space, RealSpace>) {
                    pts = {p.region.lo, p.region.hi, p.region.mid()};
                    for (const auto& c : inner.components)
                        meets = meets || (p.region.lo < c.interval.hi && p.region.hi > c.interval.lo);
                    for (auto x : {p.region.lo, p.region.hi}) all_in = all_in && inner.depth_inside(cplx(x, 0)) >= -tol;
                } else {
                    for (const auto& z : p.region.pts) {
                        bool in = inner.depth_inside(z) > tol;
                        meets = meets || in;
                        all_in = all_in && inner.depth_inside(z) >= -tol;
                    }
                    meets = meets || inner.contains(p.region.rep);
                    for (const auto& c : inner.components) meets = meets || point_in_polygon(p.region.pts, c.disk.center);
                }
                if (meets && !all_in && cert.pass) {
                    cert.pass = false;
                    cert.counterexample_depth = m;
                    cert.counterexample_point = Space::to_complex(Space::rep(p.region));
                }
                next.push_back(std::move(p.region));
            }
        }
        if (cert.truncated) break;
        cert.depth_checked = m;
        level = std::move(next);
    }
    return cert;
}

// Fill in the component for one critical point: V^c = tB(c, eps) in the
// real case, a disk in the plane.
template <class Space>
bool build_component(const MapSpec& f, int ci, double lo_eps, double hi_eps, const std::vector<cplx>& centres,
                     const CoupleOptions& opt, int horizon, const NiceSet* keep_out, NiceComponent& out,
                     std::string& why) {
    const auto& C = f.critical_points()[std::size_t(ci)];
    cplx c = C.location;
    cplx fc = f(c);
    out.critical_index = ci;
    out.critical_point = c;
    // Orbits of the boundary must avoid the outer set. For the inner set that
    // set is known; for the outer one prune with the smallest admissible
    // component and filter each candidate against its own.
    std::vector<typename Space::Region> holes, others;
    if (!keep_out) {
        for (auto h : centres) {
            holes.push_back(critical_ball<Space>(f, Space::from(h), lo_eps));
            if (h != c) others.push_back(critical_ball<Space>(f, Space::from(h), hi_eps));
        }
    }
    auto in_any = [](const std::vector<typename Space::Region>& rs, cplx z) {
        for (const auto& H : rs)
            if (Space::contains(H, Space::from(z))) return true;
        return false;
    };
    auto hole = [&](cplx z) { return keep_out ? keep_out->contains(z) : in_any(holes, z); };
    int side = 1;
    if (f.is_real()) {
        double h = 1e-4 * f.scale();
        double up = f(c.real() + h) - fc.real();
        double dn = f(c.real() - h) - fc.real();
        if ((up > 0) != (dn > 0)) {
            why = "critical point of odd order is not supported by the tB construction";
            return false;
        }
        side = up > 0 ? 1 : -1;
    }
    // a boundary on a critical orbit would put a critical value on the boundary of a pull-back
    std::vector<cplx> postcritical;
    for (const auto& cp : f.critical_points()) {
        cplx z = cp.location;
        for (int k = 1; k <= 64; ++k) {
            z = f(z);
            if (!std::isfinite(std::abs(z)) || std::abs(z) > f.escape_radius()) break;
            postcritical.push_back(z);
        }
    }
    auto accept = [&](const BoundaryChoice& b) {
        for (auto z : postcritical)
            if (std::abs(z - b.q) <= 1e-9 * f.scale()) return false;
        if (keep_out) return true;
        auto own = critical_ball<Space>(f, Space::from(c), b.eps);
        for (auto z : b.orbit)
            if (Space::contains(own, Space::from(z)) || in_any(others, z)) return false;
        return true;
    };
    auto cands =
        boundary_candidates(f, fc, side, lo_eps, hi_eps, hole, accept, opt.search_budget, opt.search_depth);
    if (cands.empty()) {
        why = "no point of a repelling backward orbit found in the boundary window";
        return false;
    }
    double centre = 0.5 * (lo_eps + hi_eps);
    std::stable_sort(cands.begin(), cands.end(), [&](const BoundaryChoice& a, const BoundaryChoice& b) {
        return std::abs(a.eps - centre) < std::abs(b.eps - centre);
    });
    if constexpr (std::is_same_v<Space, RealSpace>) {
        const auto& b = cands.front();
        auto I = critical_ball<RealSpace>(f, c.real(), b.eps);
        out.interval = I;
        for (double x : {I.lo, I.hi}) {
            BoundaryTag t;
            t.point = cplx(x, 0);
            t.kind = BoundaryTag::Kind::eventually_periodic;
            t.orbit = b.orbit;
            t.period = b.period;
            out.tags.push_back(t);
        }
        return true;
    } else {
        // disk radii allowed by tB(c, lo) subset B subset tB(c, hi)
        auto inner_loop = critical_ball<ComplexSpace>(f, c, lo_eps);
        auto outer_loop = critical_ball<ComplexSpace>(f, c, hi_eps);
        double rmin = 0, rmax = std::numeric_limits<double>::infinity();
        for (auto z : inner_loop.pts) rmin = std::max(rmin, std::abs(z - c));
        for (auto z : outer_loop.pts) rmax = std::min(rmax, std::abs(z - c));
        if (!(rmin < rmax)) {
            why = "tB(c, delta) and tB(c, 2 delta) leave no room for a round disk";
            return false;
        }
        for (const auto& b : cands) {
            for (auto z : preimages(f, b.q)) {
                double rho = std::abs(z - c);
                if (!(rho > rmin && rho < rmax)) continue;
                NiceComponent trial = out;
                trial.disk = {c, rho};
                trial.tags.clear();
                double a0 = std::arg(z - c);
                for (int k = 0; k < opt.boundary_samples; ++k) {
                    double a = a0 + 2.0 * std::numbers::pi * k / opt.boundary_samples;
                    BoundaryTag t;
                    t.point = c + rho * cplx(std::cos(a), std::sin(a));
                    if (k == 0) t.point = z;
                    if (std::abs(f(t.point) - b.q) <= 1e-12 * f.scale()) {
                        t.kind = BoundaryTag::Kind::eventually_periodic;
                        t.orbit = b.orbit;
                        t.period = b.period;
                    } else {
                        t.kind = BoundaryTag::Kind::horizon;
                        t.steps = horizon;
                    }
                    trial.tags.push_back(t);
                }
                NiceSet probe;
                probe.real = false;
                probe.symmetric = false;
                probe.components = {trial};
                if (keep_out) probe.components.insert(probe.components.end(), keep_out->components.begin(),
                                                      keep_out->components.end());
                auto cert = verify_niceness(f, probe, horizon);
                if (!cert.pass) continue;
                // record escape certificates
                NiceSet self;
                self.real = false;
                self.components = {trial};
                for (auto& t : trial.tags) {
                    if (t.kind != BoundaryTag::Kind::horizon) continue;
                    cplx w = t.point;
                    for (int n = 1; n <= horizon; ++n) {
                        w = f(w);
                        if (std::abs(w) > f.escape_radius()) {
                            t.kind = BoundaryTag::Kind::escaped;
                            t.steps = n;
                            break;
                        }
                    }
                }
                out = trial;
                return true;
            }
        }
        why = "no candidate disk passed the boundary-orbit check at the horizon";
        return false;
    }
}

}  // namespace detail

// Nice couple (V-hat, V) around the Julia critical points with
// tB(c, delta) < V^c < tB(c, 2 delta) and tB(c, r delta / 2) < V-hat^c < tB(c, r delta).
inline NiceCouple construct_nice_couple(const MapSpec& f, double delta, double r, int horizon,
                                        const CoupleOptions& opt = {}) {
    NiceCouple cp;
    cp.delta = delta;
    cp.r = r;
    cp.inner.real = cp.outer.real = f.is_real();
    cp.inner.symmetric = cp.outer.symmetric = f.is_real();
    std::vector<cplx> centres;
    std::vector<int> idx;
    for (std::size_t i = 0; i < f.critical_points().size(); ++i) {
        if (!f.critical_points()[i].in_julia) continue;
        centres.push_back(f.critical_points()[i].location);
        idx.push_back(int(i));
    }
    if (centres.empty()) return cp;
    if (!(r > 2.0)) throw PreconditionError("r must exceed 2 so that V sits inside V-hat");
    auto run = [&](auto space) {
        using S = decltype(space);
        // tB(c, r delta) must be pairwise disjoint
        std::vector<typename S::Region> big;
        for (auto c : centres) big.push_back(critical_ball<S>(f, S::from(c), r * delta));
        for (std::size_t i = 0; i < big.size(); ++i)
            for (std::size_t j = 0; j < big.size(); ++j)
                if (i != j && S::contains(big[i], S::from(centres[j])))
                    throw ConstructionFailure("tB(c, r delta) overlap for distinct critical points; decrease delta");
        // critical points outside J must stay clear of tB(c, r delta)
        for (const auto& C : f.critical_points()) {
            if (C.in_julia) continue;
            cplx z = C.location;
            for (int n = 1; n <= horizon; ++n) {
                z = f(z);
                if (!f.is_real() && std::abs(z) > f.escape_radius()) break;
                for (const auto& B : big)
                    if (S::contains(B, S::from(z)))
                        throw ConstructionFailure("orbit of a critical point outside J enters tB(c, r delta) at n = " +
                                                  std::to_string(n));
            }
        }
        for (std::size_t k = 0; k < centres.size(); ++k) {
            NiceComponent hat;
            std::string why;
            if (!detail::build_component<S>(f, idx[k], r * delta / 2, r * delta, centres, opt, horizon, nullptr,
                                             hat, why))
                throw ConstructionFailure("outer component around critical point " + std::to_string(idx[k]) + ": " + why);
            cp.outer.components.push_back(hat);
        }
        for (std::size_t k = 0; k < centres.size(); ++k) {
            NiceComponent in;
            std::string why;
            if (!detail::build_component<S>(f, idx[k], delta, 2 * delta, centres, opt, horizon, &cp.outer, in,
                                             why))
                throw ConstructionFailure("inner component around critical point " + std::to_string(idx[k]) + ": " + why);
            cp.inner.components.push_back(in);
        }
        cp.certificate = detail::check_couple<S>(f, cp.outer, cp.inner, horizon, opt.couple_budget);
        return 0;
    };
    if (f.is_real())
        run(RealSpace{});
    else
        run(ComplexSpace{});
    return cp;
}

template <class Space>
struct LandingComponent {
    typename Space::Region region;
    int landing_time = 0;
    int target_component = 0;  // which component of V it lands on
    bool extension_diffeomorphic = true;
    typename Space::Region extension{};  // pull-back of V-hat along the same chain, when requested
    std::vector<int> chain;
};

template <class Space>
struct ReturnDomain {
    typename Space::Region region;
    int return_time = 0;
    int home_component = 0;    // component of V containing it
    int target_component = 0;  // component of V it returns onto
};

template <class Space>
struct LandingTable {
    std::vector<LandingComponent<Space>> components;
    std::vector<ReturnDomain<Space>> returns;
    bool truncated = false;
    double unexplored_mass = 0;  // total diameter of frontier regions not expanded
    long nodes = 0;

    // sum of diam(U)^alpha over components with l(U) >= m, for m = 0 .. max
    std::vector<double> tail(double alpha) const {
        int mx = 0;
        for (const auto& c : components) mx = std::max(mx, c.landing_time);
        std::vector<double> t(std::size_t(mx) + 2, 0.0);
        for (const auto& c : components) t[std::size_t(c.landing_time)] += std::pow(Space::diam(c.region), alpha);
        for (int m = mx - 1; m >= 0; --m) t[std::size_t(m)] += t[std::size_t(m) + 1];
        return t;
    }
};

// First-landing structure of V up to landing time max_landing. Children of a
// landing component are the components of its preimage outside V; the ones
// inside V are return domains.
template <class Space>
LandingTable<Space> landing_components(const MapSpec& f, const NiceSet& set, int max_landing,
                                       const NiceSet* outer = nullptr, long budget = 10'000'000) {
    LandingTable<Space> tab;
    std::vector<LandingComponent<Space>> level;
    for (std::size_t i = 0; i < set.components.size(); ++i) {
        LandingComponent<Space> u;
        u.region = region_of<Space>(set.components[i]);
        u.target_component = int(i);
        if (outer) u.extension = region_of<Space>(outer->components[i]);
        level.push_back(u);
        tab.components.push_back(u);
        ++tab.nodes;
    }
    for (int l = 0; l < max_landing || l == 0; ++l) {
        std::vector<LandingComponent<Space>> next;
        for (std::size_t i = 0; i < level.size(); ++i) {
            const auto& u = level[i];
            if (tab.nodes >= budget) {
                tab.truncated = true;
                for (std::size_t j = i; j < level.size(); ++j) tab.unexplored_mass += Space::diam(level[j].region);
                break;
            }
            for (auto& p : Space::pull(f, u.region)) {
                ++tab.nodes;
                auto rp = Space::rep(p.region);
                int home = set.component_of(Space::to_complex(rp));
                if (home >= 0) {
                    tab.returns.push_back({p.region, l + 1, home, u.target_component});
                    continue;
                }
                if (l + 1 > max_landing) continue;
                LandingComponent<Space> c;
                c.landing_time = l + 1;
                c.target_component = u.target_component;
                c.extension_diffeomorphic = u.extension_diffeomorphic && p.crits.empty();
                c.chain = u.chain;
                c.chain.push_back(p.index);
                if (outer) {
                    auto e = Space::pull_containing(f, u.extension, rp);
                    c.extension_diffeomorphic = c.extension_diffeomorphic && e.crits.empty();
                    c.extension = e.region;
                }
                c.region = std::move(p.region);
                next.push_back(c);
            }
        }
        if (tab.truncated) break;
        if (l + 1 > max_landing) break;
        for (const auto& c : next) tab.components.push_back(c);
        level = std::move(next);
        if (level.empty()) break;
    }
    return tab;
}

// Modulus lower bound of (V^c; W) for a region W inside V^c.
inline double return_domain_modulus(const Interval& V, const Interval& W) {
    if (!(W.lo > V.lo && W.hi < V.hi)) return 0.0;
    return interval_modulus(V, W).value;
}

inline double return_domain_modulus(const Disk& V, const Loop& W) {
    double rad = 0;
    for (const auto& z : W.pts) rad = std::max(rad, std::abs(z - W.rep));
    Disk inner{W.rep, rad};
    if (std::abs(inner.center - V.center) + rad >= V.radius) return 0.0;
    return disk_modulus(V, inner).value;
}

struct LambdaNiceReport {
    std::vector<int> return_times;
    std::vector<double> moduli;
    double minimum = std::numeric_limits<double>::infinity();
    long rejected = 0;  // domains touching the boundary of V
    bool truncated = false;
};

template <class Space>
LambdaNiceReport lambda_nice_report(const MapSpec& f, const NiceCouple& couple, int cap = 20,
                                    long budget = 10'000'000) {
    LambdaNiceReport rep;
    auto tab = landing_components<Space>(f, couple.inner, cap - 1, nullptr, budget);
    rep.truncated = tab.truncated;
    for (const auto& w : tab.returns) {
        const auto& V = couple.inner.components[std::size_t(w.home_component)];
        double m;
        if constexpr (std::is_same_v<Space, RealSpace>)
            m = return_domain_modulus(V.interval, w.region);
        else
            m = return_domain_modulus(V.disk, w.region);
        if (m <= 0.0) ++rep.rejected;
        rep.return_times.push_back(w.return_time);
        rep.moduli.push_back(m);
        rep.minimum = std::min(rep.minimum, m);
    }
    return rep;
}

// Membership in K(V): the orbit of z avoids V, checked up to the horizon.
inline bool in_K(const MapSpec& f, const NiceSet& V, cplx z, int horizon) {
    for (int n = 0; n <= horizon; ++n) {
        if (V.contains(z)) return false;
        z = f(z);
        if (!f.is_real() && std::abs(z) > f.escape_radius()) return true;
    }
    return true;
}

// ---- text format ----

inline void write_nice_set(std::ostream& os, const NiceSet& s) {
    using detail::fmt;
    os << "nice-set 1\n";
    os << "kind " << (s.real ? "real" : "complex") << "\n";
    os << "symmetric " << (s.symmetric ? 1 : 0) << "\n";
    os << "components " << s.components.size() << "\n";
    for (const auto& c : s.components) {
        os << "component " << c.critical_index << ' ' << fmt(c.critical_point.real()) << ' '
           << fmt(c.critical_point.imag()) << "\n";
        if (s.real)
            os << "interval " << fmt(c.interval.lo) << ' ' << fmt(c.interval.hi) << "\n";
        else
            os << "disk " << fmt(c.disk.center.real()) << ' ' << fmt(c.disk.center.imag()) << ' '
               << fmt(c.disk.radius) << "\n";
        os << "tags " << c.tags.size() << "\n";
        for (const auto& t : c.tags) {
            os << "tag " << fmt(t.point.real()) << ' ' << fmt(t.point.imag()) << ' ';
            switch (t.kind) {
                case BoundaryTag::Kind::eventually_periodic:
                    os << "periodic " << t.period << ' ' << t.orbit.size();
                    for (const auto& z : t.orbit) os << ' ' << fmt(z.real()) << ' ' << fmt(z.imag());
                    break;
                case BoundaryTag::Kind::escaped:
                    os << "escaped " << t.steps;
                    break;
                case BoundaryTag::Kind::horizon:
                    os << "horizon " << t.steps;
                    break;
            }
            os << "\n";
        }
    }
    os << "end\n";
}

inline NiceSet read_nice_set(std::istream& is) {
    auto expect = [&](const std::string& word) {
        std::string w;
        if (!(is >> w) || w != word) throw ConfigError("nice-set text: expected '" + word + "', got '" + w + "'");
    };
    NiceSet s;
    int version = 0;
    expect("nice-set");
    is >> version;
    std::string kind;
    expect("kind");
    is >> kind;
    s.real = kind == "real";
    int sym = 0;
    expect("symmetric");
    is >> sym;
    s.symmetric = sym != 0;
    std::size_t n = 0;
    expect("components");
    is >> n;
    for (std::size_t i = 0; i < n; ++i) {
        NiceComponent c;
        double re, im;
        expect("component");
        is >> c.critical_index >> re >> im;
        c.critical_point = {re, im};
        if (s.real) {
            expect("interval");
            is >> c.interval.lo >> c.interval.hi;
        } else {
            double r;
            expect("disk");
            is >> re >> im >> r;
            c.disk = {{re, im}, r};
        }
        std::size_t nt = 0;
        expect("tags");
        is >> nt;
        for (std::size_t k = 0; k < nt; ++k) {
            BoundaryTag t;
            std::string what;
            expect("tag");
            is >> re >> im >> what;
            t.point = {re, im};
            if (what == "periodic") {
                std::size_t len = 0;
                is >> t.period >> len;
                t.kind = BoundaryTag::Kind::eventually_periodic;
                for (std::size_t j = 0; j < len; ++j) {
                    is >> re >> im;
                    t.orbit.emplace_back(re, im);
                }
            } else if (what == "escaped") {
                t.kind = BoundaryTag::Kind::escaped;
                is >> t.steps;
            } else if (what == "horizon") {
                t.kind = BoundaryTag::Kind::horizon;
                is >> t.steps;
            } else {
                throw ConfigError("nice-set text: unknown tag kind '" + what + "'");
            }
            c.tags.push_back(std::move(t));
        }
        s.components.push_back(std::move(c));
    }
    expect("end");
    if (!is) throw ConfigError("nice-set text: truncated input");
    return s;
}

inline void write_nice_couple(std::ostream& os, const NiceCouple& c) {
    os << "nice-couple 1\n";
    os << "delta " << detail::fmt(c.delta) << "\nr " << detail::fmt(c.r) << "\n";
    os << "outer\n";
    write_nice_set(os, c.outer);
    os << "inner\n";
    write_nice_set(os, c.inner);
}

inline NiceCouple read_nice_couple(std::istream& is) {
    NiceCouple c;
    std::string w;
    int version;
    is >> w >> version;
    if (w != "nice-couple") throw ConfigError("nice-couple text: bad header");
    is >> w >> c.delta >> w >> c.r;
    is >> w;
    c.outer = read_nice_set(is);
    is >> w;
    c.inner = read_nice_set(is);
    return c;
}

}  // namespace dynlab
