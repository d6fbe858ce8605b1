#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "detail/fit.hpp"
#include "detail/parallel.hpp"
#include "error.hpp"
#include "maps.hpp"
#include "nice.hpp"
#include "pullback.hpp"
#include "region.hpp"

namespace dynlab {

// Diameters entering the weighted sums are measured in this unit, so that
// every region has normalized diameter at most 1.
inline double diameter_unit(const MapSpec& f) { return f.is_real() ? f.scale() : 2.0 * f.escape_radius(); }

struct WalkStats {
    long nodes = 0;
    bool truncated = false;
    long unexplored = 0;          // frontier nodes left unexpanded
    double unexplored_mass = 0;   // their total diameter
};

namespace detail {

template <class Space, class State>
struct Frame {
    typename Space::Region region;
    State state;
    int depth = 0;
    std::vector<int> chain;
};

// Depth-first walk over the tree of pull-backs below `roots`. visit(parent,
// piece, child, out) fills the child frame, may append records to `out`, and
// returns false to prune. The first levels are expanded breadth-first until
// the frontier is wide enough, then each frontier subtree is walked on its
// own with an equal share of the budget; records are concatenated in frontier
// order, so the output does not depend on the worker count.
template <class Space, class State, class Record, class Visit>
WalkStats walk_pullbacks(const MapSpec& f, std::vector<Frame<Space, State>> roots, int max_depth, long budget,
                         int workers, std::vector<Record>& out, Visit&& visit) {
    using F = Frame<Space, State>;
    WalkStats st;
    std::vector<F> frontier = std::move(roots);
    st.nodes = long(frontier.size());
    auto expand = [&](const F& fr, std::vector<F>& kids, std::vector<Record>& sink, long& nodes) {
        if (fr.depth >= max_depth) return;
        auto pieces = Space::pull(f, fr.region);
        for (auto& p : pieces) {
            ++nodes;
            F child;
            child.depth = fr.depth + 1;
            child.chain = fr.chain;
            child.chain.push_back(p.index);
            if (visit(fr, p, child, sink)) kids.push_back(std::move(child));
        }
    };
    const std::size_t wide = 64;
    while (!frontier.empty() && frontier.size() < wide) {
        bool any = false;
        for (const auto& fr : frontier) any = any || fr.depth < max_depth;
        if (!any) return st;
        if (st.nodes >= budget) break;
        std::vector<F> next;
        for (const auto& fr : frontier) expand(fr, next, out, st.nodes);
        frontier = std::move(next);
    }
    if (frontier.empty()) return st;
    long share = std::max<long>(1, (budget - st.nodes) / long(frontier.size()));
    std::vector<std::vector<Record>> parts(frontier.size());
    std::vector<WalkStats> sub(frontier.size());
    parallel_for(frontier.size(), workers, [&](std::size_t i) {
        std::vector<F> stack{frontier[i]};
        long nodes = 0;
        while (!stack.empty()) {
            F fr = std::move(stack.back());
            stack.pop_back();
            if (nodes >= share && fr.depth < max_depth) {
                sub[i].truncated = true;
                ++sub[i].unexplored;
                sub[i].unexplored_mass += Space::diam(fr.region);
                continue;
            }
            std::vector<F> kids;
            expand(fr, kids, parts[i], nodes);
            for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(std::move(*it));
        }
        sub[i].nodes = nodes;
    });
    for (std::size_t i = 0; i < frontier.size(); ++i) {
        for (auto& r : parts[i]) out.push_back(std::move(r));
        st.nodes += sub[i].nodes;
        st.truncated = st.truncated || sub[i].truncated;
        st.unexplored += sub[i].unexplored;
        st.unexplored_mass += sub[i].unexplored_mass;
    }
    return st;
}

template <class Space>
bool same_region(const typename Space::Region& a, const typename Space::Region& b) {
    if constexpr (std::is_same_v<Space, RealSpace>)
        return a.lo == b.lo && a.hi == b.hi;
    else
        return a.pts.size() == b.pts.size() && a.pts.front() == b.pts.front() && a.rep == b.rep;
}

}  // namespace detail

template <class Space>
struct BadPullback {
    typename Space::Region region;
    int depth = 0;
    double degree = 1;
    bool diffeomorphic = true;  // f^depth maps it diffeomorphically onto a component
    int root = 0;               // component of V it is a pull-back of
    std::vector<int> chain;
    double diameter() const { return Space::diam(region); }
};

template <class Space>
struct BadEnumeration {
    std::vector<BadPullback<Space>> items;
    WalkStats stats;
    int max_depth = 0;
    double unit = 1;  // diameter unit

    std::size_t count_at(int depth) const {
        std::size_t n = 0;
        for (const auto& b : items) n += b.depth == depth;
        return n;
    }
};

namespace detail {

template <class Space>
struct BadState {
    typename Space::Region shadow;  // pull-back of V0 containing the node
    bool shadow_same = true;        // shadow coincides with the node
    bool has_guard = true;
    bool guard_same = true;         // guard coincides with the shadow
    typename Space::Region guard;
    double degree = 1;
    bool diffeo = true;
    int root = 0;
};

}  // namespace detail

// Pull-backs of V (given by its components, each inside the component
// home[i] of the nice set V0) that are bad relative to V0, up to max_depth.
// A node is bad exactly when no diffeomorphic pull-back of V0 that started at
// an earlier visit to V0 still covers it; such a pull-back is carried along
// as a guard. One guard suffices: a guard started while another is alive
// contains it and so dies no later.
template <class Space>
BadEnumeration<Space> relative_bad_pullbacks(const MapSpec& f, const std::vector<typename Space::Region>& V,
                                             const std::vector<int>& home, const NiceSet& V0, bool V_is_V0,
                                             int max_depth, long budget = 10'000'000, int workers = 1) {
    using State = detail::BadState<Space>;
    BadEnumeration<Space> out;
    out.max_depth = max_depth;
    out.unit = diameter_unit(f);
    std::vector<detail::Frame<Space, State>> roots;
    for (std::size_t i = 0; i < V.size(); ++i) {
        detail::Frame<Space, State> fr;
        fr.region = V[i];
        fr.chain = {int(i)};
        fr.state.shadow_same = V_is_V0;
        fr.state.shadow = V_is_V0 ? V[i] : region_of<Space>(V0.components[std::size_t(home[i])]);
        fr.state.root = int(i);
        roots.push_back(fr);
        BadPullback<Space> b;
        b.region = V[i];
        b.root = int(i);
        b.chain = fr.chain;
        out.items.push_back(b);
    }
    out.stats = detail::walk_pullbacks<Space, State>(
        f, roots, max_depth, budget, workers, out.items,
        [&](const detail::Frame<Space, State>& parent, auto& piece, detail::Frame<Space, State>& child,
            std::vector<BadPullback<Space>>& sink) {
            const auto& ps = parent.state;
            auto& cs = child.state;
            auto rp = Space::rep(piece.region);
            cs = ps;
            bool shadow_crit;
            if (ps.shadow_same) {
                shadow_crit = !piece.crits.empty();
                cs.shadow = piece.region;
            } else {
                auto sp = Space::pull_containing(f, ps.shadow, rp);
                shadow_crit = !sp.crits.empty();
                cs.shadow = std::move(sp.region);
            }
            bool alive = false;
            if (ps.has_guard) {
                if (ps.guard_same) {
                    alive = !shadow_crit;
                } else {
                    auto gp = Space::pull_containing(f, ps.guard, rp);
                    alive = gp.crits.empty();
                    cs.guard = std::move(gp.region);
                }
            }
            cs.has_guard = alive;
            cs.guard_same = alive && ps.guard_same;
            if (f.is_real())
                cs.degree = ps.degree * (piece.crits.empty() ? 1.0 : 2.0);
            else
                cs.degree = ps.degree * double(piece.degree());
            cs.diffeo = ps.diffeo && piece.crits.empty();
            child.region = std::move(piece.region);
            if (!alive) {
                BadPullback<Space> b;
                b.region = child.region;
                b.depth = child.depth;
                b.degree = cs.degree;
                b.diffeomorphic = cs.diffeo;
                b.root = cs.root;
                b.chain = child.chain;
                sink.push_back(std::move(b));
                int k = V0.component_of(Space::to_complex(Space::rep(cs.shadow)));
                if (k >= 0) {
                    cs.has_guard = true;
                    cs.guard_same = false;
                    cs.guard = region_of<Space>(V0.components[std::size_t(k)]);
                }
            }
            return true;
        });
    return out;
}

// Bad pull-backs of a nice set, depth 0 included.
template <class Space>
BadEnumeration<Space> enumerate_bad_pullbacks(const MapSpec& f, const NiceSet& X, int max_depth,
                                              long budget = 10'000'000, int workers = 1) {
    std::vector<typename Space::Region> R;
    std::vector<int> home;
    for (std::size_t i = 0; i < X.components.size(); ++i) {
        R.push_back(region_of<Space>(X.components[i]));
        home.push_back(int(i));
    }
    return relative_bad_pullbacks<Space>(f, R, home, X, true, max_depth, budget, workers);
}

// Bad pull-backs of the outer set of the couple.
template <class Space>
BadEnumeration<Space> enumerate_bad_pullbacks(const MapSpec& f, const NiceCouple& couple, int max_depth,
                                              long budget = 10'000'000, int workers = 1) {
    return enumerate_bad_pullbacks<Space>(f, couple.outer, max_depth, budget, workers);
}

struct XiLedger {
    int scale_index = 0;
    double t = 0;
    std::vector<double> partial_sums;  // Xi_t(V, m) for m = 0 .. max_depth + 1
    std::vector<double> increments;    // Xi_t(V, m + 1) - Xi_t(V, m)
    double tail_slope = std::numeric_limits<double>::quiet_NaN();  // fitted log-decrement per depth
    bool converged = false;
    bool truncated = false;
    double unexplored_mass = 0;
};

template <class Space>
XiLedger xi_from(const BadEnumeration<Space>& e, double t) {
    if (!(t > 0)) throw PreconditionError("t must be positive");
    XiLedger L;
    L.t = t;
    L.truncated = e.stats.truncated;
    L.unexplored_mass = e.stats.unexplored_mass;
    std::vector<double> level(std::size_t(e.max_depth) + 1, 0.0);
    // fixed summation order: by depth, then by chain
    std::vector<const BadPullback<Space>*> order;
    for (const auto& b : e.items) order.push_back(&b);
    std::stable_sort(order.begin(), order.end(), [](auto a, auto b) {
        return a->depth != b->depth ? a->depth < b->depth : a->chain < b->chain;
    });
    for (auto b : order) level[std::size_t(b->depth)] += b->degree * std::pow(Space::diam(b->region) / e.unit, t);
    L.partial_sums.push_back(0.0);
    for (double v : level) L.partial_sums.push_back(L.partial_sums.back() + v);
    L.increments = level;
    // tail: log increments over the second half of the depths
    std::vector<double> xs, ys;
    bool zero_tail = true;
    for (int j = std::max(1, e.max_depth / 2); j <= e.max_depth; ++j) {
        double v = level[std::size_t(j)];
        if (v > 0) {
            zero_tail = false;
            xs.push_back(j);
            ys.push_back(std::log(v));
        }
    }
    if (zero_tail) {
        L.tail_slope = -std::numeric_limits<double>::infinity();
        L.converged = true;
    } else {
        auto fit = detail::least_squares(xs, ys);
        L.tail_slope = fit.slope;
        double total = L.partial_sums.back();
        double last3 = 0;
        for (int j = std::max(0, e.max_depth - 2); j <= e.max_depth; ++j) last3 += level[std::size_t(j)];
        L.converged = total > 0 && last3 / total < 1e-3;
        if (xs.size() >= 3 && fit.slope < -0.05) L.converged = true;
    }
    return L;
}

// Xi_t over a nested family V_0 > V_1 > ..., badness taken relative to V_0.
template <class Space>
std::vector<XiLedger> xi_partial_sums(const MapSpec& f, const std::vector<NiceSet>& family, double t, int max_depth,
                                      long budget = 10'000'000, int workers = 1) {
    if (family.empty()) throw PreconditionError("empty nice-set family");
    std::vector<XiLedger> out;
    for (std::size_t n = 0; n < family.size(); ++n) {
        std::vector<typename Space::Region> R;
        std::vector<int> home;
        for (const auto& c : family[n].components) {
            R.push_back(region_of<Space>(c));
            int k = family[0].component_of(c.critical_point);
            if (k < 0) throw PreconditionError("nice-set family is not nested");
            home.push_back(k);
        }
        auto e = relative_bad_pullbacks<Space>(f, R, home, family[0], n == 0, max_depth, budget, workers);
        auto L = xi_from(e, t);
        L.scale_index = int(n);
        out.push_back(std::move(L));
    }
    return out;
}

struct BadnessEstimate {
    bool determined = false;
    double upper_bound = std::numeric_limits<double>::quiet_NaN();  // smallest grid t that converges
    std::vector<double> t_grid;
    std::vector<double> slopes;
    std::vector<bool> converged;
    std::string note;
};

inline BadnessEstimate badness_exponent_estimate(const std::vector<XiLedger>& ledgers) {
    if (ledgers.size() < 3) throw PreconditionError("at least three values of t are needed");
    BadnessEstimate est;
    std::vector<const XiLedger*> order;
    for (const auto& L : ledgers) order.push_back(&L);
    std::sort(order.begin(), order.end(), [](auto a, auto b) { return a->t < b->t; });
    bool empty = true;
    for (auto L : order) {
        est.t_grid.push_back(L->t);
        est.slopes.push_back(L->tail_slope);
        est.converged.push_back(L->converged);
        for (std::size_t j = 1; j < L->increments.size(); ++j) empty = empty && L->increments[j] == 0.0;
    }
    if (empty) {
        est.determined = true;
        est.upper_bound = 0.0;
        est.note = "no bad pull-backs beyond depth 0";
        return est;
    }
    // smallest t from which every larger grid value also converges
    for (std::size_t i = 0; i < order.size(); ++i) {
        bool all = true;
        for (std::size_t j = i; j < order.size(); ++j) all = all && est.converged[j];
        if (all) {
            est.determined = true;
            est.upper_bound = est.t_grid[i];
            est.note = "upper-bound estimate from tail convergence on the t grid";
            return est;
        }
    }
    est.note = "undetermined: no grid value shows a converging tail";
    return est;
}

template <class Space>
struct InducedBranch {
    typename Space::Region region;
    int inducing_time = 0;
    int target_component = 0;
    typename Space::Region extension;  // diffeomorphic pull-back of V-hat
    std::vector<int> chain;
    int home_component = 0;            // component of V containing the branch
};

template <class Space>
struct InducedMap {
    std::vector<InducedBranch<Space>> branches;
    WalkStats stats;
    int max_time = 0;
    double unit = 1;  // diameter unit

    // branch containing x, or nullptr
    const InducedBranch<Space>* find(typename Space::Point x) const {
        for (const auto& b : branches)
            if (Space::contains(b.region, x)) return &b;
        return nullptr;
    }
};

namespace detail {

inline long double iterate_ld(const std::vector<double>& c, long double x, int m) {
    for (int k = 0; k < m; ++k) {
        long double y = 0;
        for (std::size_t j = c.size(); j-- > 0;) y = y * x + (long double)c[j];
        x = y;
    }
    return x;
}

// Level-by-level pull-backs round every intermediate endpoint to a double,
// which f^m then amplifies. Re-solve f^m(x) = boundary of the target on the
// diffeomorphic extension, where f^m is monotone.
inline void polish_branch(const MapSpec& f, Interval& W, const Interval& ext, const Interval& T, int m) {
    const auto& c = f.real_coefficients();
    auto solve = [&](double a, double b) {
        long double fa = iterate_ld(c, a, m), fb = iterate_ld(c, b, m);
        long double e = (fa < T.lo) != (fb < T.lo) ? (long double)T.lo : (long double)T.hi;
        if ((fa - e) * (fb - e) > 0) return std::numeric_limits<double>::quiet_NaN();
        return bisect([&](double x) { return double(iterate_ld(c, x, m) - e); }, a, b);
    };
    double mid = W.mid();
    double lo = solve(std::max(ext.lo, f.domain_lo()), mid);
    double hi = solve(mid, std::min(ext.hi, f.domain_hi()));
    if (std::isfinite(lo) && !W.closed_lo) W.lo = lo;
    if (std::isfinite(hi) && !W.closed_hi) W.hi = hi;
}

template <class Space>
struct InduceState {
    typename Space::Region ext;  // pull-back of V-hat along the chain
    bool has_guard = false;      // an earlier good time is still possible
    typename Space::Region guard;
    int root = 0;
};

}  // namespace detail

// Canonical induced map of (V-hat, V): m(x) is the least m >= 1 with f^m(x) in
// V and a diffeomorphic pull-back of V-hat by f^m around x.
template <class Space>
InducedMap<Space> build_induced_map(const MapSpec& f, const NiceCouple& couple, int max_time,
                                    long budget = 10'000'000, int workers = 1) {
    using State = detail::InduceState<Space>;
    InducedMap<Space> out;
    out.max_time = max_time;
    out.unit = diameter_unit(f);
    const auto& V = couple.inner;
    const auto& Vh = couple.outer;
    std::vector<detail::Frame<Space, State>> roots;
    for (std::size_t i = 0; i < V.components.size(); ++i) {
        detail::Frame<Space, State> fr;
        fr.region = region_of<Space>(V.components[i]);
        fr.chain = {int(i)};
        fr.state.ext = region_of<Space>(Vh.components[i]);
        fr.state.root = int(i);
        roots.push_back(fr);
    }
    out.stats = detail::walk_pullbacks<Space, State>(
        f, roots, max_time, budget, workers, out.branches,
        [&](const detail::Frame<Space, State>& parent, auto& piece, detail::Frame<Space, State>& child,
            std::vector<InducedBranch<Space>>& sink) {
            const auto& ps = parent.state;
            auto& cs = child.state;
            auto rp = Space::rep(piece.region);
            auto e = Space::pull_containing(f, ps.ext, rp);
            if (!e.crits.empty()) return false;  // no good time anywhere below
            cs.ext = std::move(e.region);
            cs.root = ps.root;
            cs.has_guard = false;
            if (ps.has_guard) {
                auto g = Space::pull_containing(f, ps.guard, rp);
                if (g.crits.empty()) {
                    cs.has_guard = true;
                    cs.guard = std::move(g.region);
                }
            }
            child.region = std::move(piece.region);
            int home = V.component_of(Space::to_complex(rp));
            if (home >= 0 && !cs.has_guard) {
                InducedBranch<Space> b;
                b.region = child.region;
                b.inducing_time = child.depth;
                b.target_component = cs.root;
                b.extension = cs.ext;
                b.chain = child.chain;
                b.home_component = home;
                if constexpr (std::is_same_v<Space, RealSpace>)
                    detail::polish_branch(f, b.region, b.extension, V.components[std::size_t(cs.root)].interval,
                                          child.depth);
                sink.push_back(std::move(b));
                cs.has_guard = true;
                cs.guard = region_of<Space>(Vh.components[std::size_t(home)]);
            }
            return true;
        });
    return out;
}

// Endpoints of each real branch land on the boundary of its target, either
// within tol or to the last representable digit.
struct MarkovCheck {
    bool pass = true;
    long checked = 0;
    long failures = 0;
    double worst = 0;
};

inline MarkovCheck markov_check(const MapSpec& f, const NiceSet& V, const InducedMap<RealSpace>& F, double tol_rel = 1e-10) {
    MarkovCheck mc;
    const double tol = tol_rel * f.scale();
    auto img = [&](long double x, int m) {
        const auto& c = f.real_coefficients();
        for (int k = 0; k < m; ++k) {
            long double y = 0;
            for (std::size_t j = c.size(); j-- > 0;) y = y * x + (long double)c[j];
            x = y;
        }
        return x;
    };
    for (const auto& b : F.branches) {
        const auto& T = V.components[std::size_t(b.target_component)].interval;
        for (double x : {b.region.lo, b.region.hi}) {
            ++mc.checked;
            long double y = img(x, b.inducing_time);
            long double d = std::min(std::fabs(y - (long double)T.lo), std::fabs(y - (long double)T.hi));
            bool ok = d <= tol;
            if (!ok) {
                // the endpoint is the best double if its neighbours straddle a boundary
                long double a = img(std::nextafter(x, -INFINITY), b.inducing_time);
                long double z = img(std::nextafter(x, INFINITY), b.inducing_time);
                for (long double e : {(long double)T.lo, (long double)T.hi}) ok = ok || ((a - e) * (z - e) <= 0);
            }
            mc.worst = std::max(mc.worst, double(d));
            if (!ok) {
                ++mc.failures;
                mc.pass = false;
            }
        }
    }
    return mc;
}

// m(x) by scanning times directly.
template <class Space>
int direct_inducing_time(const MapSpec& f, const NiceCouple& couple, typename Space::Point x, int max_time) {
    auto y = x;
    for (int m = 1; m <= max_time; ++m) {
        y = Space::apply(f, y);
        int k = couple.inner.component_of(Space::to_complex(y));
        if (k < 0) continue;
        auto ext = region_of<Space>(couple.outer.components[std::size_t(k)]);
        auto c = component_at<Space>(f, ext, m, x);
        if (c.diffeomorphic) return m;
    }
    return -1;
}

struct DecompositionFailure {
    cplx x;
    int m = 0;         // inducing time from the branch table
    int m_tilde = 0;
    int landing = 0;
};

struct DecompositionReport {
    bool pass = true;
    long samples = 0;
    long checked = 0;     // (x, Y) pairs with x in a member of D_Y
    long covered = 0;     // samples found in some D_Y
    long uncovered = 0;
    std::vector<DecompositionFailure> failures;
};

// For sampled x in D and every enumerated bad pull-back Y of V-hat around x
// such that x lies in a member W of D_Y, checks m(x) = m~ + 1 + l(f^(m~+1) x).
template <class Space, class LandingFn>
DecompositionReport verify_decomposition(const MapSpec& f, const NiceCouple& couple, const InducedMap<Space>& F,
                                         const BadEnumeration<Space>& bad, const LandingTable<Space>& land,
                                         const std::vector<typename Space::Point>& xs, LandingFn&& landing_time) {
    DecompositionReport rep;
    for (const auto& x : xs) {
        const auto* br = F.find(x);
        if (!br) continue;
        ++rep.samples;
        bool in_some = false;
        for (const auto& Y : bad.items) {
            if (!Space::contains(Y.region, x)) continue;
            int mt = Y.depth;
            auto y = x;
            for (int k = 0; k <= mt; ++k) y = Space::apply(f, y);
            int ui = landing_time(y);
            if (ui < 0) continue;
            const auto& U = land.components[std::size_t(ui)];
            // U inside f(V): some preimage of its representative lies in V
            bool in_fV = false;
            for (auto z : preimages(f, Space::to_complex(Space::rep(U.region))))
                in_fV = in_fV || couple.inner.contains(f.is_real() ? cplx(z.real(), 0.0) : z);
            if (!in_fV) continue;
            auto W = component_at<Space>(f, U.region, mt + 1, x);
            auto Wh = component_at<Space>(f, U.extension, mt + 1, x);
            if (!W.diffeomorphic || !Wh.diffeomorphic) continue;
            bool inside = true;
            for (auto p : Space::samples(Wh.region, 16)) inside = inside && Space::dist(Y.region, p) <= 1e-9 * f.scale();
            if (!inside) continue;
            in_some = true;
            ++rep.checked;
            int predicted = mt + 1 + U.landing_time;
            if (predicted != br->inducing_time) {
                rep.pass = false;
                rep.failures.push_back({Space::to_complex(x), br->inducing_time, mt, U.landing_time});
            }
        }
        if (in_some)
            ++rep.covered;
        else
            ++rep.uncovered;
    }
    return rep;
}

// Convenience overload with a linear landing lookup.
template <class Space>
DecompositionReport verify_decomposition(const MapSpec& f, const NiceCouple& couple, const InducedMap<Space>& F,
                                         const BadEnumeration<Space>& bad, const LandingTable<Space>& land,
                                         const std::vector<typename Space::Point>& xs) {
    return verify_decomposition<Space>(f, couple, F, bad, land, xs, [&](typename Space::Point y) {
        for (std::size_t i = 0; i < land.components.size(); ++i)
            if (Space::contains(land.components[i].region, y)) return int(i);
        return -1;
    });
}

struct TailStatistics {
    double alpha = 1;
    std::vector<double> T;  // T[m] for m = 0 .. max_time + 1 (T[0] = T[1])
    double poly_exponent = std::numeric_limits<double>::quiet_NaN();  // -slope of log T vs log m
    double fit_residual = 0;
    bool super_polynomial = false;  // log-log slope steepens
    double unresolved_mass = 0;
};

template <class Space>
TailStatistics tail_statistics(const InducedMap<Space>& F, double alpha, int fit_lo = 5, int fit_hi = -1) {
    TailStatistics ts;
    ts.alpha = alpha;
    ts.unresolved_mass = F.stats.unexplored_mass / F.unit;
    int M = F.max_time;
    std::vector<double> level(std::size_t(M) + 2, 0.0);
    for (const auto& b : F.branches) level[std::size_t(b.inducing_time)] += std::pow(Space::diam(b.region) / F.unit, alpha);
    ts.T.assign(std::size_t(M) + 2, 0.0);
    for (int m = M; m >= 1; --m) ts.T[std::size_t(m)] = ts.T[std::size_t(m) + 1] + level[std::size_t(m)];
    ts.T[0] = ts.T[1];
    if (fit_hi < 0) fit_hi = M;
    std::vector<double> xs, ys;
    for (int m = fit_lo; m <= fit_hi; ++m) {
        if (ts.T[std::size_t(m)] <= 0) break;
        xs.push_back(std::log(double(m)));
        ys.push_back(std::log(ts.T[std::size_t(m)]));
    }
    if (xs.size() >= 3) {
        auto fit = detail::least_squares(xs, ys);
        ts.poly_exponent = -fit.slope;
        ts.fit_residual = fit.rms;
        std::size_t h = xs.size() / 2;
        auto a = detail::least_squares({xs.begin(), xs.begin() + long(h) + 1}, {ys.begin(), ys.begin() + long(h) + 1});
        auto b = detail::least_squares({xs.begin() + long(h), xs.end()}, {ys.begin() + long(h), ys.end()});
        ts.super_polynomial = b.slope < a.slope - 0.5;
    }
    return ts;
}

template <class Space>
struct Child {
    typename Space::Region region;
    int time = 0;
    int critical_index = 0;
    int target_component = 0;
    double image_diameter = 0;  // diam f(Y)
};

template <class Space>
struct ChildrenReport {
    std::vector<Child<Space>> children;
    double s = 0;
    double sum = 0;        // sum of diam(f(Y))^s
    double delta = 0;
    double bound = 0;      // delta^s
    bool within_bound = true;
    std::vector<double> smallest_ratio;  // per critical point: diam(Y_1) / diam(tB(c, 2 delta / r)), soft
};

// Children of V up to time max_time: pull-backs Y of V by f^m containing one
// critical point, with f^(m-1) diffeomorphic on f(Y).
template <class Space>
ChildrenReport<Space> enumerate_children(const MapSpec& f, const NiceSet& V, int max_time, double s,
                                         double delta = 0, double r = 0) {
    ChildrenReport<Space> rep;
    rep.s = s;
    rep.delta = delta;
    rep.bound = delta > 0 ? std::pow(delta, s) : 0;
    for (std::size_t ci = 0; ci < f.critical_points().size(); ++ci) {
        cplx c = f.critical_points()[ci].location;
        if (!f.critical_points()[ci].in_julia) continue;
        double smallest = std::numeric_limits<double>::infinity();
        cplx z = c;
        for (int m = 1; m <= max_time; ++m) {
            z = f(z);
            int k = V.component_of(z);
            if (k < 0) continue;
            auto comp = component_at<Space>(f, region_of<Space>(V.components[std::size_t(k)]), m,
                                            Space::from(c));
            // levels[1 .. m-1] carry f(Y) up to f^(m-1)(Y): no critical point there
            bool diffeo = true;
            int crits_in_Y = 0;
            for (std::size_t j = 0; j < f.critical_points().size(); ++j)
                crits_in_Y += Space::contains(comp.region, Space::from(f.critical_points()[j].location));
            for (int lev = 1; lev < m; ++lev)
                for (std::size_t j = 0; j < f.critical_points().size(); ++j)
                    if (Space::contains(comp.levels[std::size_t(lev)], Space::from(f.critical_points()[j].location)))
                        diffeo = false;
            if (crits_in_Y != 1 || !diffeo) continue;
            Child<Space> ch;
            ch.region = comp.region;
            ch.time = m;
            ch.critical_index = int(ci);
            ch.target_component = k;
            ch.image_diameter = m >= 2 ? Space::diam(comp.levels[1]) : Space::diam(region_of<Space>(V.components[std::size_t(k)]));
            smallest = std::min(smallest, Space::diam(ch.region));
            rep.children.push_back(ch);
        }
        if (r > 0 && delta > 0 && std::isfinite(smallest)) {
            auto B = critical_ball<Space>(f, Space::from(c), 2 * delta / r);
            rep.smallest_ratio.push_back(smallest / Space::diam(B));
        }
    }
    for (const auto& ch : rep.children) rep.sum += std::pow(ch.image_diameter, s);
    rep.within_bound = rep.bound == 0 || rep.sum <= rep.bound;
    return rep;
}

template <class Space>
void write_branches_csv(std::ostream& os, const InducedMap<Space>& F) {
    os << "chain,depth,inducing_time,diameter,degree,target_component\n";
    for (const auto& b : F.branches) {
        for (std::size_t i = 0; i < b.chain.size(); ++i) os << (i ? "." : "") << b.chain[i];
        os << ',' << b.inducing_time << ',' << b.inducing_time << ',' << detail::fmt(Space::diam(b.region)) << ",1,"
           << b.target_component << "\n";
    }
}

template <class Space>
void write_bad_csv(std::ostream& os, const BadEnumeration<Space>& e) {
    os << "chain,depth,inducing_time,diameter,degree,target_component\n";
    for (const auto& b : e.items) {
        for (std::size_t i = 0; i < b.chain.size(); ++i) os << (i ? "." : "") << b.chain[i];
        os << ',' << b.depth << ",," << detail::fmt(Space::diam(b.region)) << ',' << detail::fmt(b.degree) << ','
           << b.root << "\n";
    }
}

}  // namespace dynlab
