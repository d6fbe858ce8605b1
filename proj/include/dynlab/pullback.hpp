#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <string>
#include <vector>

#include "detail/fit.hpp"
#include "detail/parallel.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "maps.hpp"
#include "region.hpp"

namespace dynlab {

template <class Space>
struct PullbackComponent {
    using Region = typename Space::Region;
    using Point = typename Space::Point;

    int depth = 0;
    Point anchor{};
    Region target{};
    Point target_center{};     // set when the target is a ball
    double target_radius = 0;  // 0 when the target is not a ball
    std::vector<int> branch_chain;  // piece index per level, from the target down
    Region region{};
    double diameter = 0;
    long degree = 1;
    bool diffeomorphic = true;
    int critical_hits = 0;
    // levels[k] is the chain element f^k maps into f^-(m-k)(target); levels[0] = region
    std::vector<Region> levels;
};

using RealComponent = PullbackComponent<RealSpace>;
using ComplexComponent = PullbackComponent<ComplexSpace>;

// Component of f^-depth(target) containing the anchor, pulled back one level at
// a time along the anchor's forward orbit.
template <class Space>
PullbackComponent<Space> component_at(const MapSpec& f, const typename Space::Region& target, int depth,
                                      typename Space::Point anchor) {
    using Point = typename Space::Point;
    if (depth < 0) throw PreconditionError("depth must be nonnegative");
    std::vector<Point> orb{anchor};
    for (int k = 0; k < depth; ++k) orb.push_back(Space::apply(f, orb.back()));
    if (!Space::contains(target, orb.back()))
        throw PreconditionError("anchor does not land in the target at depth " + std::to_string(depth));
    PullbackComponent<Space> c;
    c.depth = depth;
    c.anchor = anchor;
    c.target = target;
    c.levels.assign(std::size_t(depth) + 1, target);
    auto R = target;
    for (int j = depth - 1; j >= 0; --j) {
        typename Space::Piece piece;
        try {
            piece = Space::pull_containing(f, R, orb[std::size_t(j)]);
        } catch (const AmbiguityError& e) {
            throw AmbiguityError(std::string(e.what()) + " (level " + std::to_string(depth - j) + " of " +
                                 std::to_string(depth) + ")");
        }
        c.branch_chain.push_back(piece.index);
        if (!piece.crits.empty()) ++c.critical_hits;
        c.degree *= piece.degree();
        R = piece.region;
        c.levels[std::size_t(j)] = R;
    }
    c.region = R;
    c.diameter = Space::diam(R);
    c.diffeomorphic = c.critical_hits == 0;
    return c;
}

template <class Space>
PullbackComponent<Space> ball_component_at(const MapSpec& f, typename Space::Point y, double rho, int depth,
                                           typename Space::Point anchor) {
    auto c = component_at<Space>(f, Space::ball(y, rho), depth, anchor);
    c.target_center = y;
    c.target_radius = rho;
    return c;
}

template <class Space>
struct ComponentSet {
    std::vector<PullbackComponent<Space>> components;
    bool truncated = false;
    long unexplored = 0;  // nodes left unexpanded when the budget ran out
    long nodes = 0;
};

// Every component of f^-depth(target), found level by level. Component
// records carry region, chain, degree and critical hits but not the chain
// regions themselves.
template <class Space>
ComponentSet<Space> all_components(const MapSpec& f, const typename Space::Region& target, int depth,
                                   long budget = 10'000'000) {
    ComponentSet<Space> out;
    PullbackComponent<Space> root;
    root.target = target;
    root.region = target;
    root.anchor = Space::rep(target);
    root.diameter = Space::diam(target);
    std::vector<PullbackComponent<Space>> level{root};
    out.nodes = 1;
    for (int d = 1; d <= depth; ++d) {
        std::vector<PullbackComponent<Space>> next;
        for (std::size_t i = 0; i < level.size(); ++i) {
            if (out.nodes >= budget) {
                out.truncated = true;
                out.unexplored += long(level.size() - i);
                break;
            }
            for (auto& piece : Space::pull(f, level[i].region)) {
                PullbackComponent<Space> c;
                c.depth = d;
                c.target = target;
                c.branch_chain = level[i].branch_chain;
                c.branch_chain.push_back(piece.index);
                c.critical_hits = level[i].critical_hits + (piece.crits.empty() ? 0 : 1);
                c.degree = level[i].degree * piece.degree();
                c.diffeomorphic = c.critical_hits == 0;
                c.region = std::move(piece.region);
                c.anchor = Space::rep(c.region);
                c.diameter = Space::diam(c.region);
                next.push_back(std::move(c));
                ++out.nodes;
            }
        }
        level = std::move(next);
        if (out.truncated) break;
    }
    if (!out.truncated) out.components = std::move(level);
    return out;
}

template <class Space>
typename Space::Region critical_ball(const MapSpec& f, typename Space::Point c, double eps) {
    return Space::pull_containing(f, Space::ball(Space::apply(f, c), eps), c).region;
}

struct ShrinkingReport {
    double rho = 0;
    std::vector<int> depths;
    std::vector<double> theta;        // max diameter per depth
    std::vector<int> used;            // base points contributing per depth
    double fitted_beta = 0;
    double fit_residual = 0;
    std::size_t base_points = 0;
    std::size_t excluded = 0;         // base points dropped after an ambiguity error
};

// theta_m = max over base points x of diam(component of f^-m(B(f^m x, rho)) containing x)
template <class Space>
ShrinkingReport shrinking_exponent(const MapSpec& f, double rho, const std::vector<int>& depths,
                                   const std::vector<typename Space::Point>& base, int workers = 1) {
    ShrinkingReport rep;
    rep.rho = rho;
    rep.depths = depths;
    rep.base_points = base.size();
    std::vector<std::vector<double>> diam(base.size(), std::vector<double>(depths.size(), 0.0));
    std::vector<char> bad(base.size(), 0);
    detail::parallel_for(base.size(), workers, [&](std::size_t i) {
        try {
            for (std::size_t k = 0; k < depths.size(); ++k) {
                auto y = base[i];
                for (int n = 0; n < depths[k]; ++n) y = Space::apply(f, y);
                auto c = component_at<Space>(f, Space::ball(y, rho), depths[k], base[i]);
                diam[i][k] = c.diameter;
            }
        } catch (const AmbiguityError&) {
            bad[i] = 1;
        }
    });
    rep.theta.assign(depths.size(), 0.0);
    rep.used.assign(depths.size(), 0);
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (bad[i]) {
            ++rep.excluded;
            continue;
        }
        for (std::size_t k = 0; k < depths.size(); ++k) {
            rep.theta[k] = std::max(rep.theta[k], diam[i][k]);
            ++rep.used[k];
        }
    }
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < depths.size(); ++k) {
        if (depths[k] < 1 || rep.theta[k] <= 0) continue;
        lx.push_back(std::log(double(depths[k])));
        ly.push_back(std::log(rep.theta[k]));
    }
    auto fit = detail::least_squares(lx, ly);
    rep.fitted_beta = -fit.slope;
    rep.fit_residual = fit.rms;
    return rep;
}

inline void write_shrinking_csv(std::ostream& os, const ShrinkingReport& r) {
    os << "depth,theta,base_points\n";
    for (std::size_t k = 0; k < r.depths.size(); ++k) os << r.depths[k] << ',' << r.theta[k] << ',' << r.used[k] << '\n';
}

template <class Space>
void write_components_csv(std::ostream& os, const std::vector<PullbackComponent<Space>>& cs) {
    os << "chain,depth,diameter,degree,critical_hits\n";
    for (const auto& c : cs) {
        for (std::size_t k = 0; k < c.branch_chain.size(); ++k) os << (k ? "." : "") << c.branch_chain[k];
        os << ',' << c.depth << ',' << c.diameter << ',' << c.degree << ',' << c.critical_hits << '\n';
    }
}

struct ContractionRow {
    double delta = 0;
    double worst_ratio = 0;  // max diam(W) / delta over near components
    long near_components = 0;
    bool truncated = false;
};

struct ContractionReport {
    double r = 0;
    int depth = 0;
    std::vector<ContractionRow> rows;
    bool vacuous = false;  // no critical point in the Julia set
    bool pass = true;
};

// Components W of f^-m(tB(c, r delta)), m <= depth, lying within delta of a
// critical value must have diam(W) < delta.
template <class Space>
ContractionReport backward_contraction_probe(const MapSpec& f, double r, const std::vector<double>& delta_grid,
                                             int depth, long budget = 10'000'000) {
    if (!(r > 1.0)) throw PreconditionError("backward contraction needs r > 1");
    ContractionReport rep;
    rep.r = r;
    rep.depth = depth;
    auto crit = f.julia_critical_points();
    rep.vacuous = crit.empty();
    std::vector<typename Space::Point> values;
    for (const auto& c : f.critical_points()) values.push_back(Space::from(f(c.location)));
    for (double delta : delta_grid) {
        ContractionRow row;
        row.delta = delta;
        for (const auto& c : crit) {
            auto cp = Space::from(c.location);
            auto T = critical_ball<Space>(f, cp, r * delta);
            std::vector<typename Space::Region> level{T};
            long nodes = 1;
            for (int m = 0; m <= depth; ++m) {
                for (const auto& W : level) {
                    double dist = std::numeric_limits<double>::infinity();
                    for (const auto& v : values) dist = std::min(dist, Space::dist(W, v));
                    if (dist <= delta) {
                        ++row.near_components;
                        row.worst_ratio = std::max(row.worst_ratio, Space::diam(W) / delta);
                    }
                }
                if (m == depth) break;
                std::vector<typename Space::Region> next;
                for (const auto& W : level) {
                    for (auto& p : Space::pull(f, W)) next.push_back(std::move(p.region));
                    nodes += 1;
                    if (nodes > budget) {
                        row.truncated = true;
                        break;
                    }
                }
                if (row.truncated) break;
                level = std::move(next);
            }
        }
        if (!(row.worst_ratio < 1.0)) rep.pass = false;
        if (row.truncated) rep.pass = false;
        rep.rows.push_back(row);
    }
    return rep;
}

struct KoebeReport {
    double eps = 0;
    double distortion = 1;  // max / min of |Df^n| over the samples
    int samples = 0;
};

// Distortion of f^n on W(eps), the part of a diffeomorphic pull-back of
// B(y, eta) that maps onto B(y, eps eta).
template <class Space>
KoebeReport koebe_distortion_check(const MapSpec& f, const PullbackComponent<Space>& comp, double eps,
                                   int samples = 64) {
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("eps must lie in (0, 1)");
    if (!comp.diffeomorphic) throw PreconditionError("component is not a diffeomorphic pull-back");
    if (!(comp.target_radius > 0.0) || comp.levels.size() != std::size_t(comp.depth) + 1)
        throw PreconditionError("component must come from ball_component_at");
    using Point = typename Space::Point;
    std::vector<Point> pts;
    const double rad = eps * comp.target_radius;
    if constexpr (std::is_same_v<Point, double>) {
        for (int k = 0; k < samples; ++k) pts.push_back(comp.target_center - rad + 2.0 * rad * k / (samples - 1));
    } else {
        int ring = samples / 2;
        for (int k = 0; k < ring; ++k) {
            double a = 2.0 * std::numbers::pi * k / ring;
            pts.push_back(comp.target_center + rad * cplx(std::cos(a), std::sin(a)));
        }
        for (int k = 0; int(pts.size()) < samples; ++k) {
            double a = 2.0 * std::numbers::pi * k / (samples - ring) + 0.1;
            double rr = rad * (0.25 + 0.5 * (k % 2));
            pts.push_back(comp.target_center + rr * cplx(std::cos(a), std::sin(a)));
        }
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (auto p : pts) {
        for (int j = comp.depth - 1; j >= 0; --j) {
            const auto& R = comp.levels[std::size_t(j)];
            Point best{};
            double gap = std::numeric_limits<double>::infinity();
            for (const auto& z : preimages(f, Space::to_complex(p))) {
                double g = Space::dist(R, Space::from(z));
                if (g < gap) {
                    gap = g;
                    best = Space::from(z);
                }
            }
            p = best;
        }
        double d = 1.0;
        auto z = p;
        for (int n = 0; n < comp.depth; ++n) {
            d *= Space::abs_deriv(f, z);
            z = Space::apply(f, z);
        }
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return {eps, hi / lo, int(pts.size())};
}

}  // namespace dynlab
