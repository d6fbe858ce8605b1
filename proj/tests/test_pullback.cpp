#include <catch_amalgamated.hpp>

#include <dynlab/pullback.hpp>

#include <random>

using namespace dynlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
MapSpec chebyshev() { return MapSpec::real_polynomial({0.0, 4.0, -4.0}, 0.0, 1.0); }
MapSpec cheb2() { return MapSpec::real_polynomial({-2.0, 0.0, 1.0}, -2.0, 2.0); }
MapSpec zquad(cplx c) { return MapSpec::complex_polynomial({c, 0.0, 1.0}); }

double iterate(const MapSpec& f, double x, int n) {
    for (int k = 0; k < n; ++k) x = f(x);
    return x;
}

// Independent oracle for a real component: walk outward from the anchor on a
// fine grid while f^m stays in the target, then bisect on f^m itself.
Interval scan_component(const MapSpec& f, Interval target, int m, double anchor, double step) {
    auto in = [&](double x) { return x >= f.domain_lo() && x <= f.domain_hi() && target.contains(iterate(f, x, m)); };
    auto edge = [&](double inside, double outside) {
        for (int k = 0; k < 200; ++k) {
            double mid = 0.5 * (inside + outside);
            if (mid == inside || mid == outside) break;
            (in(mid) ? inside : outside) = mid;
        }
        return inside;
    };
    double a = anchor;
    while (in(a - step)) a -= step;
    double b = anchor;
    while (in(b + step)) b += step;
    double lo = in(a - step) ? a - step : edge(a, a - step);
    double hi = edge(b, b + step);
    return {lo, hi};
}

// points of f^-m(y) by the full preimage tree
std::vector<cplx> tree(const MapSpec& f, cplx y, int m) {
    std::vector<cplx> level{y};
    for (int k = 0; k < m; ++k) {
        std::vector<cplx> next;
        for (auto w : level)
            for (auto z : preimages(f, w)) next.push_back(z);
        level = std::move(next);
    }
    return level;
}
}  // namespace

TEST_CASE("preimage examples") {
    auto r = preimages(zquad(0.0), cplx(1.0));
    REQUIRE(r.size() == 2);
    CHECK(std::min(std::abs(r[0] - 1.0), std::abs(r[1] - 1.0)) < 1e-15);
    CHECK(std::min(std::abs(r[0] + 1.0), std::abs(r[1] + 1.0)) < 1e-15);

    auto c = preimages(chebyshev(), cplx(1.0));
    REQUIRE(c.size() == 2);
    CHECK(c[0].real() == 0.5);
    CHECK(c[1].real() == 0.5);

    auto d = preimages(chebyshev(), cplx(0.75));
    REQUIRE(d.size() == 2);
    CHECK_THAT(d[0].real(), WithinAbs(0.25, 1e-15));
    CHECK_THAT(d[1].real(), WithinAbs(0.75, 1e-15));
}

TEST_CASE("component_at on the real line") {
    auto f = chebyshev();
    const double eps = 1e-3;
    auto c = component_at<RealSpace>(f, {0.75 - eps, 0.75 + eps}, 1, 0.75);
    CHECK_THAT(c.diameter, WithinRel(eps, 1e-3));
    CHECK(c.degree == 1);
    CHECK(c.diffeomorphic);

    auto z = component_at<RealSpace>(f, {0.2, 0.4}, 0, 0.3);
    CHECK(z.region.lo == 0.2);
    CHECK(z.region.hi == 0.4);
    CHECK(z.degree == 1);

    CHECK_THROWS_AS(component_at<RealSpace>(f, {0.2, 0.4}, 1, 0.5), PreconditionError);

    // against the direct scan of f^m
    std::mt19937_64 g(7);
    std::uniform_real_distribution<double> U(0.02, 0.98);
    for (int k = 0; k < 40; ++k) {
        int m = 1 + k % 7;
        double x = U(g);
        double y = iterate(f, x, m);
        Interval T{y - 0.03, y + 0.03};
        auto comp = component_at<RealSpace>(f, T, m, x);
        auto oracle = scan_component(f, T, m, x, 1e-5);
        CHECK_THAT(comp.region.lo, WithinAbs(oracle.lo, 1e-9));
        CHECK_THAT(comp.region.hi, WithinAbs(oracle.hi, 1e-9));
    }
}

TEST_CASE("component_at in the plane") {
    auto f = zquad(0.0);
    auto c = ball_component_at<ComplexSpace>(f, cplx(1.0), 0.1, 1, cplx(1.0));
    CHECK_THAT(c.diameter, WithinRel(0.1, 0.01));
    CHECK(c.degree == 1);
    CHECK(ComplexSpace::contains(c.region, cplx(1.0)));
    CHECK(ComplexSpace::contains(c.region, cplx(1.045)));
    CHECK_FALSE(ComplexSpace::contains(c.region, cplx(1.06)));

    // ball around the critical value pulls back with degree two, twice
    auto d = component_at<ComplexSpace>(f, circle(0.0, 0.5), 2, cplx(0.1));
    CHECK(d.degree == 4);
    CHECK(d.critical_hits == 2);
    CHECK_FALSE(d.diffeomorphic);
    CHECK_THAT(d.diameter, WithinRel(2 * std::pow(0.5, 0.25), 0.01));

    // boundary through the critical value
    CHECK_THROWS_AS(component_at<ComplexSpace>(f, circle(0.5, 0.5), 1, cplx(0.7)), AmbiguityError);
}

TEST_CASE("all_components examples") {
    auto f = zquad(0.0);
    auto set = all_components<ComplexSpace>(f, circle(1.0, 0.1), 2);
    REQUIRE(set.components.size() == 4);
    for (cplx w : {cplx(1), cplx(0, 1), cplx(-1), cplx(0, -1)}) {
        int hits = 0;
        for (auto& c : set.components) hits += ComplexSpace::contains(c.region, w);
        CHECK(hits == 1);
    }
    auto zero = all_components<ComplexSpace>(f, circle(1.0, 0.1), 0);
    REQUIRE(zero.components.size() == 1);

    auto cheb = all_components<RealSpace>(chebyshev(), {0.9, 1.0, false, true}, 1);
    REQUIRE(cheb.components.size() == 1);
    CHECK(cheb.components[0].region.contains(0.5));
    CHECK(cheb.components[0].degree == 2);

    auto cut = all_components<ComplexSpace>(f, circle(1.0, 0.1), 6, 10);
    CHECK(cut.truncated);
    CHECK(cut.components.empty());
}

TEST_CASE("center preimages are partitioned by the components") {
    auto f = zquad(cplx(-0.12, 0.75));
    auto p = find_periodic_point(f, 1, cplx(1.0, 0.0));
    REQUIRE(std::abs(p.multiplier) > 1.0);
    for (int m = 1; m <= 6; ++m) {
        auto set = all_components<ComplexSpace>(f, circle(p.point, 0.1), m);
        long deg = 0;
        for (auto& c : set.components) deg += c.degree;
        CHECK(deg == (1L << m));
        for (auto z : tree(f, p.point, m)) {
            int hits = 0;
            for (auto& c : set.components) hits += ComplexSpace::contains(c.region, z);
            CHECK(hits == 1);
        }
    }
}

TEST_CASE("nesting: f maps each depth m+1 component into one depth m component") {
    auto f = cheb2();
    Interval T{-1.1, -0.9};
    for (int m = 0; m < 6; ++m) {
        auto up = all_components<RealSpace>(f, T, m).components;
        auto down = all_components<RealSpace>(f, T, m + 1).components;
        for (auto& w : down) {
            int hits = 0;
            for (auto& u : up) {
                bool all_in = true;
                for (double x : RealSpace::samples(w.region, 9)) all_in = all_in && u.region.contains(f(x));
                hits += all_in;
            }
            CHECK(hits == 1);
        }
    }
}

TEST_CASE("degree law against brute-force preimage counts") {
    auto brute = [](const MapSpec& f, const auto& comp, const auto& target_pts, int m, auto space) {
        using S = decltype(space);
        long best = 0;
        for (auto y : target_pts) {
            long n = 0;
            for (auto z : tree(f, S::to_complex(y), m)) n += S::contains(comp.region, S::from(z));
            best = std::max(best, n);
        }
        return best;
    };
    auto f = chebyshev();
    Interval T{0.9, 1.0, false, true};
    for (int m = 0; m <= 5; ++m) {
        for (auto& c : all_components<RealSpace>(f, T, m).components) {
            CHECK(c.degree == (1L << c.critical_hits));
            CHECK(brute(f, c, RealSpace::samples(T, 16), m, RealSpace{}) == c.degree);
        }
    }
    auto z = zquad(0.0);
    auto D = circle(0.1, 0.5);
    for (int m = 0; m <= 4; ++m) {
        for (auto& c : all_components<ComplexSpace>(z, D, m).components) {
            CHECK(brute(z, c, ComplexSpace::samples(D, 8), m, ComplexSpace{}) == c.degree);
        }
    }
}

TEST_CASE("diffeomorphic lifts close up after one lap") {
    auto f = zquad(-1.0);
    auto set = all_components<ComplexSpace>(f, circle(cplx(1.618033988749895, 0), 0.05), 6);
    for (auto& c : set.components) {
        CHECK(c.degree == 1);
        const auto& pts = c.region.pts;
        double gap = std::abs(pts.front() - pts.back());
        double spacing = 0;
        for (std::size_t i = 1; i < pts.size(); ++i) spacing = std::max(spacing, std::abs(pts[i] - pts[i - 1]));
        CHECK(gap <= spacing * 1.0000001);
    }
}

TEST_CASE("backward contraction probe") {
    auto rep = backward_contraction_probe<RealSpace>(cheb2(), 4.0, {0.01}, 10);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].near_components > 0);
    CHECK(rep.rows[0].worst_ratio < 1.0);
    CHECK(rep.pass);

    auto empty = backward_contraction_probe<RealSpace>(cheb2(), 4.0, {}, 10);
    CHECK(empty.pass);
    auto vac = backward_contraction_probe<ComplexSpace>(zquad(0.0), 4.0, {0.01}, 4);
    CHECK(vac.vacuous);
    CHECK(vac.pass);
    CHECK_THROWS_AS(backward_contraction_probe<RealSpace>(cheb2(), 1.0, {0.01}, 3), PreconditionError);
}

TEST_CASE("shrinking exponent") {
    auto f = cheb2();
    std::vector<double> base;
    for (auto z : tree(f, cplx(-1.0), 8)) base.push_back(z.real());
    REQUIRE(base.size() == 256);
    std::vector<int> depths;
    for (int m = 1; m <= 15; ++m) depths.push_back(m);
    auto rep = shrinking_exponent<RealSpace>(f, 0.1, depths, base);
    CHECK(rep.excluded == 0);
    for (std::size_t k = 1; k < rep.theta.size(); ++k) CHECK(rep.theta[k] <= rep.theta[k - 1] * 1.0000001);
    CHECK(rep.fitted_beta >= 3.0);

    auto lin = shrinking_exponent<RealSpace>(chebyshev(), 1e-5, {1}, {0.75});
    CHECK_THAT(lin.theta[0], WithinRel(2e-5 / 2.0, 1e-4));
}

TEST_CASE("Koebe distortion on diffeomorphic branches") {
    auto f = chebyshev();
    auto c = ball_component_at<RealSpace>(f, 0.75, 0.1, 5, 0.75);
    REQUIRE(c.diffeomorphic);
    double prev = 1e300;
    for (double eps : {0.5, 0.25, 0.1, 0.01}) {
        double d = koebe_distortion_check<RealSpace>(f, c, eps).distortion;
        CHECK(d >= 1.0);
        CHECK(d < prev);
        prev = d;
    }
    CHECK(prev < 1.01);

    auto tiny = ball_component_at<RealSpace>(f, 0.75, 1e-6, 1, 0.75);
    CHECK_THAT(koebe_distortion_check<RealSpace>(f, tiny, 0.5).distortion, WithinAbs(1.0, 1e-5));

    auto z = zquad(0.0);
    auto w = ball_component_at<ComplexSpace>(z, cplx(1.0), 0.5, 3, cplx(1.0));
    auto rep = koebe_distortion_check<ComplexSpace>(z, w, 0.25);
    CHECK(rep.distortion <= 2.0);
    // oracle: |D(z^8)| = 8|z|^7 and |z|^8 ranges over |w| for w in B(1, 0.125)
    CHECK(rep.distortion <= std::pow(1.125 / 0.875, 7.0 / 8.0) * (1 + 1e-9));

    auto crit = ball_component_at<ComplexSpace>(z, cplx(0.0), 0.5, 1, cplx(0.1));
    CHECK_THROWS_AS(koebe_distortion_check<ComplexSpace>(z, crit, 0.5), PreconditionError);
}
