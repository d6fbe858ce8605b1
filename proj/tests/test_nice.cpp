#include <catch_amalgamated.hpp>

#include <dynlab/nice.hpp>

#include <random>
#include <sstream>

using namespace dynlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
MapSpec chebyshev() { return MapSpec::real_polynomial({0.0, 4.0, -4.0}, 0.0, 1.0); }
MapSpec cheb2() { return MapSpec::real_polynomial({-2.0, 0.0, 1.0}, -2.0, 2.0); }
MapSpec zquad(cplx c) { return MapSpec::complex_polynomial({c, 0.0, 1.0}); }

// first n >= 0 with f^n(x) in V, or -1
int first_entry(const MapSpec& f, const NiceSet& V, double x, int cap) {
    for (int n = 0; n <= cap; ++n) {
        if (V.contains(cplx(x, 0))) return n;
        x = f(x);
    }
    return -1;
}
}  // namespace

TEST_CASE("nice couple for x^2 - 2") {
    auto f = cheb2();
    auto cp = construct_nice_couple(f, 0.05, 8.0, 12);
    REQUIRE(cp.inner.components.size() == 1);
    REQUIRE(cp.outer.components.size() == 1);
    const auto& V = cp.inner.components[0].interval;
    const auto& Vh = cp.outer.components[0].interval;
    // sandwiched between tB(0, delta) = (-sqrt(delta), sqrt(delta)) and tB(0, 2 delta)
    CHECK(V.lo <= -std::sqrt(0.05));
    CHECK(V.hi >= std::sqrt(0.05));
    CHECK(V.lo >= -std::sqrt(0.1));
    CHECK(V.hi <= std::sqrt(0.1));
    CHECK(Vh.lo <= -std::sqrt(0.2));
    CHECK(Vh.lo >= -std::sqrt(0.4));
    CHECK(cp.certificate.pass);
    CHECK(cp.certificate.closure_inside);
    CHECK(cp.certificate.depth_checked == 12);
    // boundary lands on the fixed point -1 after finitely many steps
    for (const auto& t : cp.inner.components[0].tags) {
        REQUIRE(t.kind == BoundaryTag::Kind::eventually_periodic);
        CHECK_THAT(t.orbit.back().real(), WithinAbs(-1.0, 1e-12));
    }
    auto cert = verify_niceness(f, cp.inner, 200);
    CHECK(cert.pass);
    CHECK(cert.exact == 2);
    CHECK(verify_niceness(f, cp.outer, 200).pass);
}

TEST_CASE("nice couple for the Chebyshev map") {
    auto f = chebyshev();
    auto cp = construct_nice_couple(f, 0.02, 6.0, 12);
    REQUIRE(cp.inner.components.size() == 1);
    const auto& V = cp.inner.components[0].interval;
    CHECK(V.contains(0.5));
    for (const auto& t : cp.inner.components[0].tags) CHECK_THAT(t.orbit.back().real(), WithinAbs(0.75, 1e-12));
    auto cert = verify_niceness(f, cp.inner, 100);
    CHECK(cert.pass);
    CHECK(cert.violations.empty());
    CHECK(cp.certificate.pass);

    SECTION("corrupted boundary is caught") {
        auto bad = cp.inner;
        bad.components[0].interval.lo -= 0.01;
        for (auto& t : bad.components[0].tags) t.point -= 0.01;
        auto c2 = verify_niceness(f, bad, 20);
        REQUIRE_FALSE(c2.pass);
        REQUIRE_FALSE(c2.violations.empty());
        CHECK(c2.violations.front().n <= 20);
        CHECK(bad.contains(c2.violations.front().landing_point));
    }
}

TEST_CASE("niceness certificate edge cases") {
    auto f = cheb2();
    SECTION("boundary on the fixed point itself") {
        NiceSet s;
        NiceComponent c;
        c.interval = {-1.0, 1.0};
        BoundaryTag t;
        t.point = -1.0;
        t.kind = BoundaryTag::Kind::eventually_periodic;
        t.orbit = {cplx(-1.0)};
        t.period = 1;
        c.tags = {t};
        s.components = {c};
        auto cert = verify_niceness(f, s, 5);
        CHECK(cert.pass);
        CHECK(cert.exact == 1);
    }
    SECTION("horizon must be positive") {
        CHECK_THROWS_AS(verify_niceness(f, NiceSet{}, 0), PreconditionError);
    }
}

TEST_CASE("vacuous couples") {
    auto cp = construct_nice_couple(zquad(0.0), 0.05, 8.0, 12);
    CHECK(cp.vacuous());
    CHECK(cp.outer.vacuous());
    auto g = MapSpec::real_polynomial({-0.5, 0.0, 1.0}, -1.4, 1.4);
    CHECK(construct_nice_couple(g, 0.05, 8.0, 12).vacuous());
}

TEST_CASE("construction failure is reported") {
    // tB(c, r delta) would have to cover most of the interval
    CHECK_THROWS_AS(construct_nice_couple(cheb2(), 0.5, 8.0, 12), ConstructionFailure);
}

TEST_CASE("pull-backs of V are inside V or disjoint from it") {
    for (auto f : {cheb2(), chebyshev()}) {
        auto cp = construct_nice_couple(f, 0.03, 4.0, 10);
        const auto& V = cp.inner.components[0].interval;
        for (int m = 1; m <= 10; ++m) {
            auto cs = all_components<RealSpace>(f, V, m);
            REQUIRE_FALSE(cs.truncated);
            for (const auto& W : cs.components) {
                bool disjoint = W.region.hi <= V.lo || W.region.lo >= V.hi;
                bool inside = W.region.lo >= V.lo && W.region.hi <= V.hi;
                CHECK((disjoint || inside));
            }
        }
    }
}

TEST_CASE("landing components") {
    auto f = cheb2();
    auto cp = construct_nice_couple(f, 0.05, 8.0, 12);
    const auto& V = cp.inner;

    SECTION("max_landing 0 gives the components of V") {
        auto tab = landing_components<RealSpace>(f, V, 0);
        REQUIRE(tab.components.size() == 1);
        CHECK(tab.components[0].landing_time == 0);
        CHECK(tab.components[0].region.lo == V.components[0].interval.lo);
    }

    auto tab = landing_components<RealSpace>(f, V, 15, &cp.outer);
    REQUIRE_FALSE(tab.truncated);
    for (const auto& u : tab.components) CHECK(u.extension_diffeomorphic);

    SECTION("landing time is the first entry time") {
        for (const auto& u : tab.components) {
            if (u.landing_time == 0) continue;
            double x = u.region.mid();
            CHECK(first_entry(f, V, x, 40) == u.landing_time);
        }
    }

    SECTION("disjoint and covering") {
        std::vector<Interval> all;
        for (const auto& u : tab.components) all.push_back(u.region);
        std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.lo < b.lo; });
        for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i].lo >= all[i - 1].hi - 1e-12);
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> U(-2.0, 2.0);
        int hits = 0;
        for (int k = 0; k < 20000; ++k) {
            double x = U(rng);
            int n = first_entry(f, V, x, 15);
            if (n < 0) continue;
            int found = 0, time = -1;
            for (const auto& u : tab.components)
                if (u.region.contains(x)) {
                    ++found;
                    time = u.landing_time;
                }
            CHECK(found == 1);
            CHECK(time == n);
            ++hits;
        }
        CHECK(hits > 10000);
    }

    SECTION("tail matches the Lebesgue measure of late landers and decays") {
        auto t = tab.tail(1.0);
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> U(-2.0, 2.0);
        const int N = 200000;
        std::vector<int> count(17, 0);
        for (int k = 0; k < N; ++k) {
            int n = first_entry(f, V, U(rng), 15);
            if (n >= 0) ++count[std::size_t(n)];
        }
        for (int m = 15; m >= 0; --m) count[std::size_t(m)] += count[std::size_t(m) + 1];
        for (int m = 0; m <= 15; m += 3) {
            double p = double(count[std::size_t(m)]) / N;
            double sigma = std::sqrt(p * (1 - p) / N) * 4.0;
            CHECK_THAT(t[std::size_t(m)], WithinAbs(4.0 * p, 4.0 * 5 * sigma + 1e-9));
        }
        std::vector<double> xs, ys;
        for (int m = 2; m <= 14; ++m) {
            xs.push_back(m);
            ys.push_back(std::log(t[std::size_t(m)] - t[15]));
        }
        auto fit = detail::least_squares(xs, ys);
        CHECK(fit.slope < -0.05);
    }
}

TEST_CASE("landing components in the plane") {
    auto f = zquad(-2.0);
    auto cp = construct_nice_couple(f, 0.05, 8.0, 8);
    REQUIRE(cp.inner.components.size() == 1);
    CHECK_FALSE(cp.inner.symmetric);
    auto tab = landing_components<ComplexSpace>(f, cp.inner, 6);
    REQUIRE_FALSE(tab.truncated);
    for (const auto& u : tab.components) {
        cplx z = u.region.rep;
        for (int k = 0; k < u.landing_time; ++k) {
            CHECK_FALSE(cp.inner.contains(z));
            z = f(z);
        }
        CHECK(cp.inner.contains(z));
    }
}

TEST_CASE("complex nice couple for z^2 - 2") {
    auto f = zquad(-2.0);
    auto cp = construct_nice_couple(f, 0.05, 8.0, 12);
    REQUIRE(cp.inner.components.size() == 1);
    const auto& D = cp.inner.components[0].disk;
    CHECK(D.radius > std::sqrt(0.05));
    CHECK(D.radius < std::sqrt(0.1));
    CHECK(cp.certificate.pass);
    CHECK(cp.certificate.closure_inside);
    auto cert = verify_niceness(f, cp.inner, 40);
    CHECK(cert.pass);
    CHECK(cert.exact >= 1);
}

TEST_CASE("return domain moduli") {
    Disk V{{0.3, -0.1}, 1.0};
    auto W = circle({0.3, -0.1}, 0.1);
    CHECK(return_domain_modulus(V, W) >= std::log(10.0) - 1e-3);
    CHECK(return_domain_modulus(V, circle({0.3, -0.1}, 1.0)) == 0.0);
    Interval I{0.0, 1.0}, J{0.45, 0.55};
    // inverse cross ratio |L||R|/(|I||J|)
    double inv = 0.45 * 0.45 / (1.0 * 0.1);
    CHECK_THAT(return_domain_modulus(I, J), WithinRel(2 * std::log(std::sqrt(inv) + std::sqrt(1 + inv)), 1e-12));
    CHECK(return_domain_modulus(I, I) == 0.0);
}

TEST_CASE("lambda-nice report for the Chebyshev couple") {
    auto f = chebyshev();
    auto cp = construct_nice_couple(f, 0.02, 6.0, 12);
    auto rep = lambda_nice_report<RealSpace>(f, cp, 20);
    REQUIRE_FALSE(rep.truncated);
    REQUIRE_FALSE(rep.moduli.empty());
    CHECK(rep.minimum >= 0.5);
    CHECK(rep.rejected == 0);
    for (int t : rep.return_times) CHECK((t >= 1 && t <= 20));
}

TEST_CASE("text format round trip") {
    for (auto f : {cheb2(), zquad(-2.0)}) {
        auto cp = construct_nice_couple(f, 0.05, 8.0, 6);
        std::stringstream ss;
        write_nice_couple(ss, cp);
        auto back = read_nice_couple(ss);
        std::stringstream s2;
        write_nice_couple(s2, back);
        CHECK(ss.str() == s2.str());
        REQUIRE(back.inner.components.size() == cp.inner.components.size());
        const auto& a = cp.inner.components[0];
        const auto& b = back.inner.components[0];
        CHECK(a.interval.lo == b.interval.lo);
        CHECK(a.disk.radius == b.disk.radius);
        REQUIRE(a.tags.size() == b.tags.size());
        for (std::size_t k = 0; k < a.tags.size(); ++k) {
            CHECK(a.tags[k].point == b.tags[k].point);
            CHECK(a.tags[k].orbit == b.tags[k].orbit);
        }
        CHECK(verify_niceness(f, back.inner, 30).pass);
    }
    std::stringstream junk("nice-set 1\nkind real\nbogus");
    CHECK_THROWS_AS(read_nice_set(junk), ConfigError);
}
