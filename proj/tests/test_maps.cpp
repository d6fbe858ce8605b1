#include <catch_amalgamated.hpp>

#include <dynlab/maps.hpp>

#include <random>

using namespace dynlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
MapSpec chebyshev() { return MapSpec::real_polynomial({0.0, 4.0, -4.0}, 0.0, 1.0); }
MapSpec cheb2() { return MapSpec::real_polynomial({-2.0, 0.0, 1.0}, -2.0, 2.0); }
MapSpec zsq(cplx c = 0.0) { return MapSpec::complex_polynomial({c, 0.0, 1.0}); }
}  // namespace

TEST_CASE("evaluate on the reference maps") {
    CHECK(evaluate(chebyshev(), 0.5) == 1.0);
    CHECK(evaluate(zsq(), cplx(0, 1)) == cplx(-1, 0));
    CHECK(evaluate(cheb2(), -2.0) == 2.0);
    CHECK_THROWS_AS(evaluate(chebyshev(), 1.5), DomainViolation);
}

TEST_CASE("critical points and their Julia classification") {
    auto f = cheb2();
    REQUIRE(f.critical_points().size() == 1);
    CHECK(f.critical_points()[0].location == cplx(0.0));
    CHECK(f.critical_points()[0].order == 2);
    CHECK(f.critical_points()[0].in_julia);
    CHECK(f.max_order() == 2);

    CHECK(chebyshev().critical_points()[0].location.real() == 0.5);
    CHECK(chebyshev().critical_points()[0].in_julia);
    // superattracting and attracting-cycle cases
    CHECK_FALSE(zsq().critical_points()[0].in_julia);
    CHECK_FALSE(zsq(-1.0).critical_points()[0].in_julia);
    CHECK(zsq(-2.0).critical_points()[0].in_julia);
    CHECK(zsq().julia_critical_points().empty());

    // cubic: roots of Df counted with multiplicity equal degree - 1
    auto g = MapSpec::complex_polynomial({0.0, 0.0, 0.0, 1.0});
    REQUIRE(g.critical_points().size() == 1);
    CHECK(g.critical_points()[0].order == 3);
    auto h = MapSpec::complex_polynomial({0.3, -0.5, 0.0, 1.0});
    int total = 0;
    for (auto& c : h.critical_points()) {
        total += c.order - 1;
        CHECK(std::abs(h.deriv(c.location)) < 1e-10);
    }
    CHECK(total == 2);
}

TEST_CASE("large derivatives report") {
    auto rep = large_derivatives_report(cheb2(), 5);
    REQUIRE(rep.entries.size() == 1);
    std::vector<double> want{4, 16, 64, 256, 1024};
    CHECK(rep.entries[0].derivatives == want);
    CHECK(rep.entries[0].diverging);
    CHECK(rep.holds);

    auto z = large_derivatives_report(zsq(), 4);
    REQUIRE(z.entries.size() == 1);
    for (double d : z.entries[0].derivatives) CHECK(d == 0.0);
    CHECK_FALSE(z.entries[0].diverging);

    auto c = large_derivatives_report(chebyshev(), 3);
    CHECK(c.entries[0].derivatives == std::vector<double>{4, 16, 64});

    // critical orbit leaves the escape disk
    auto esc = MapSpec::complex_polynomial({1.0, 0.0, 1.0});
    CHECK_THROWS_AS(large_derivatives_report(esc, 20), EscapeError);
}

TEST_CASE("periodic points by Newton") {
    auto p = find_periodic_point(chebyshev(), 1, 0.7);
    CHECK_THAT(p.point.real(), WithinAbs(0.75, 1e-12));
    CHECK_THAT(p.multiplier.real(), WithinAbs(-2.0, 1e-10));

    auto q = find_periodic_point(zsq(), 1, cplx(0.9));
    CHECK(std::abs(q.point - 1.0) < 1e-12);
    CHECK(std::abs(q.multiplier - 2.0) < 1e-10);

    auto r = find_periodic_point(cheb2(), 1, 1.9);
    CHECK_THAT(r.point.real(), WithinAbs(2.0, 1e-12));
    CHECK_THAT(r.multiplier.real(), WithinAbs(4.0, 1e-10));

    // period two orbit of x^2 - 2: roots of x^2 + x - 1
    auto s = find_periodic_point(cheb2(), 2, 0.6);
    CHECK_THAT(s.point.real(), WithinAbs((std::sqrt(5.0) - 1) / 2, 1e-12));
}

TEST_CASE("chain rule on random orbit segments") {
    std::mt19937_64 g(11);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto f = chebyshev();
    auto z = zsq(cplx(-0.12, 0.75));
    double worst = 0;
    for (int k = 0; k < 10000; ++k) {
        int m = 1 + int(g() % 8), n = 1 + int(g() % 8);
        const MapSpec& F = (k % 2) ? f : z;
        cplx x = (k % 2) ? cplx(U(g), 0) : cplx(0.2 * U(g) - 0.1, 0.2 * U(g) - 0.1);
        auto o = orbit(F, x, m + n);
        auto tail = orbit(F, o.points[std::size_t(m)], n);
        double lhs = o.derivative[std::size_t(m + n)];
        double rhs = tail.derivative[std::size_t(n)] * o.derivative[std::size_t(m)];
        if (lhs > 0) worst = std::max(worst, std::abs(lhs - rhs) / lhs);
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("preimages invert the map") {
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    auto cub = MapSpec::complex_polynomial({cplx(0.2, 0.1), 0.0, cplx(-0.3, 0), 1.0});
    for (int k = 0; k < 200; ++k) {
        cplx w(U(g), U(g));
        auto r = preimages(cub, w);
        REQUIRE(r.size() == 3);
        for (auto z : r) CHECK(std::abs(cub(z) - w) <= 1e-10 * cub.scale());
        double x = 2.0 * U(g);
        for (auto z : preimages(cheb2(), x)) CHECK(std::abs(cheb2()(z.real()) - x) <= 1e-12 * 4);
    }
}

TEST_CASE("map construction from config keys") {
    auto f = parse_map({{"map.kind", "real-polynomial"}, {"map.coefficients", "0, 4, -4"}, {"map.domain", "0, 1"}});
    CHECK(f.is_real());
    CHECK(f(0.5) == 1.0);
    auto z = parse_map({{"map.kind", "complex-polynomial"}, {"map.coefficients", "-0.12+0.75i, 0, 1"}});
    CHECK(z.coefficients()[0] == cplx(-0.12, 0.75));
    auto w = parse_map({{"map.kind", "complex-polynomial"}, {"map.coefficients", "(1,-2), 2i, 1"}});
    CHECK(w.coefficients()[0] == cplx(1, -2));
    CHECK(w.coefficients()[1] == cplx(0, 2));
    try {
        parse_map({{"map.kind", "real-polynomial"}});
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("map.coefficients") != std::string::npos);
        CHECK(msg.find("map.domain") != std::string::npos);
    }
}
