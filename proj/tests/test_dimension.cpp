#include <catch_amalgamated.hpp>

#include <dynlab/dimension.hpp>
#include <dynlab/measures.hpp>

#include <cmath>
#include <sstream>

using namespace dynlab;
using Catch::Matchers::WithinAbs;

namespace {
MapSpec cheb2() { return MapSpec::real_polynomial({-2.0, 0.0, 1.0}, -2.0, 2.0); }
MapSpec zquad(cplx c) { return MapSpec::complex_polynomial({c, 0.0, 1.0}); }

std::vector<double> dyadic(double top, int k0, int k1) {
    std::vector<double> s;
    for (int k = k0; k <= k1; ++k) s.push_back(std::ldexp(top, -k));
    return s;
}

std::vector<double> sgrid() {
    std::vector<double> g;
    for (int i = 0; i <= 15; ++i) g.push_back(0.5 + 0.1 * i);
    return g;
}
}  // namespace

TEST_CASE("Julia samples lie on the Julia set") {
    auto S = julia_sample(zquad(0.0), 20000, 30, 1);
    REQUIRE(S.points.size() == 20000);
    CHECK(S.method == "inverse-iteration");
    for (auto z : S.points) CHECK(std::abs(std::abs(z) - 1.0) <= 1e-8);

    auto Q = julia_sample(cheb2(), 20000, 30, 2);
    for (auto z : Q.points) {
        CHECK(z.imag() == 0.0);
        CHECK(z.real() >= -2.0);
        CHECK(z.real() <= 2.0);
    }

    // basilica points stay bounded under forward iteration
    auto f = zquad(-1.0);
    auto B = julia_sample(f, 2000, 40, 3);
    for (auto z : B.points) {
        for (int k = 0; k < 20; ++k) z = f(z);
        CHECK(std::abs(z) <= f.escape_radius());
    }

    auto one = julia_sample(cheb2(), 1, 1, 4);
    REQUIRE(one.points.size() == 1);
    // one step back from the fixed point -1: either -1 itself or 1
    CHECK_THAT(cheb2()(one.points[0].real()), WithinAbs(one.start.real(), 1e-12));
}

TEST_CASE("Julia samples are reproducible by seed and worker count") {
    auto f = zquad(-1.0);
    auto a = julia_sample(f, 500, 25, 9, 1);
    auto b = julia_sample(f, 500, 25, 9, 3);
    auto c = julia_sample(f, 500, 25, 10, 1);
    CHECK(a.points == b.points);
    CHECK(a.points != c.points);
}

TEST_CASE("the start point avoids critical orbits") {
    // 2 is the most repelling fixed point of x^2 - 2 but lies on the critical orbit
    CHECK_THAT(repelling_fixed_point(cheb2()).point.real(), WithinAbs(-1.0, 1e-12));
    CHECK_THAT(std::abs(repelling_fixed_point(zquad(0.0)).point - cplx(1.0, 0.0)), WithinAbs(0.0, 1e-12));
}

TEST_CASE("box counting dimension") {
    auto circle = julia_sample(zquad(0.0), 200000, 30, 1);
    auto r = box_dimension(circle, dyadic(2.0, 3, 10));
    CHECK_THAT(r.dimension, WithinAbs(1.0, 0.05));
    CHECK_FALSE(r.undersampled);
    for (std::size_t i = 1; i < r.counts.size(); ++i) CHECK(r.counts[i] >= r.counts[i - 1]);

    auto line = julia_sample(cheb2(), 200000, 30, 1);
    auto q = box_dimension(line, dyadic(4.0, 2, 11));
    CHECK_THAT(q.dimension, WithinAbs(1.0, 0.03));

    // finitely many points: counts saturate and the fine-scale slope vanishes
    JuliaSample pts;
    pts.method = "fixed";
    for (int k = 0; k < 10; ++k) pts.points.emplace_back(0.1 * k, 0.05 * k);
    auto fine = box_dimension(pts, dyadic(1e-3, 0, 6));
    CHECK_THAT(fine.dimension, WithinAbs(0.0, 1e-12));
    CHECK(fine.undersampled);

    CHECK_THROWS_AS(box_dimension(circle, {0.1, 0.05}), PreconditionError);
}

TEST_CASE("escape-time scan") {
    auto z = escape_time_dimension(zquad(0.0), 4, 12);
    CHECK_THAT(z.dimension, WithinAbs(1.0, 0.05));
    for (std::size_t i = 1; i < z.counts.size(); ++i) CHECK(z.counts[i] >= z.counts[i - 1]);
    auto b = escape_time_dimension(zquad(-1.0), 4, 12);
    CHECK(b.dimension > 1.0);
    CHECK(b.dimension < 1.5);
    CHECK_THROWS_AS(escape_time_dimension(cheb2(), 4, 12), PreconditionError);
    CHECK_THROWS_AS(escape_time_dimension(zquad(0.0), 4, 6), PreconditionError);
}

TEST_CASE("Poincare exponent and box dimension agree") {
    auto s = sgrid();
    auto pz = poincare_exponent(poincare_series(zquad(0.0), 1.0, s, 14));
    auto bz = box_dimension(julia_sample(zquad(0.0), 200000, 30, 1), dyadic(2.0, 3, 10));
    CHECK(std::abs(pz.estimate - bz.dimension) <= 0.05);

    auto pq = poincare_exponent(poincare_series(cheb2(), cplx(0.3, 0.0), s, 16));
    auto bq = box_dimension(julia_sample(cheb2(), 200000, 30, 1), dyadic(4.0, 2, 11));
    CHECK(std::abs(pq.estimate - bq.dimension) <= 0.05);

    auto pb = poincare_exponent(poincare_series(zquad(-1.0), cplx(1.0, 0.0), s, 16));
    auto bb = escape_time_dimension(zquad(-1.0), 4, 12);
    CHECK(std::abs(pb.estimate - bb.dimension) <= 0.05);
}

TEST_CASE("Moran bracket") {
    auto h = hyperbolic_dimension_lb(std::vector<BranchBound>{{3.0, 3.0}, {3.0, 3.0}});
    REQUIRE(h.defined);
    CHECK_THAT(h.lower, WithinAbs(std::log(2.0) / std::log(3.0), 1e-12));
    CHECK_THAT(h.upper, WithinAbs(std::log(2.0) / std::log(3.0), 1e-12));

    auto single = hyperbolic_dimension_lb(std::vector<BranchBound>{{3.0, 3.0}});
    CHECK_FALSE(single.defined);
    CHECK(single.lower == 0.0);
    CHECK_FALSE(single.flag.empty());

    auto weak = hyperbolic_dimension_lb(std::vector<BranchBound>{{0.9, 2.0}, {3.0, 3.0}});
    CHECK_FALSE(weak.defined);

    // adding branches never lowers the lower end
    std::vector<BranchBound> bs{{4.0, 5.0}, {6.0, 7.5}};
    double prev = hyperbolic_dimension_lb(bs).lower;
    for (double a : {8.0, 3.5, 20.0, 11.0}) {
        bs.push_back({a, a * 1.2});
        auto next = hyperbolic_dimension_lb(bs);
        CHECK(next.lower >= prev);
        CHECK(next.upper >= next.lower);
        prev = next.lower;
    }
}

TEST_CASE("hyperbolic dimension of the x^2 - 2 induced system") {
    auto f = cheb2();
    auto cp = construct_nice_couple(f, 0.15, 3.0, 12);
    auto F = build_induced_map<RealSpace>(f, cp, 20);
    auto br = F.branches;
    std::stable_sort(br.begin(), br.end(), [](const auto& a, const auto& b) { return a.region.length() > b.region.length(); });
    br.resize(50);
    auto h = hyperbolic_dimension_lb<RealSpace>(f, br);
    REQUIRE(h.defined);
    CHECK(h.lower >= 0.9);
    CHECK(h.upper >= h.lower);
    CHECK(h.upper <= 1.0 + 1e-9);

    // monotone under adding branches
    auto fewer = br;
    fewer.resize(25);
    CHECK(hyperbolic_dimension_lb<RealSpace>(f, fewer).lower <= h.lower);

    auto overlap = br;
    overlap.push_back(br[0]);
    CHECK_THROWS_AS(hyperbolic_dimension_lb<RealSpace>(f, overlap), PreconditionError);
}

TEST_CASE("scale table csv") {
    auto r = escape_time_dimension(zquad(0.0), 2, 7);
    std::ostringstream os;
    write_counts_csv(os, r);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "scale,count");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 6);
}
