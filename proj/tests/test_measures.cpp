#include <catch_amalgamated.hpp>

#include <dynlab/inducing.hpp>
#include <dynlab/measures.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace dynlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const double pi = std::numbers::pi;
MapSpec chebyshev() { return MapSpec::real_polynomial({0.0, 4.0, -4.0}, 0.0, 1.0); }
MapSpec cheb2() { return MapSpec::real_polynomial({-2.0, 0.0, 1.0}, -2.0, 2.0); }
MapSpec zquad(cplx c) { return MapSpec::complex_polynomial({c, 0.0, 1.0}); }

std::vector<double> grid(double a, double b, double h) {
    std::vector<double> g;
    for (double s = a; s <= b + 1e-9; s += h) g.push_back(s);
    return g;
}

// invariant density of 4x(1-x) averaged over [a, b]
double arcsine_bin(double a, double b) {
    return (2 / pi) * (std::asin(std::sqrt(b)) - std::asin(std::sqrt(a))) / (b - a);
}
}  // namespace

TEST_CASE("Poincare increments of z^2 are exact") {
    auto f = zquad(0.0);
    auto T = poincare_series(f, 1.0, {0.0, 1.0, 2.0}, 10);
    for (int n = 1; n <= 10; ++n) {
        const auto& inc = T.increments[std::size_t(n - 1)];
        // 2^n preimages, each with |Df^n| = 2^n
        CHECK(T.preimage_counts[std::size_t(n - 1)] == (1L << n));
        CHECK_THAT(inc[0], WithinRel(std::ldexp(1.0, n), 1e-12));
        CHECK_THAT(inc[1], WithinAbs(1.0, 1e-9));
        CHECK_THAT(inc[2], WithinRel(std::ldexp(1.0, -n), 1e-9));
        CHECK_THAT(T.partial_sums[std::size_t(n - 1)][1], WithinAbs(double(n), 1e-8));
    }
    CHECK(T.verdict[0] == "diverging");
    CHECK(T.verdict[1] == "marginal");
    CHECK(T.verdict[2] == "converging");
    CHECK(T.singular == 0);
}

TEST_CASE("Poincare increments at s = 0 count preimages") {
    auto f = zquad(cplx(-1.0, 0.0));
    auto T = poincare_series(f, cplx(0.5, 0.5), {0.0}, 8);
    for (int n = 1; n <= 8; ++n) CHECK_THAT(T.increments[std::size_t(n - 1)][0], WithinRel(std::ldexp(1.0, n), 1e-12));
    auto g = cheb2();
    auto R = poincare_series(g, cplx(0.3, 0.0), {0.0}, 8);
    for (int n = 1; n <= 8; ++n) CHECK(R.preimage_counts[std::size_t(n - 1)] == (1L << n));
}

TEST_CASE("Poincare exponent") {
    auto s = grid(0.5, 2.0, 0.1);
    auto e = poincare_exponent(poincare_series(zquad(0.0), 1.0, s, 14));
    CHECK(e.status == "estimate");
    CHECK_THAT(e.estimate, WithinAbs(1.0, 0.05));
    CHECK(e.hi - e.lo <= 0.2 + 1e-9);

    auto q = poincare_exponent(poincare_series(cheb2(), cplx(0.3, 0.0), s, 16));
    CHECK(q.status == "estimate");
    CHECK_THAT(q.estimate, WithinAbs(1.0, 0.1));

    auto above = poincare_exponent(poincare_series(zquad(0.0), 1.0, grid(1.5, 3.0, 0.5), 10));
    CHECK(above.status == "converged everywhere");
    auto below = poincare_exponent(poincare_series(zquad(0.0), 1.0, grid(0.2, 0.6, 0.2), 10));
    CHECK(below.status == "diverging everywhere");
}

TEST_CASE("Poincare series preconditions") {
    CHECK_THROWS_AS(poincare_series(zquad(0.0), 0.0, {1.0}, 4), PreconditionError);
    CHECK_THROWS_AS(poincare_series(cheb2(), cplx(3.0, 0.0), {1.0}, 4), PreconditionError);
    CHECK_THROWS_AS(poincare_series(cheb2(), cplx(0.3, 0.0), {}, 4), PreconditionError);
    // -2 is the critical value: its preimage tree runs through the critical point
    auto T = poincare_series(cheb2(), cplx(-2.0, 0.0), {1.0}, 3);
    CHECK(T.singular >= 1);
}

TEST_CASE("conformal measure of z^2 is arc length") {
    auto f = zquad(0.0);
    auto c = conformal_measure(f, 1.0, 1.0, 14);
    const auto& mu = c.measure;
    CHECK(mu.points.size() == 16384);
    CHECK_THAT(mu.total(), WithinAbs(1.0, 1e-12));
    for (auto z : mu.points) CHECK_THAT(std::abs(z), WithinAbs(1.0, 1e-9));
    CHECK(tv_distance_to_arclength(mu, 32) <= 0.02);
    REQUIRE_FALSE(c.residuals.empty());
    for (const auto& r : c.residuals) CHECK(r.exact_gap <= 1e-12);

    auto base = conformal_measure(f, 1.0, 1.0, 0);
    REQUIRE(base.measure.points.size() == 1);
    CHECK(base.measure.weights[0] == 1.0);
}

TEST_CASE("conformal measure of x^2 - 2") {
    auto f = cheb2();
    // exponent 1: mu(f(A)) = int_A |Df| dmu is solved by normalized length on [-2, 2]
    double prev = -1;
    for (int depth : {12, 14, 16}) {
        auto c = conformal_measure(f, 1.0, cplx(0.3, 0.0), depth);
        double m = mass_in(c.measure, {0.0, 1.0});
        CHECK_THAT(m, WithinAbs(0.5, 0.05));
        // stable across depths
        if (prev >= 0) CHECK_THAT(m, WithinAbs(prev, 5e-3));
        prev = m;
        for (const auto& r : c.residuals) {
            CHECK(r.exact_gap <= 1e-12);
            CHECK(r.residual <= 1e-3);
        }
    }
    // its push-forward average is the arcsine law, which gives [-1, 1] one third
    auto c = conformal_measure(f, 1.0, cplx(0.3, 0.0), 14);
    auto D = invariant_density(f, c.measure, 200, {4, 16, 64});
    double third = 0;
    for (int k = 4; k < 12; ++k) third += D.levels[1].nu_mass[std::size_t(k)];
    CHECK_THAT(third, WithinAbs(1.0 / 3.0, 0.02));
}

TEST_CASE("measure regularity") {
    auto circle = conformal_measure(zquad(0.0), 1.0, 1.0, 14).measure;
    std::vector<double> deltas;
    for (int k = 4; k <= 10; ++k) deltas.push_back(std::ldexp(1.0, -k));
    std::vector<cplx> centers;
    for (int j = 0; j < 16; ++j) centers.push_back(std::polar(1.0, 2 * pi * j / 16.0 + 0.1));
    auto r = measure_regularity(circle, 1.0, 0.1, deltas, centers);
    CHECK(r.pass);
    CHECK(r.excluded == 0);
    CHECK(r.worst_exponent >= 0.9);

    AtomMeasure point;
    point.points = {cplx(0.2, 0.0)};
    point.weights = {1.0};
    point.normalized = true;
    for (double eps : {0.01, 0.5, 0.99}) CHECK_FALSE(measure_regularity(point, 1.0, eps, deltas, {cplx(0.2, 0.0)}).pass);

    auto q = conformal_measure(cheb2(), 1.0, cplx(0.3, 0.0), 14).measure;
    std::vector<cplx> xs;
    for (double x : {-1.99, -1.5, -0.7, 0.0, 0.4, 1.3, 1.99}) xs.emplace_back(x, 0.0);
    CHECK(measure_regularity(q, 1.0, 0.3, deltas, xs).pass);

    AtomMeasure raw;
    raw.points = {0.0};
    raw.weights = {1.0};
    CHECK_THROWS_AS(measure_regularity(raw, 1.0, 0.1, deltas, {0.0}), PreconditionError);
}

TEST_CASE("invariant density of the Chebyshev map") {
    auto f = chebyshev();
    auto mu = uniform_measure(f, 100000);
    auto D = invariant_density(f, mu, 100);  // 10^7 effective samples
    CHECK(D.effective_samples == 1e7);
    CHECK_THAT(D.total_mass, WithinAbs(1.0, 1e-12));
    for (const auto& lev : D.levels) {
        double m = 0;
        for (double v : lev.nu_mass) m += v;
        CHECK_THAT(m, WithinAbs(1.0, 1e-12));
    }
    const auto& L = D.levels[1];  // 256 bins
    double worst = 0;
    for (int k = 0; k < L.bins; ++k) {
        double a = double(k) / L.bins, b = double(k + 1) / L.bins;
        if (a < 0.1 || b > 0.9) continue;
        worst = std::max(worst, std::abs(L.density[std::size_t(k)] / arcsine_bin(a, b) - 1));
    }
    CHECK(worst <= 0.10);

    // two routes to the invariant measure agree on 32 bins
    auto orbit = orbit_histogram(f, uniform_sampler(f), 32, 4'000'000, 11);
    CHECK(histogram_discrepancy(rebin(D.levels[1].nu_mass, 32), orbit) <= 0.05);
}

TEST_CASE("arc length is invariant under z^2") {
    auto mu = uniform_circle_measure(0.0, 1.0, 100000);
    auto D = invariant_density(zquad(0.0), mu, 16, {16, 32, 64});
    for (double d : D.levels[1].density) CHECK_THAT(d, WithinAbs(1.0, 0.02));
    CHECK(D.binning == "argument");
}

TEST_CASE("fixed atom is invariant") {
    auto f = cheb2();
    AtomMeasure mu;
    mu.points = {cplx(2.0, 0.0)};
    mu.weights = {1.0};
    mu.normalized = true;
    auto D = invariant_density(f, mu, 50, {8, 16, 32}, true);
    REQUIRE(D.measure.points.size() == 50);
    for (auto z : D.measure.points) CHECK(z == cplx(2.0, 0.0));
    CHECK_THAT(D.levels[0].nu_mass.back(), WithinAbs(1.0, 1e-12));
    CHECK_THROWS_AS(invariant_density(f, mu, 0), PreconditionError);
}

TEST_CASE("L^p regularity of the Chebyshev density") {
    auto f = chebyshev();
    auto D = invariant_density(f, uniform_measure(f, 100000), 100);
    auto rows = lp_regularity(D, {1.0, 1.5, 2.5});
    CHECK(rows[0].verdict == "stable");
    for (double I : rows[0].integrals) CHECK_THAT(I, WithinAbs(1.0, 1e-9));
    CHECK(rows[1].verdict == "stable");
    // int (pi^2 x(1-x))^(-3/4) dx = pi^(-3/2) B(1/4, 1/4)
    double exact = std::pow(pi, -1.5) * std::tgamma(0.25) * std::tgamma(0.25) / std::tgamma(0.5);
    CHECK_THAT(rows[1].integrals.back(), WithinRel(exact, 0.05));
    CHECK(rows[2].verdict == "diverging");

    auto coarse = invariant_density(f, uniform_measure(f, 1000), 4, {16, 256});
    CHECK_THROWS_AS(lp_regularity(coarse, {1.5}), PreconditionError);
}

TEST_CASE("push-forward bound probe") {
    auto f = chebyshev();
    auto mu = uniform_measure(f, 1'000'000);
    // n = 0 on a set away from the critical value: ratio is mu(A) / mu(f(A))^(1/q)
    TestSet A{cplx(0.3, 0.0), 0.05};
    auto P0 = pushforward_bound_probe(f, mu, 2.2, {A}, {0});
    REQUIRE(P0.rows.size() == 1);
    double fa = f(0.3 - 0.05), fb = f(0.3 + 0.05);
    CHECK_THAT(P0.rows[0].image_mass, WithinRel(fb - fa, 1e-9));
    CHECK_THAT(P0.rows[0].preimage_mass, WithinAbs(0.1, 1e-5));
    CHECK_THAT(P0.rows[0].ratio, WithinRel(P0.rows[0].preimage_mass / std::pow(fb - fa, 1 / 2.2), 1e-9));

    // sets shrinking to the critical value 1
    std::vector<TestSet> sets;
    for (double e : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4}) sets.push_back({cplx(1 - e / 2, 0.0), e / 2});
    std::vector<int> ns{0, 1, 2, 3, 5, 8, 10};
    auto hi = pushforward_bound_probe(f, mu, 2.2, sets, ns);
    CHECK(hi.verdict == "bounded");
    auto lo = pushforward_bound_probe(f, mu, 1.2, sets, ns);
    CHECK(lo.verdict == "growing");
    CHECK(lo.max_ratio > hi.max_ratio);

    // a set whose image misses the domain is excluded
    auto ex = pushforward_bound_probe(f, mu, 2.0, {TestSet{cplx(5.0, 0.0), 0.1}}, {0, 1});
    CHECK(ex.excluded == 2);
}

TEST_CASE("correlation decay") {
    auto f = chebyshev();
    auto nu = uniform_sampler(f);
    auto R = correlation_decay(f, nu, observables::cosine(), observables::cosine(), 20, 6'400'000, 7);
    REQUIRE(R.C.size() == 21);
    int first_floor = -1;
    for (int n = 1; n <= 20 && first_floor < 0; ++n)
        if (R.at_floor[std::size_t(n)]) first_floor = n;
    CHECK(first_floor >= 1);
    CHECK(first_floor <= 10);
    CHECK(R.fit.classification == "faster-than-polynomial");

    // C_0 against the variance of cos(pi x) under the arcsine law, by quadrature
    // in the angle coordinate x = sin^2(pi u / 2), u uniform on [0, 1]
    double m1 = 0, m2 = 0;
    const int N = 200000;
    for (int i = 0; i < N; ++i) {
        double u = (i + 0.5) / N, x = std::pow(std::sin(pi * u / 2), 2);
        m1 += std::cos(pi * x) / N;
        m2 += std::pow(std::cos(pi * x), 2) / N;
    }
    CHECK_THAT(R.C[0], WithinAbs(m2 - m1 * m1, 5 * R.sigma[0] + 1e-4));

    auto K = correlation_decay(f, nu, observables::constant(2.0), observables::cosine(), 10, 64000, 3);
    for (double c : K.C) CHECK_THAT(c, WithinAbs(0.0, 1e-12));

    // seeds and worker counts
    auto a = correlation_decay(f, nu, observables::coordinate(), observables::coordinate(), 8, 640000, 5, 1);
    auto b = correlation_decay(f, nu, observables::coordinate(), observables::coordinate(), 8, 640000, 5, 3);
    CHECK(a.C == b.C);
    CHECK(a.sigma == b.sigma);
    CHECK_THROWS_AS(correlation_decay(zquad(0.0), nu, observables::coordinate(), observables::coordinate(), 4, 1000, 1),
                    PreconditionError);
}

TEST_CASE("decay fitter calibration") {
    std::vector<double> C{1.0}, sig{0.0};
    for (int n = 1; n <= 50; ++n) {
        C.push_back(std::pow(double(n), -3.0));
        sig.push_back(0.0);
    }
    auto d = classify_decay(C, sig);
    CHECK(d.classification == "polynomial");
    CHECK_THAT(d.poly_exponent, WithinAbs(3.0, 0.1));

    std::vector<double> E{1.0};
    for (int n = 1; n <= 30; ++n) E.push_back(std::exp(-0.7 * n));
    auto e = classify_decay(E, std::vector<double>(31, 0.0));
    CHECK(e.classification == "faster-than-polynomial");
    CHECK_THAT(e.exp_rate, WithinAbs(0.7, 1e-9));
}

TEST_CASE("Delta and xi diagnostics") {
    auto f = cheb2();
    // critical orbit 0 -> -2 -> 2 -> 2: Delta at 0.3 is 2.3 up to m = 1, then 1.7
    auto D = delta_xi_diagnostics<RealSpace>(f, cplx(0.3, 0.0), {0, 1, 2, 4, 8}, 0.1);
    REQUIRE_FALSE(D.excluded);
    for (const auto& r : D.rows) {
        CHECK_THAT(r.Delta, WithinAbs(r.m <= 1 ? 2.3 : 1.7, 1e-12));
        CHECK(r.xi <= r.ball_diam * (1 + 1e-12));
    }
    CHECK_THAT(D.rows[0].xi, WithinAbs(D.rows[0].ball_diam, 1e-12));

    // Misiurewicz parameter: Delta is nonincreasing in m
    double a = -1.6975553932375478, beta = (1 + std::sqrt(1 - 4 * a)) / 2;
    auto g = MapSpec::real_polynomial({a, 0.0, 1.0}, -beta, beta);
    auto M = delta_xi_diagnostics<RealSpace>(g, cplx(0.1, 0.0), {1, 2, 3, 4, 5, 6, 8, 10}, 0.1);
    for (std::size_t i = 1; i < M.rows.size(); ++i) CHECK(M.rows[i].Delta <= M.rows[i - 1].Delta);

    // a point on the critical orbit is excluded
    CHECK(delta_xi_diagnostics<RealSpace>(f, cplx(2.0, 0.0), {1, 2}, 0.1).excluded);
}

TEST_CASE("Poincare series bound stays bounded") {
    auto f = cheb2();
    auto cp = construct_nice_couple(f, 0.05, 8.0, 12);
    const int M = 12;
    auto bad = enumerate_bad_pullbacks<RealSpace>(f, cp, M);
    auto L = xi_from(bad, 0.3);
    auto P = poincare_bound_probe<RealSpace>(f, cplx(0.3, 0.0), 1.2, 0.3, L.increments, M);
    REQUIRE_FALSE(P.excluded);
    CHECK(P.trend.verdict == "bounded");
    CHECK(P.trend.limit < 2 * P.ratio.back());
    for (std::size_t i = 1; i < P.lhs.size(); ++i) CHECK(P.lhs[i] >= P.lhs[i - 1]);

    // negative control: LHS inflated by m
    auto inflated = P.ratio;
    for (std::size_t i = 0; i < inflated.size(); ++i) inflated[i] *= double(P.depths[i]);
    CHECK(bounded_trend(P.depths, inflated).verdict == "growing");
}

TEST_CASE("atom table csv") {
    auto mu = uniform_measure(chebyshev(), 4);
    std::ostringstream os;
    write_atoms_csv(os, mu);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "re,im,weight");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 4);
}
