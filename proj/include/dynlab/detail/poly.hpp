#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "../error.hpp"

namespace dynlab::detail {

using cplx = std::complex<double>;

// coefficients in ascending powers: c[0] + c[1] x + ...
template <class T, class X>
X horner(const std::vector<T>& c, X x) {
    X acc = X(0);
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + X(*it);
    return acc;
}

template <class T>
std::vector<T> differentiate(const std::vector<T>& c) {
    std::vector<T> d;
    for (std::size_t k = 1; k < c.size(); ++k) d.push_back(c[k] * T(double(k)));
    if (d.empty()) d.push_back(T(0));
    return d;
}

// value and first derivative in one pass
template <class T, class X>
std::pair<X, X> horner2(const std::vector<T>& c, X x) {
    X p = X(0), dp = X(0);
    for (auto it = c.rbegin(); it != c.rend(); ++it) {
        dp = dp * x + p;
        p = p * x + X(*it);
    }
    return {p, dp};
}

inline std::vector<cplx> trim(std::vector<cplx> c) {
    while (c.size() > 1 && std::abs(c.back()) == 0.0) c.pop_back();
    return c;
}

inline cplx newton_polish(const std::vector<cplx>& c, cplx z, int steps = 3) {
    for (int i = 0; i < steps; ++i) {
        auto [p, dp] = horner2(c, z);
        if (std::abs(dp) == 0.0) break;
        cplx step = p / dp;
        if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) break;
        z -= step;
        if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(z))) break;
    }
    return z;
}

// All complex roots with multiplicity. Closed form for degree <= 2,
// Aberth-Ehrlich otherwise.
inline std::vector<cplx> roots(std::vector<cplx> c) {
    c = trim(std::move(c));
    const int n = int(c.size()) - 1;
    if (n <= 0) return {};
    if (n == 1) return {-c[0] / c[1]};
    if (n == 2) {
        cplx a = c[2], b = c[1], cc = c[0];
        cplx disc = std::sqrt(b * b - 4.0 * a * cc);
        // pick the sign that avoids cancellation
        cplx q = (std::real(std::conj(b) * disc) >= 0.0) ? -0.5 * (b + disc) : -0.5 * (b - disc);
        if (std::abs(q) == 0.0) return {cplx(0), cplx(0)};
        return {q / a, cc / q};
    }
    // Cauchy-type bound for the initial circle
    double bound = 0.0;
    for (int k = 0; k < n; ++k) bound = std::max(bound, std::abs(c[k] / c[n]));
    double radius = 1.0 + bound;
    std::vector<cplx> z(n);
    for (int k = 0; k < n; ++k) {
        double ang = 2.0 * std::numbers::pi * (k + 0.25) / n + 0.4;
        z[k] = 0.5 * radius * cplx(std::cos(ang), std::sin(ang));
    }
    for (int it = 0; it < 500; ++it) {
        double worst = 0.0;
        for (int k = 0; k < n; ++k) {
            auto [p, dp] = horner2(c, z[k]);
            if (std::abs(p) == 0.0) continue;
            cplx ratio = p / dp;
            cplx s = 0.0;
            for (int j = 0; j < n; ++j)
                if (j != k) s += 1.0 / (z[k] - z[j]);
            cplx w = ratio / (1.0 - ratio * s);
            if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) w = ratio;
            z[k] -= w;
            worst = std::max(worst, std::abs(w) / std::max(1.0, std::abs(z[k])));
        }
        if (worst < 1e-15) break;
    }
    for (auto& r : z) r = newton_polish(c, r);
    return z;
}

inline std::vector<cplx> roots(const std::vector<double>& c) {
    std::vector<cplx> cc(c.begin(), c.end());
    return roots(std::move(cc));
}

// Group nearly equal roots; returns (root, multiplicity).
inline std::vector<std::pair<cplx, int>> cluster(const std::vector<cplx>& r, double tol) {
    std::vector<std::pair<cplx, int>> out;
    for (const auto& z : r) {
        bool merged = false;
        for (auto& [w, m] : out) {
            if (std::abs(z - w) <= tol) {
                w = (w * double(m) + z) / double(m + 1);
                ++m;
                merged = true;
                break;
            }
        }
        if (!merged) out.emplace_back(z, 1);
    }
    return out;
}

// Bisection for a monotone function on [a, b] with g(a), g(b) of opposite
// sign (or zero). Runs until the bracket cannot shrink further.
template <class G>
double bisect(G&& g, double a, double b) {
    double ga = g(a);
    if (ga == 0.0) return a;
    double gb = g(b);
    if (gb == 0.0) return b;
    for (int i = 0; i < 200; ++i) {
        double m = 0.5 * (a + b);
        if (m <= std::min(a, b) || m >= std::max(a, b)) break;
        double gm = g(m);
        if (gm == 0.0) return m;
        if ((gm < 0) == (ga < 0)) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    return 0.5 * (a + b);
}

}  // namespace dynlab::detail
