#pragma once

#include <cmath>
#include <complex>
#include <limits>

#include "error.hpp"

namespace dynlab {

// Open interval; an end may be closed when it is an endpoint of a map's
// domain (pull-backs are relatively open in the domain).
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool closed_lo = false;
    bool closed_hi = false;
    double length() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double x) const { return (x > lo || (closed_lo && x == lo)) && (x < hi || (closed_hi && x == hi)); }
    bool contains(const Interval& o) const { return o.lo >= lo && o.hi <= hi; }
};

// inner sits strictly inside outer
struct IntervalPair {
    Interval outer;
    Interval inner;
};

struct Disk {
    std::complex<double> center;
    double radius = 0.0;
};

struct ModulusValue {
    double value = 0.0;
    bool lower_bound = false;  // true when only a bound is known
};

// Cr(I, J) = |I||J| / (|L||R|), L and R the components of I \ J
inline double cross_ratio(const Interval& I, const Interval& J) {
    if (!(I.lo < I.hi) || !(J.lo < J.hi)) throw DegeneratePair("empty interval in cross ratio");
    double L = J.lo - I.lo, R = I.hi - J.hi;
    if (!(L > 0.0) || !(R > 0.0)) throw DegeneratePair("closure of the inner interval must lie inside the outer one");
    return I.length() * J.length() / (L * R);
}

inline double cross_ratio(const IntervalPair& p) { return cross_ratio(p.outer, p.inner); }

// mmod(I; J) = 2 log(sqrt(Cr^-1) + sqrt(1 + Cr^-1))
inline ModulusValue interval_modulus(const Interval& I, const Interval& J) {
    double inv = 1.0 / cross_ratio(I, J);
    return {2.0 * std::log(std::sqrt(inv) + std::sqrt(1.0 + inv)), false};
}

inline ModulusValue interval_modulus(const IntervalPair& p) { return interval_modulus(p.outer, p.inner); }

// Round annulus when concentric. Otherwise the bound from the inclusion
// B(c_in, r_in) in B(c_out, r_in + d), which is all downstream code needs.
inline ModulusValue disk_modulus(const Disk& outer, const Disk& inner) {
    double d = std::abs(inner.center - outer.center);
    if (!(inner.radius > 0.0)) throw ContainmentError("inner disk has no interior");
    if (d + inner.radius > outer.radius * (1.0 + 1e-15))
        throw ContainmentError("inner disk is not contained in the outer disk");
    double v = std::max(0.0, std::log(outer.radius / (inner.radius + d)));
    return {v, d > 0.0};
}

}  // namespace dynlab
