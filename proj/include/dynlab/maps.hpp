#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "detail/poly.hpp"
#include "error.hpp"

namespace dynlab {

using cplx = std::complex<double>;

enum class MapKind { real_polynomial, complex_polynomial };

struct CriticalPoint {
    cplx location;
    int order = 2;  // local degree
    bool in_julia = false;
};

struct OrbitSegment {
    std::vector<cplx> points;       // z_0 .. z_n
    std::vector<double> derivative; // |Df^k(z_0)| for k = 0 .. n
};

class MapSpec {
public:
    static MapSpec real_polynomial(std::vector<double> coeffs, double lo, double hi) {
        while (coeffs.size() > 1 && coeffs.back() == 0.0) coeffs.pop_back();
        if (coeffs.size() < 3) throw PreconditionError("real polynomial map needs degree >= 2");
        if (!(lo < hi)) throw PreconditionError("real domain must satisfy lo < hi");
        MapSpec m;
        m.kind_ = MapKind::real_polynomial;
        m.real_ = coeffs;
        m.coef_.assign(coeffs.begin(), coeffs.end());
        m.lo_ = lo;
        m.hi_ = hi;
        m.finish();
        return m;
    }

    static MapSpec complex_polynomial(std::vector<cplx> coeffs) {
        coeffs = detail::trim(std::move(coeffs));
        if (coeffs.size() < 3) throw PreconditionError("complex polynomial map needs degree >= 2");
        MapSpec m;
        m.kind_ = MapKind::complex_polynomial;
        m.coef_ = coeffs;
        m.finish();
        return m;
    }

    MapKind kind() const { return kind_; }
    bool is_real() const { return kind_ == MapKind::real_polynomial; }
    int degree() const { return int(coef_.size()) - 1; }
    const std::vector<cplx>& coefficients() const { return coef_; }
    const std::vector<double>& real_coefficients() const { return real_; }
    double domain_lo() const { return lo_; }
    double domain_hi() const { return hi_; }
    double escape_radius() const { return escape_; }
    // length scale used for tolerances
    double scale() const { return is_real() ? hi_ - lo_ : escape_; }

    const std::vector<CriticalPoint>& critical_points() const { return crit_; }

    // critical points lying in the Julia set
    std::vector<CriticalPoint> julia_critical_points() const {
        std::vector<CriticalPoint> out;
        for (const auto& c : crit_)
            if (c.in_julia) out.push_back(c);
        return out;
    }

    int max_order() const {
        int l = 0;
        for (const auto& c : crit_)
            if (c.in_julia) l = std::max(l, c.order);
        return l;
    }

    // lap endpoints of a real map: domain ends and interior critical points
    const std::vector<double>& laps() const { return laps_; }

    double operator()(double x) const { return detail::horner(real_, x); }
    cplx operator()(cplx z) const { return detail::horner(coef_, z); }
    double deriv(double x) const { return detail::horner(dreal_, x); }
    cplx deriv(cplx z) const { return detail::horner(dcoef_, z); }

    bool in_domain(double x) const {
        double tol = 1e-12 * scale();
        return x >= lo_ - tol && x <= hi_ + tol;
    }
    bool in_domain(cplx z) const {
        if (is_real()) return std::abs(z.imag()) <= 1e-12 * scale() && in_domain(z.real());
        return std::abs(z) <= escape_;
    }

    // override the Julia-set classification of critical point i
    void set_critical_in_julia(std::size_t i, bool v) { crit_.at(i).in_julia = v; }

    std::string describe() const {
        std::ostringstream os;
        os << (is_real() ? "real-polynomial" : "complex-polynomial") << " deg " << degree();
        return os.str();
    }

private:
    void finish() {
        dcoef_ = detail::differentiate(coef_);
        if (is_real()) dreal_ = detail::differentiate(real_);
        double sum = 0;
        for (const auto& a : coef_) sum += std::abs(a);
        escape_ = 2.0 * std::max(1.0, sum / std::abs(coef_.back()));
        auto r = detail::roots(dcoef_);
        double tol = 1e-7 * std::max(1.0, scale_guess());
        for (auto [z, mult] : detail::cluster(r, tol)) {
            if (is_real()) {
                if (std::abs(z.imag()) > 1e-9 * scale_guess()) continue;
                double x = z.real();
                if (!(x > lo_ && x < hi_)) continue;
                z = cplx(x, 0.0);
            }
            crit_.push_back({z, mult + 1, false});
        }
        std::sort(crit_.begin(), crit_.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
            if (a.location.real() != b.location.real()) return a.location.real() < b.location.real();
            return a.location.imag() < b.location.imag();
        });
        for (auto& c : crit_) c.in_julia = classify(c.location);
        if (is_real()) {
            laps_.push_back(lo_);
            for (const auto& c : crit_) laps_.push_back(c.location.real());
            laps_.push_back(hi_);
        }
    }

    double scale_guess() const { return is_real() ? hi_ - lo_ : 1.0; }

    // Iterate the critical orbit; escape or convergence to an attracting
    // cycle puts it in the Fatou set, anything else counts as Julia.
    bool classify(cplx z) const {
        const int steps = 4000;
        for (int i = 0; i < steps; ++i) {
            z = (*this)(z);
            if (!std::isfinite(z.real()) || std::abs(z) > escape_) return false;
            if (is_real() && (z.real() < lo_ - 1e-9 * scale() || z.real() > hi_ + 1e-9 * scale()))
                return false;
        }
        for (int p = 1; p <= 64; ++p) {
            cplx w = z, d = 1.0;
            for (int k = 0; k < p; ++k) {
                d *= deriv(w);
                w = (*this)(w);
            }
            if (std::abs(w - z) <= 1e-9 * std::max(1.0, std::abs(z))) return std::abs(d) >= 1.0 - 1e-9;
        }
        return true;
    }

    MapKind kind_ = MapKind::real_polynomial;
    std::vector<cplx> coef_, dcoef_;
    std::vector<double> real_, dreal_;
    double lo_ = 0, hi_ = 0, escape_ = 0;
    std::vector<CriticalPoint> crit_;
    std::vector<double> laps_;
};

inline double evaluate(const MapSpec& f, double x) {
    if (!f.in_domain(x)) throw DomainViolation("point " + std::to_string(x) + " outside the real domain");
    return f(x);
}

inline cplx evaluate(const MapSpec& f, cplx z) {
    if (!f.in_domain(z)) throw DomainViolation("point outside the map domain");
    return f.is_real() ? cplx(f(z.real()), 0.0) : f(z);
}

// |Df^n(x)| by the chain rule
inline double derivative(const MapSpec& f, cplx z, int n) {
    double d = 1.0;
    for (int k = 0; k < n; ++k) {
        if (!f.in_domain(z)) throw EscapeError("orbit escaped before derivative was complete", k);
        d *= std::abs(f.deriv(z));
        z = f(z);
    }
    return d;
}

inline OrbitSegment orbit(const MapSpec& f, cplx z, int n) {
    OrbitSegment o;
    o.points.push_back(z);
    o.derivative.push_back(1.0);
    for (int k = 0; k < n; ++k) {
        if (!f.in_domain(z)) throw EscapeError("orbit escaped", k);
        o.derivative.push_back(o.derivative.back() * std::abs(f.deriv(z)));
        z = f(z);
        o.points.push_back(z);
    }
    return o;
}

struct LargeDerivativesEntry {
    cplx critical_point;
    bool in_julia = false;
    cplx critical_value;
    std::vector<double> derivatives;  // |Df^n(v)|, n = 1 .. horizon
    bool diverging = false;
};

struct LargeDerivativesReport {
    std::vector<LargeDerivativesEntry> entries;
    bool holds = true;  // every Julia critical value diverges
};

// Derivative growth along the critical values f(c). A value is flagged as
// diverging when |Df^n(v)| at the horizon exceeds both `threshold` and the
// first value.
inline LargeDerivativesReport large_derivatives_report(const MapSpec& f, int horizon, double threshold = 10.0) {
    LargeDerivativesReport rep;
    for (const auto& c : f.critical_points()) {
        LargeDerivativesEntry e;
        e.critical_point = c.location;
        e.in_julia = c.in_julia;
        e.critical_value = f(c.location);
        cplx z = e.critical_value;
        double d = 1.0;
        for (int n = 1; n <= horizon; ++n) {
            if (!f.in_domain(z)) throw EscapeError("critical orbit escaped", n);
            d *= std::abs(f.deriv(z));
            z = f(z);
            e.derivatives.push_back(d);
        }
        e.diverging = !e.derivatives.empty() && e.derivatives.back() > threshold &&
                      e.derivatives.back() > e.derivatives.front();
        if (c.in_julia && !e.diverging) rep.holds = false;
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

struct PeriodicPoint {
    cplx point;
    int period = 1;
    cplx multiplier;
};

// Newton on f^p(z) - z.
inline PeriodicPoint find_periodic_point(const MapSpec& f, int period, cplx seed) {
    if (period < 1) throw PreconditionError("period must be >= 1");
    cplx z = f.is_real() ? cplx(seed.real(), 0.0) : seed;
    const double tol = 1e-12 * f.scale();
    for (int it = 0; it < 200; ++it) {
        cplx w = z, d = 1.0;
        for (int k = 0; k < period; ++k) {
            d *= f.deriv(w);
            w = f(w);
            if (!std::isfinite(std::abs(w))) throw NoConvergence("periodic point search diverged");
        }
        cplx g = w - z;
        if (std::abs(g) <= tol) {
            return {z, period, d};
        }
        cplx step = g / (d - 1.0);
        if (!std::isfinite(std::abs(step))) throw NoConvergence("periodic point search hit a flat spot");
        z -= step;
        if (f.is_real()) z = cplx(z.real(), 0.0);
    }
    throw NoConvergence("periodic point search did not converge within 200 Newton steps");
}

// All preimages of w with multiplicity. Real maps: one per lap crossing, with
// a root at a critical point reported once per adjacent lap.
inline std::vector<cplx> preimages(const MapSpec& f, cplx w) {
    std::vector<cplx> out;
    if (f.is_real()) {
        const auto& L = f.laps();
        double y = w.real();
        for (std::size_t k = 0; k + 1 < L.size(); ++k) {
            double a = L[k], b = L[k + 1];
            double fa = f(a), fb = f(b);
            if (y < std::min(fa, fb) || y > std::max(fa, fb)) continue;
            double x = detail::bisect([&](double t) { return f(t) - y; }, a, b);
            out.emplace_back(x, 0.0);
        }
        return out;
    }
    auto c = f.coefficients();
    c[0] -= w;
    auto r = detail::roots(c);
    for (auto& z : r) z = detail::newton_polish(c, z, 2);
    return r;
}

namespace detail {

inline std::string strip(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (strip(s.substr(pos)).empty()) return v;
    } catch (...) {
    }
    throw ConfigError("key '" + key + "': cannot parse number '" + s + "'");
}

// "a", "bi", "a+bi", "a-bi", "(a,b)"
inline cplx parse_complex(std::string s, const std::string& key) {
    s = strip(s);
    if (s.empty()) throw ConfigError("key '" + key + "': empty coefficient");
    if (s.front() == '(' && s.back() == ')') {
        auto comma = s.find(',');
        if (comma == std::string::npos) throw ConfigError("key '" + key + "': bad complex '" + s + "'");
        return {parse_double(s.substr(1, comma - 1), key), parse_double(s.substr(comma + 1, s.size() - comma - 2), key)};
    }
    if (s.back() != 'i') return {parse_double(s, key), 0.0};
    std::string body = s.substr(0, s.size() - 1);
    // split at the last sign that is not an exponent sign
    std::size_t split = std::string::npos;
    for (std::size_t k = body.size(); k-- > 1;) {
        if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E') {
            split = k;
            break;
        }
    }
    auto imag_of = [&](const std::string& t) {
        if (t.empty() || t == "+") return 1.0;
        if (t == "-") return -1.0;
        return parse_double(t, key);
    };
    if (split == std::string::npos) return {0.0, imag_of(body)};
    return {parse_double(body.substr(0, split), key), imag_of(body.substr(split))};
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char ch : s) {
        if (ch == '(') ++depth;
        if (ch == ')') --depth;
        if ((ch == ',' || ch == ';') && depth == 0) {
            out.push_back(strip(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!strip(cur).empty()) out.push_back(strip(cur));
    return out;
}

}  // namespace detail

// Builds a map from flat keys map.kind, map.coefficients (ascending powers)
// and map.domain (real maps only).
inline MapSpec parse_map(const std::map<std::string, std::string>& kv) {
    auto get = [&](const std::string& k) -> const std::string* {
        auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    std::vector<std::string> missing;
    const std::string* kind = get("map.kind");
    const std::string* coef = get("map.coefficients");
    if (!kind) missing.push_back("map.kind");
    if (!coef) missing.push_back("map.coefficients");
    if (kind && detail::strip(*kind) == "real-polynomial" && !get("map.domain")) missing.push_back("map.domain");
    if (!missing.empty()) {
        std::string msg = "missing config keys:";
        for (auto& m : missing) msg += " " + m;
        throw ConfigError(msg);
    }
    std::string k = detail::strip(*kind);
    auto toks = detail::split_list(*coef);
    MapSpec f;
    if (k == "real-polynomial") {
        std::vector<double> c;
        for (auto& t : toks) c.push_back(detail::parse_double(t, "map.coefficients"));
        auto dom = detail::split_list(*get("map.domain"));
        if (dom.size() != 2) throw ConfigError("key 'map.domain': expected 'lo, hi'");
        f = MapSpec::real_polynomial(c, detail::parse_double(dom[0], "map.domain"),
                                     detail::parse_double(dom[1], "map.domain"));
    } else if (k == "complex-polynomial") {
        std::vector<cplx> c;
        for (auto& t : toks) c.push_back(detail::parse_complex(t, "map.coefficients"));
        f = MapSpec::complex_polynomial(c);
    } else {
        throw ConfigError("key 'map.kind': expected real-polynomial or complex-polynomial, got '" + k + "'");
    }
    if (auto* j = get("map.critical_in_julia")) {
        auto flags = detail::split_list(*j);
        if (flags.size() != f.critical_points().size())
            throw ConfigError("key 'map.critical_in_julia': one flag per critical point expected");
        for (std::size_t i = 0; i < flags.size(); ++i) f.set_critical_in_julia(i, flags[i] == "1" || flags[i] == "true");
    }
    return f;
}

}  // namespace dynlab
