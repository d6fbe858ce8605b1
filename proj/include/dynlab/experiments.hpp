#pragma once

#include <dynlab/config.hpp>
#include <dynlab/dimension.hpp>
#include <dynlab/inducing.hpp>
#include <dynlab/measures.hpp>
#include <dynlab/nice.hpp>
#include <dynlab/pullback.hpp>

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace dynlab {

using json = nlohmann::json;

struct Outcome {
    json values = json::object();
    std::string verdict = "undetermined";
    std::string reason;
    json truncation = {{"truncated", false}};
    std::map<std::string, std::string> tables;  // name -> csv text
};

// report: the JSON document; tables: CSV side tables keyed by name
struct ReportRecord {
    json report;
    std::map<std::string, std::string> tables;

    std::string verdict() const { return report.value("verdict", "undetermined"); }
    bool has_data() const { return report.contains("values") && !report["values"].empty(); }
};

inline std::string timestamp_now() {
    // reports stay reproducible: the clock is read only through SOURCE_DATE_EPOCH
    const char* e = std::getenv("SOURCE_DATE_EPOCH");
    if (!e) return "";
    std::time_t t = std::time_t(std::strtoll(e, nullptr, 10));
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace detail {

template <class Fn>
Outcome on_space(const MapSpec& f, Fn&& fn) {
    if (f.is_real()) return fn(RealSpace{});
    return fn(ComplexSpace{});
}

inline json cjson(cplx z) { return json::array({z.real(), z.imag()}); }

inline std::vector<int> ints(const std::vector<double>& v) {
    std::vector<int> out;
    for (double x : v) out.push_back(int(std::lround(x)));
    return out;
}

inline json truncation_of(const WalkStats& s) {
    return {{"truncated", s.truncated}, {"nodes", s.nodes}, {"unexplored", s.unexplored},
            {"unexplored_mass", s.unexplored_mass}};
}

inline NiceCouple couple_of(const MapSpec& f, const ExperimentConfig& c) {
    return construct_nice_couple(f, c.number("nice.delta"), c.number("nice.r"), int(c.integer("nice.horizon", 12)));
}

inline json couple_json(const NiceCouple& cp) {
    json j = json::array();
    for (std::size_t i = 0; i < cp.inner.components.size(); ++i) {
        const auto& a = cp.inner.components[i];
        const auto& b = cp.outer.components[i];
        if (cp.inner.real)
            j.push_back({{"inner", {a.interval.lo, a.interval.hi}}, {"outer", {b.interval.lo, b.interval.hi}}});
        else
            j.push_back({{"center", cjson(a.disk.center)}, {"inner_radius", a.disk.radius}, {"outer_radius", b.disk.radius}});
    }
    return j;
}

inline std::uint64_t seed_of(const ExperimentConfig& c) {
    return std::uint64_t(std::strtoull(c.at("experiment.seed").c_str(), nullptr, 10));
}

inline std::vector<double> dyadic_scales(double top, int k0, int k1) {
    std::vector<double> s;
    for (int k = k0; k <= k1; ++k) s.push_back(std::ldexp(top, -k));
    return s;
}

// Base points for the shrinking measurement: one level of the backward tree
// of a repelling fixed point, thinned evenly to n points.
inline std::vector<cplx> tree_points(const MapSpec& f, std::size_t n, int workers) {
    cplx x0 = repelling_fixed_point(f).point;
    int d = 0;
    double size = 1;
    while (size < double(n)) {
        size *= double(f.degree());
        ++d;
    }
    long singular = 0;
    auto levels = backward_tree(f, x0, d, workers, singular);
    const auto& pts = levels.back().points;
    std::vector<cplx> out;
    for (std::size_t i = 0; i < std::min(n, pts.size()); ++i) out.push_back(pts[i * pts.size() / std::min(n, pts.size())]);
    return out;
}

// "x", "cos", "cos(k)", "sin(k)", "const(c)", "ind(a,b,w)"
inline Observable parse_observable(const std::string& text, const std::string& key) {
    std::string s = strip(text);
    std::string name = s, args;
    auto open = s.find('(');
    if (open != std::string::npos) {
        if (s.back() != ')') throw ConfigError("key '" + key + "': bad observable '" + s + "'");
        name = strip(s.substr(0, open));
        args = s.substr(open + 1, s.size() - open - 2);
    }
    std::vector<double> a;
    for (auto& t : split_list(args)) a.push_back(parse_double(t, key));
    auto arity = [&](std::size_t lo, std::size_t hi) {
        if (a.size() < lo || a.size() > hi) throw ConfigError("key '" + key + "': wrong arguments for " + name);
    };
    if (name == "x") {
        arity(0, 0);
        return observables::coordinate();
    }
    if (name == "cos" || name == "sin") {
        arity(0, 1);
        double k = a.empty() ? 1.0 : a[0];
        return name == "cos" ? observables::cosine(k) : observables::sine(k);
    }
    if (name == "const") {
        arity(0, 1);
        return observables::constant(a.empty() ? 1.0 : a[0]);
    }
    if (name == "ind") {
        arity(3, 3);
        return observables::smooth_indicator(a[0], a[1], a[2]);
    }
    throw ConfigError("key '" + key + "': unknown observable '" + name + "'");
}

template <class T>
std::string csv(const std::string& header, const std::vector<std::vector<T>>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << header << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << '\n';
    }
    return os.str();
}

// ---- experiments ----

inline Outcome run_shrinking(const MapSpec& f, const ExperimentConfig& c, int workers) {
    double rho = c.number("params.rho");
    auto depths = ints(c.numbers("params.depths"));
    auto pts = tree_points(f, std::size_t(c.integer("params.base_points", 256)), workers);
    double beta_min = c.number("check.beta_min", 3.0);
    return on_space(f, [&](auto space) {
        using Space = decltype(space);
        std::vector<typename Space::Point> base;
        for (auto z : pts) {
            if constexpr (std::is_same_v<Space, RealSpace>)
                base.push_back(z.real());
            else
                base.push_back(z);
        }
        auto rep = shrinking_exponent<Space>(f, rho, depths, base, workers);
        Outcome o;
        o.values = {{"rho", rho},           {"depths", rep.depths},         {"theta", rep.theta},
                    {"used", rep.used},     {"fitted_beta", rep.fitted_beta}, {"fit_residual", rep.fit_residual},
                    {"base_points", rep.base_points}, {"excluded", rep.excluded}};
        std::ostringstream os;
        os.precision(17);
        write_shrinking_csv(os, rep);
        o.tables["shrinking"] = os.str();
        if (rep.excluded == rep.base_points) {
            o.reason = "every base point was ambiguous";
        } else if (rep.fitted_beta >= beta_min) {
            o.verdict = "pass";
            o.reason = "fitted beta " + fmt(rep.fitted_beta) + " >= " + fmt(beta_min);
        } else {
            o.verdict = "fail";
            o.reason = "fitted beta " + fmt(rep.fitted_beta) + " < " + fmt(beta_min);
        }
        return o;
    });
}

inline Outcome run_badness(const MapSpec& f, const ExperimentConfig& c, int workers) {
    auto cp = couple_of(f, c);
    int depth = int(c.integer("params.depth"));
    auto tg = c.numbers("params.t_grid");
    long budget = c.integer("params.budget", 10'000'000);
    double bound = c.number("check.upper_bound_max", 0.2);
    return on_space(f, [&](auto space) {
        using Space = decltype(space);
        auto bad = enumerate_bad_pullbacks<Space>(f, cp, depth, budget, workers);
        std::vector<XiLedger> L;
        std::vector<std::vector<double>> rows;
        for (double t : tg) {
            L.push_back(xi_from(bad, t));
            for (std::size_t m = 0; m < L.back().increments.size(); ++m)
                rows.push_back({t, double(m), L.back().increments[m], L.back().partial_sums[m + 1]});
        }
        auto est = badness_exponent_estimate(L);
        Outcome o;
        json ledgers = json::array();
        for (const auto& l : L)
            ledgers.push_back({{"t", l.t}, {"tail_slope", l.tail_slope}, {"converged", l.converged},
                               {"total", l.partial_sums.back()}});
        std::vector<std::size_t> counts;
        for (int m = 0; m <= depth; ++m) counts.push_back(bad.count_at(m));
        o.values = {{"couple", couple_json(cp)},       {"depth", depth},
                    {"bad_counts", counts},            {"ledgers", ledgers},
                    {"determined", est.determined},    {"upper_bound", est.upper_bound},
                    {"note", est.note}};
        o.truncation = truncation_of(bad.stats);
        o.tables["xi"] = csv("t,depth,increment,partial_sum", rows);
        if (bad.stats.truncated) {
            o.reason = "enumeration truncated by the node budget";
        } else if (!est.determined) {
            o.reason = est.note;
        } else if (est.upper_bound <= bound) {
            o.verdict = "pass";
            o.reason = "upper bound " + fmt(est.upper_bound) + " <= " + fmt(bound);
        } else {
            o.verdict = "fail";
            o.reason = "upper bound " + fmt(est.upper_bound) + " > " + fmt(bound);
        }
        return o;
    });
}

inline std::string branches_csv(const InducedMap<RealSpace>& F) {
    std::vector<std::vector<double>> rows;
    for (const auto& b : F.branches)
        rows.push_back({b.region.lo, b.region.hi, double(b.inducing_time), double(b.target_component)});
    return csv("lo,hi,time,target", rows);
}

inline Outcome run_induce(const MapSpec& f, const ExperimentConfig& c, int workers) {
    auto cp = couple_of(f, c);
    int T = int(c.integer("params.max_time"));
    auto F = build_induced_map<RealSpace>(f, cp, T, c.integer("params.budget", 10'000'000), workers);
    auto mc = markov_check(f, cp.inner, F);
    std::vector<long> per_time(std::size_t(T) + 1, 0);
    double covered = 0, total = 0;
    for (const auto& b : F.branches) {
        ++per_time[std::size_t(b.inducing_time)];
        covered += b.region.length();
    }
    for (const auto& v : cp.inner.components) total += v.interval.length();
    Outcome o;
    o.values = {{"couple", couple_json(cp)},
                {"max_time", T},
                {"branches", F.branches.size()},
                {"branches_per_time", per_time},
                {"coverage", covered / total},
                {"markov", {{"checked", mc.checked}, {"failures", mc.failures}, {"worst", mc.worst}, {"pass", mc.pass}}}};
    o.truncation = truncation_of(F.stats);
    o.tables["branches"] = branches_csv(F);
    o.verdict = mc.pass ? "pass" : "fail";
    o.reason = std::to_string(mc.failures) + " of " + std::to_string(mc.checked) + " endpoints off the boundary of V";
    return o;
}

inline Outcome run_tail(const MapSpec& f, const ExperimentConfig& c, int workers) {
    auto cp = couple_of(f, c);
    int T = int(c.integer("params.max_time"));
    auto F = build_induced_map<RealSpace>(f, cp, T, c.integer("params.budget", 10'000'000), workers);
    auto ts = tail_statistics(F, c.number("params.alpha", 1.0), int(c.integer("params.fit_lo", 5)),
                              int(c.integer("params.fit_hi", T)));
    bool mono = true;
    for (std::size_t m = 1; m < ts.T.size(); ++m) mono = mono && ts.T[m] <= ts.T[m - 1];
    double need = c.number("check.exponent_min", 3.0);
    Outcome o;
    o.values = {{"couple", couple_json(cp)},          {"alpha", ts.alpha},
                {"T", ts.T},                          {"nonincreasing", mono},
                {"poly_exponent", ts.poly_exponent},  {"fit_residual", ts.fit_residual},
                {"super_polynomial", ts.super_polynomial}, {"unresolved_mass", ts.unresolved_mass}};
    o.truncation = truncation_of(F.stats);
    std::vector<std::vector<double>> rows;
    for (std::size_t m = 0; m < ts.T.size(); ++m) rows.push_back({double(m), ts.T[m]});
    o.tables["tail"] = csv("m,T", rows);
    if (!std::isfinite(ts.poly_exponent)) {
        o.reason = "too few nonzero tail values for a fit";
    } else if (mono && ts.poly_exponent >= need) {
        o.verdict = "pass";
        o.reason = "nonincreasing, exponent " + fmt(ts.poly_exponent) + " >= " + fmt(need);
    } else {
        o.verdict = "fail";
        o.reason = mono ? "exponent " + fmt(ts.poly_exponent) + " < " + fmt(need) : "tail is not nonincreasing";
    }
    return o;
}

inline Outcome run_conformal(const MapSpec& f, const ExperimentConfig& c, int workers) {
    double s = c.number("params.s");
    int depth = int(c.integer("params.depth"));
    cplx base = c.has("params.base") ? parse_complex(c.at("params.base"), "params.base") : repelling_fixed_point(f).point;
    auto cm = conformal_measure(f, s, base, depth, workers);
    const auto& mu = cm.measure;
    double hd = c.number("params.hd", s), eps = c.number("params.eps", 0.1);
    auto deltas = c.numbers("params.delta_grid", dyadic_scales(1.0, 4, 10));
    std::vector<cplx> centers;
    if (c.has("params.centers")) {
        for (auto& t : split_list(c.at("params.centers"))) centers.push_back(parse_complex(t, "params.centers"));
    } else {
        std::size_t n = std::min<std::size_t>(16, mu.points.size());
        for (std::size_t j = 0; j < n; ++j) centers.push_back(mu.points[(2 * j + 1) * mu.points.size() / (2 * n)]);
    }
    auto reg = measure_regularity(mu, hd, eps, deltas, centers);
    Outcome o;
    o.values = {{"s", s},
                {"depth", depth},
                {"base", cjson(base)},
                {"atoms", mu.points.size()},
                {"singular", cm.singular},
                {"max_residual", cm.max_residual},
                {"regularity",
                 {{"hd", hd}, {"eps", eps}, {"deltas", deltas}, {"worst_exponent", reg.worst_exponent},
                  {"threshold", reg.threshold}, {"excluded", reg.excluded}, {"pass", reg.pass}}}};
    std::vector<std::string> fails;
    if (!reg.pass) fails.push_back("regularity worst exponent " + fmt(reg.worst_exponent) + " < " + fmt(reg.threshold));
    if (c.has("params.arcs")) {
        int arcs = int(c.integer("params.arcs"));
        double tv = tv_distance_to_arclength(mu, arcs);
        o.values["tv_arclength"] = {{"arcs", arcs}, {"distance", tv}};
        double tmax = c.number("check.tv_max", 0.02);
        if (!(tv <= tmax)) fails.push_back("total variation " + fmt(tv) + " > " + fmt(tmax));
    }
    if (c.has("check.residual_max") && !(cm.max_residual <= c.number("check.residual_max")))
        fails.push_back("conformality residual " + fmt(cm.max_residual));
    std::ostringstream os;
    os.precision(17);
    write_atoms_csv(os, mu);
    o.tables["atoms"] = os.str();
    o.verdict = fails.empty() ? "pass" : "fail";
    for (auto& m : fails) o.reason += (o.reason.empty() ? "" : "; ") + m;
    if (fails.empty()) o.reason = "regularity holds" + std::string(c.has("params.arcs") ? " and arc-length distance within bound" : "");
    return o;
}

inline InvariantDensity density_of(const MapSpec& f, const ExperimentConfig& c, int workers) {
    auto mu = uniform_measure(f, std::size_t(c.integer("params.atoms")));
    auto bins = ints(c.numbers("params.bins", {16, 256, 4096, 65536}));
    return invariant_density(f, mu, int(c.integer("params.cesaro_depth")), bins, false, workers);
}

inline json levels_json(const InvariantDensity& D) {
    json lv = json::array();
    for (const auto& L : D.levels) lv.push_back({{"bins", L.bins}});
    return {{"binning", D.binning}, {"cesaro_depth", D.cesaro_depth}, {"effective_samples", D.effective_samples},
            {"total_mass", D.total_mass}, {"clamped", D.clamped}, {"levels", lv}};
}

inline Outcome run_density(const MapSpec& f, const ExperimentConfig& c, int workers) {
    auto D = density_of(f, c, workers);
    auto seed = seed_of(c);
    int cb = int(c.integer("params.compare_bins", 32));
    auto orbit = orbit_histogram(f, uniform_sampler(f), cb, c.integer("params.samples"), seed, workers);
    const auto& fine = D.levels.back();
    if (fine.bins % cb != 0) throw ConfigError("params.compare_bins must divide every density level");
    double disc = histogram_discrepancy(rebin(fine.nu_mass, cb), orbit);
    double dmax = c.number("check.discrepancy_max", 0.05);
    Outcome o;
    o.values = levels_json(D);
    o.values["cross_check"] = {{"bins", cb}, {"samples", c.integer("params.samples")}, {"discrepancy", disc}};
    std::vector<std::string> fails;
    if (!(disc <= dmax)) fails.push_back("orbit histogram discrepancy " + fmt(disc) + " > " + fmt(dmax));
    if (c.has("check.oracle")) {
        // reference law on the domain [lo, hi]; only the arcsine law is known
        if (c.at("check.oracle") != "arcsine") throw ConfigError("check.oracle: only 'arcsine' is supported");
        double lo = f.domain_lo(), hi = f.domain_hi(), len = hi - lo;
        auto win = c.numbers("params.window", {lo + 0.1 * len, hi - 0.1 * len});
        if (win.size() != 2) throw ConfigError("params.window: expected 'a, b'");
        const DensityLevel* L = &D.levels.front();
        for (const auto& l : D.levels)
            if (l.bins == 256) L = &l;
        auto F = [&](double x) { return 2 / std::numbers::pi * std::asin(std::sqrt(std::clamp((x - lo) / len, 0.0, 1.0))); };
        double worst = 0;
        std::vector<std::vector<double>> rows;
        for (int k = 0; k < L->bins; ++k) {
            double a = lo + len * k / L->bins, b = lo + len * (k + 1) / L->bins;
            double ref = (F(b) - F(a)) / ((b - a) / len);
            rows.push_back({a, b, L->density[std::size_t(k)], ref});
            if (a < win[0] || b > win[1]) continue;
            worst = std::max(worst, std::abs(L->density[std::size_t(k)] / ref - 1));
        }
        double omax = c.number("check.oracle_max", 0.10);
        o.values["oracle"] = {{"law", "arcsine"}, {"bins", L->bins}, {"window", win}, {"sup_relative_error", worst}};
        o.tables["density"] = csv("a,b,density,reference", rows);
        if (!(worst <= omax)) fails.push_back("sup relative error " + fmt(worst) + " > " + fmt(omax));
    } else {
        std::vector<std::vector<double>> rows;
        for (int k = 0; k < fine.bins; ++k) rows.push_back({D.lo + (D.hi - D.lo) * k / fine.bins, fine.density[std::size_t(k)]});
        o.tables["density"] = csv("a,density", rows);
    }
    o.verdict = fails.empty() ? "pass" : "fail";
    for (auto& m : fails) o.reason += (o.reason.empty() ? "" : "; ") + m;
    if (fails.empty()) o.reason = "cross-checks within bounds";
    return o;
}

inline Outcome run_lp(const MapSpec& f, const ExperimentConfig& c, int workers) {
    auto D = density_of(f, c, workers);
    auto rows = lp_regularity(D, c.numbers("params.p_grid"));
    Outcome o;
    o.values = levels_json(D);
    json jr = json::array();
    std::vector<std::vector<double>> table;
    for (const auto& r : rows) {
        jr.push_back({{"p", r.p}, {"integrals", r.integrals}, {"verdict", r.verdict}});
        for (std::size_t k = 0; k < r.integrals.size(); ++k) table.push_back({r.p, double(D.levels[k].bins), r.integrals[k]});
    }
    o.values["rows"] = jr;
    o.tables["lp"] = csv("p,bins,integral", table);
    std::vector<std::string> fails;
    bool any = false;
    for (const char* which : {"stable", "diverging"}) {
        std::string key = std::string("check.") + which;
        if (!c.has(key)) continue;
        for (double p : c.numbers(key)) {
            any = true;
            auto it = std::find_if(rows.begin(), rows.end(), [&](const LpRow& r) { return std::abs(r.p - p) < 1e-12; });
            if (it == rows.end()) throw ConfigError(key + ": p=" + fmt(p) + " is not in params.p_grid");
            if (it->verdict != which) fails.push_back("p=" + fmt(p) + " is " + it->verdict + ", expected " + which);
        }
    }
    if (!any) {
        o.reason = "no expected verdicts configured";
    } else {
        o.verdict = fails.empty() ? "pass" : "fail";
        for (auto& m : fails) o.reason += (o.reason.empty() ? "" : "; ") + m;
        if (fails.empty()) o.reason = "every configured p has the expected verdict";
    }
    return o;
}

inline Outcome run_mixing(const MapSpec& f, const ExperimentConfig& c, int workers) {
    auto phi = parse_observable(c.at("params.phi"), "params.phi");
    auto psi = parse_observable(c.at("params.psi"), "params.psi");
    int n_max = int(c.integer("params.n_max"));
    auto seed = seed_of(c);
    auto R = correlation_decay(f, uniform_sampler(f), phi, psi, n_max, c.integer("params.samples"), seed, workers,
                               int(c.integer("params.burn_in", 1000)), int(c.integer("params.chunks", 64)));
    Outcome o;
    o.values = {{"phi", R.phi_id},
                {"psi", R.psi_id},
                {"C", R.C},
                {"sigma", R.sigma},
                {"at_floor", R.at_floor},
                {"samples", R.samples},
                {"chunks", R.chunks},
                {"fit",
                 {{"poly_exponent", R.fit.poly_exponent}, {"poly_rms", R.fit.poly_rms}, {"exp_rate", R.fit.exp_rate},
                  {"exp_rms", R.fit.exp_rms}, {"points", R.fit.points}, {"floor_from", R.fit.floor_from},
                  {"classification", R.fit.classification}, {"note", R.fit.note}}}};
    std::vector<std::vector<double>> rows;
    for (int n = 0; n <= n_max; ++n)
        rows.push_back({double(n), R.C[std::size_t(n)], R.sigma[std::size_t(n)], R.at_floor[std::size_t(n)] ? 1.0 : 0.0});
    o.tables["correlations"] = csv("n,C,sigma,at_floor", rows);
    std::vector<std::string> fails;
    bool any = false;
    if (c.has("check.classification")) {
        any = true;
        if (R.fit.classification != c.at("check.classification"))
            fails.push_back("classified " + R.fit.classification + ", expected " + c.at("check.classification"));
    }
    if (c.has("check.floor_by")) {
        any = true;
        long by = c.integer("check.floor_by");
        if (R.fit.floor_from < 1 || R.fit.floor_from > by)
            fails.push_back("noise floor not reached by n=" + std::to_string(by));
    }
    if (!any) {
        o.reason = "classified " + R.fit.classification + "; no expectation configured";
    } else {
        o.verdict = fails.empty() ? "pass" : "fail";
        for (auto& m : fails) o.reason += (o.reason.empty() ? "" : "; ") + m;
        if (fails.empty()) o.reason = "classified " + R.fit.classification;
    }
    return o;
}

inline Outcome run_dims(const MapSpec& f, const ExperimentConfig& c, int workers) {
    cplx base = c.has("params.base") ? parse_complex(c.at("params.base"), "params.base") : repelling_fixed_point(f).point;
    auto T = poincare_series(f, base, c.numbers("params.s_grid"), int(c.integer("params.depth")), workers);
    auto pe = poincare_exponent(T);
    std::string method = c.at("params.method");
    int k0 = int(c.integer("params.k_min", 3)), k1 = int(c.integer("params.k_max", 10));
    DimensionReport bd;
    if (method == "sample") {
        auto S = julia_sample(f, std::size_t(c.integer("params.points", 200000)), int(c.integer("params.sample_depth", 30)),
                              seed_of(c), workers);
        double top = c.number("params.scale_top", f.is_real() ? f.domain_hi() - f.domain_lo() : 2.0 * f.escape_radius());
        bd = box_dimension(S, dyadic_scales(top, k0, k1));
    } else if (method == "escape") {
        bd = escape_time_dimension(f, k0, k1, int(c.integer("params.max_iter", 2000)), workers);
    } else {
        throw ConfigError("params.method: expected sample or escape, got '" + method + "'");
    }
    Outcome o;
    o.values = {{"base", cjson(base)},
                {"poincare", {{"estimate", pe.estimate}, {"lo", pe.lo}, {"hi", pe.hi}, {"status", pe.status}}},
                {"box", {{"method", bd.method}, {"dimension", bd.dimension}, {"bracket", bd.bracket},
                         {"fit_residual", bd.fit_residual}, {"undersampled", bd.undersampled}}}};
    {
        std::ostringstream os;
        os.precision(17);
        write_counts_csv(os, bd);
        o.tables["counts"] = os.str();
    }
    double tol = c.number("check.tolerance", 0.05);
    double gap = std::abs(pe.estimate - bd.dimension);
    o.values["gap"] = gap;
    std::vector<std::string> fails, open;
    if (pe.status != "estimate") open.push_back("Poincare exponent " + pe.status);
    else if (bd.undersampled) open.push_back("box counts undersampled");
    else if (!(gap <= tol)) fails.push_back("|poincare - box| = " + fmt(gap) + " > " + fmt(tol));
    if (c.has("nice.delta")) {
        if (!f.is_real()) throw ConfigError("nice.delta: the hyperbolic bracket is computed for real maps");
        auto cp = couple_of(f, c);
        auto F = build_induced_map<RealSpace>(f, cp, int(c.integer("params.hyperbolic_time", 20)), 10'000'000, workers);
        auto br = F.branches;
        std::stable_sort(br.begin(), br.end(), [](const auto& a, const auto& b) { return a.region.length() > b.region.length(); });
        auto keep = std::size_t(c.integer("params.hyperbolic_branches", 50));
        if (br.size() > keep) br.resize(keep);
        auto h = hyperbolic_dimension_lb<RealSpace>(f, br);
        double need = c.number("check.hyperbolic_min", 0.9);
        o.values["hyperbolic"] = {{"couple", couple_json(cp)}, {"branches", br.size()}, {"lower", h.lower},
                                  {"upper", h.upper}, {"defined", h.defined}, {"flag", h.flag}};
        if (!h.defined) open.push_back("hyperbolic bracket undefined: " + h.flag);
        else if (!(h.lower >= need)) fails.push_back("hyperbolic lower bracket " + fmt(h.lower) + " < " + fmt(need));
    }
    if (!fails.empty()) o.verdict = "fail";
    else if (open.empty()) o.verdict = "pass";
    for (auto& m : fails) o.reason += (o.reason.empty() ? "" : "; ") + m;
    for (auto& m : open) o.reason += (o.reason.empty() ? "" : "; ") + m;
    if (o.reason.empty()) o.reason = "|poincare - box| = " + fmt(gap) + " <= " + fmt(tol);
    return o;
}

inline Outcome run_bc_probe(const MapSpec& f, const ExperimentConfig& c, int) {
    double r = c.number("params.r");
    auto grid = c.numbers("params.delta_grid");
    int depth = int(c.integer("params.depth"));
    long budget = c.integer("params.budget", 10'000'000);
    return on_space(f, [&](auto space) {
        using Space = decltype(space);
        auto rep = backward_contraction_probe<Space>(f, r, grid, depth, budget);
        Outcome o;
        json rows = json::array();
        std::vector<std::vector<double>> table;
        bool truncated = false;
        for (const auto& row : rep.rows) {
            rows.push_back({{"delta", row.delta}, {"worst_ratio", row.worst_ratio},
                            {"near_components", row.near_components}, {"truncated", row.truncated}});
            table.push_back({row.delta, row.worst_ratio, double(row.near_components)});
            truncated = truncated || row.truncated;
        }
        o.values = {{"r", r}, {"depth", depth}, {"rows", rows}, {"vacuous", rep.vacuous}};
        o.truncation = {{"truncated", truncated}};
        o.tables["contraction"] = csv("delta,worst_ratio,near_components", table);
        bool worse = false;
        for (const auto& row : rep.rows) worse = worse || (!row.truncated && !(row.worst_ratio < 1.0));
        if (worse) {
            o.verdict = "fail";
            o.reason = "a near pull-back has diameter >= delta";
        } else if (truncated) {
            o.reason = "node budget exhausted";
        } else {
            o.verdict = "pass";
            o.reason = rep.vacuous ? "no critical point in the Julia set" : "every near pull-back is smaller than delta";
        }
        return o;
    });
}

inline Outcome run_decomp_check(const MapSpec& f, const ExperimentConfig& c, int workers) {
    auto cp = couple_of(f, c);
    int T = int(c.integer("params.max_time"));
    int bd = int(c.integer("params.bad_depth"));
    long budget = c.integer("params.budget", 10'000'000);
    auto F = build_induced_map<RealSpace>(f, cp, T, budget, workers);
    auto bad = enumerate_bad_pullbacks<RealSpace>(f, cp, bd, budget, workers);
    auto land = landing_components<RealSpace>(f, cp.inner, int(c.integer("params.landing_depth", bd)), &cp.outer);
    auto seed = seed_of(c);
    long want = c.integer("params.samples");
    double total = 0;
    for (const auto& v : cp.inner.components) total += v.interval.length();
    std::vector<double> xs;
    auto g = stream(seed, 0);
    long draws = 0;
    while (long(xs.size()) < want && draws < 1000 * want) {
        ++draws;
        double u = uniform01(g) * total;
        for (const auto& v : cp.inner.components) {
            if (u < v.interval.length()) {
                double x = v.interval.lo + u;
                if (F.find(x)) xs.push_back(x);
                break;
            }
            u -= v.interval.length();
        }
    }
    auto rep = verify_decomposition(f, cp, F, bad, land, xs);
    Outcome o;
    json fails = json::array();
    for (std::size_t i = 0; i < std::min<std::size_t>(rep.failures.size(), 20); ++i) {
        const auto& e = rep.failures[i];
        fails.push_back({{"x", e.x.real()}, {"m", e.m}, {"m_tilde", e.m_tilde}, {"landing", e.landing}});
    }
    o.values = {{"couple", couple_json(cp)}, {"samples", rep.samples},     {"draws", draws},
                {"checked", rep.checked},    {"covered", rep.covered},     {"uncovered", rep.uncovered},
                {"failures", rep.failures.size()}, {"first_failures", fails}};
    json tr = truncation_of(F.stats);
    tr["bad_enumeration"] = truncation_of(bad.stats);
    tr["landing_truncated"] = land.truncated;
    o.truncation = tr;
    if (!rep.pass) {
        o.verdict = "fail";
        o.reason = std::to_string(rep.failures.size()) + " identity failures";
    } else if (rep.samples < want || rep.uncovered > 0) {
        o.reason = std::to_string(rep.samples) + " samples drawn, " + std::to_string(rep.uncovered) + " not covered";
    } else {
        o.verdict = "pass";
        o.reason = "identity holds on " + std::to_string(rep.checked) + " checks over " + std::to_string(rep.samples) +
                   " samples";
    }
    return o;
}

}  // namespace detail

// Validates, runs and wraps one experiment. Errors raised by the modules are
// recorded in the report with verdict fail.
inline ReportRecord run_experiment(const ExperimentConfig& c, int workers = 1) {
    validate(c);
    ReportRecord rec;
    json& r = rec.report;
    r["experiment"] = c.experiment();
    r["label"] = c.get("experiment.label", c.experiment());
    r["criterion"] = c.has("experiment.criterion") ? json(c.at("experiment.criterion")) : json(nullptr);
    r["config_hash"] = hash_hex(config_hash(c));
    json params = json::object();
    for (const auto& [k, v] : c.values)
        if (k.rfind("output.", 0) != 0) params[k] = v;
    r["params"] = params;
    r["seed"] = c.has("experiment.seed") ? json(detail::seed_of(c)) : json(nullptr);
    auto ts = timestamp_now();
    r["timestamp"] = ts.empty() ? json(nullptr) : json(ts);
    Outcome o;
    try {
        MapSpec f = parse_map(c.values);
        const std::string& e = r["experiment"].get_ref<const std::string&>();
        if (e == "shrinking") o = detail::run_shrinking(f, c, workers);
        else if (e == "badness") o = detail::run_badness(f, c, workers);
        else if (e == "induce") o = detail::run_induce(f, c, workers);
        else if (e == "tail") o = detail::run_tail(f, c, workers);
        else if (e == "conformal") o = detail::run_conformal(f, c, workers);
        else if (e == "density") o = detail::run_density(f, c, workers);
        else if (e == "lp") o = detail::run_lp(f, c, workers);
        else if (e == "mixing") o = detail::run_mixing(f, c, workers);
        else if (e == "dims") o = detail::run_dims(f, c, workers);
        else if (e == "bc-probe") o = detail::run_bc_probe(f, c, workers);
        else o = detail::run_decomp_check(f, c, workers);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& ex) {
        o = Outcome{};
        o.verdict = "fail";
        o.reason = "error";
        r["error"] = ex.what();
    }
    r["values"] = o.values;
    r["verdict"] = o.verdict;
    r["reason"] = o.reason;
    r["truncation"] = o.truncation;
    json files = json::array();
    for (const auto& [name, _] : o.tables) files.push_back(name + ".csv");
    r["tables"] = files;
    rec.tables = std::move(o.tables);
    return rec;
}

// 0: pass or undetermined with data; 1: fail; 2: error; 3: undetermined without data
inline int exit_status(const ReportRecord& rec) {
    if (rec.report.contains("error")) return 2;
    auto v = rec.verdict();
    if (v == "pass") return 0;
    if (v == "fail") return 1;
    return rec.has_data() ? 0 : 3;
}

inline std::string report_stem(const ReportRecord& rec) {
    return rec.report["label"].get<std::string>() + "-" + rec.report["config_hash"].get<std::string>();
}

// Writes <stem>.json and <stem>.<table>.csv into dir; returns the JSON path.
inline std::string write_report(const ReportRecord& rec, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto stem = report_stem(rec);
    auto path = (fs::path(dir) / (stem + ".json")).string();
    std::ofstream(path) << rec.report.dump(2) << '\n';
    for (const auto& [name, text] : rec.tables) std::ofstream(fs::path(dir) / (stem + "." + name + ".csv")) << text;
    return path;
}

// ---- suite ----

struct SuiteEntry {
    std::string path;
    ExperimentConfig config;
    std::string error;  // load or validation error
};

inline std::vector<SuiteEntry> load_manifest(const std::string& manifest) {
    namespace fs = std::filesystem;
    std::ifstream is(manifest);
    if (!is) throw ConfigError("cannot open manifest " + manifest);
    auto dir = fs::path(manifest).parent_path();
    std::vector<SuiteEntry> out;
    std::string line;
    while (std::getline(is, line)) {
        auto h = line.find('#');
        if (h != std::string::npos) line.erase(h);
        line = detail::strip(line);
        if (line.empty()) continue;
        SuiteEntry e;
        e.path = fs::path(line).is_absolute() ? line : (dir / line).string();
        try {
            e.config = load_config(e.path);
        } catch (const ConfigError& ex) {
            e.error = ex.what();
        }
        out.push_back(std::move(e));
    }
    if (out.empty()) throw ConfigError("manifest " + manifest + " lists no configs");
    return out;
}

inline std::string aggregate_verdict(const std::vector<std::string>& verdicts) {
    if (verdicts.empty()) return "undetermined";
    bool all_pass = true;
    for (const auto& v : verdicts) {
        if (v == "fail") return "fail";
        all_pass = all_pass && v == "pass";
    }
    return all_pass ? "pass" : "undetermined";
}

struct SuiteOptions {
    int workers = 1;          // experiments run concurrently
    int inner_workers = 1;    // threads inside each experiment
    int criteria = 13;        // acceptance table ids 1..criteria
};

struct SuiteResult {
    json summary;
    std::vector<ReportRecord> records;  // one per distinct config, manifest order
};

inline SuiteResult run_suite(std::vector<SuiteEntry> entries, const SuiteOptions& opt = {}) {
    SuiteResult res;
    json notes = json::array();
    std::vector<std::size_t> keep;
    std::map<std::string, std::string> seen;  // hash -> first path
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].error.empty()) {
            keep.push_back(i);
            continue;
        }
        auto h = hash_hex(config_hash(entries[i].config));
        auto it = seen.find(h);
        if (it != seen.end()) {
            notes.push_back("duplicate config hash " + h + ": " + entries[i].path + " skipped, same as " + it->second);
            continue;
        }
        seen[h] = entries[i].path;
        keep.push_back(i);
    }
    std::vector<ReportRecord> recs(keep.size());
    detail::parallel_for(keep.size(), opt.workers, [&](std::size_t k) {
        const auto& e = entries[keep[k]];
        ReportRecord& rec = recs[k];
        std::string err = e.error;
        if (err.empty()) {
            try {
                rec = run_experiment(e.config, opt.inner_workers);
                return;
            } catch (const std::exception& ex) {
                err = ex.what();
            }
        }
        rec.report = {{"experiment", e.config.experiment()},
                      {"label", e.config.get("experiment.label", e.config.experiment())},
                      {"criterion", e.config.has("experiment.criterion") ? json(e.config.at("experiment.criterion"))
                                                                          : json(nullptr)},
                      {"config_hash", e.error.empty() ? hash_hex(config_hash(e.config)) : std::string("none")},
                      {"values", json::object()},
                      {"verdict", "fail"},
                      {"reason", "error"},
                      {"error", err},
                      {"truncation", {{"truncated", false}}}};
    });
    json runs = json::array();
    std::map<int, std::vector<std::string>> by_criterion;
    std::map<int, std::vector<std::string>> labels;
    std::vector<std::string> all;
    for (std::size_t k = 0; k < recs.size(); ++k) {
        auto& rep = recs[k].report;
        // an experiment without a payload cannot support any verdict
        std::string v = recs[k].has_data() || rep.contains("error") ? recs[k].verdict() : "undetermined";
        all.push_back(v);
        runs.push_back({{"config", entries[keep[k]].path}, {"label", rep.value("label", "")},
                        {"config_hash", rep.value("config_hash", "")}, {"verdict", v},
                        {"reason", rep.value("reason", "")}});
        if (rep.contains("criterion") && rep["criterion"].is_string())
            for (auto& t : detail::split_list(rep["criterion"].get<std::string>())) {
                int id = std::atoi(t.c_str());
                by_criterion[id].push_back(v);
                labels[id].push_back(rep.value("label", ""));
            }
    }
    json table = json::array();
    for (int id = 1; id <= opt.criteria; ++id) {
        json row = {{"id", id}};
        if (by_criterion.count(id)) {
            row["verdict"] = aggregate_verdict(by_criterion[id]);
            row["experiments"] = labels[id];
        } else {
            row["verdict"] = "undetermined";
            row["experiments"] = json::array();
            row["note"] = "no experiment in the manifest covers this criterion";
        }
        table.push_back(row);
    }
    res.summary = {{"runs", runs}, {"notes", notes}, {"verdict", aggregate_verdict(all)}, {"acceptance", table}};
    auto ts = timestamp_now();
    res.summary["timestamp"] = ts.empty() ? json(nullptr) : json(ts);
    res.records = std::move(recs);
    return res;
}

inline std::string acceptance_table_text(const json& summary) {
    std::ostringstream os;
    for (const auto& row : summary["acceptance"]) {
        std::string v = row["verdict"].get<std::string>();
        for (auto& ch : v) ch = char(std::toupper(ch));
        os << "criterion " << row["id"].get<int>() << ": " << v;
        if (!row["experiments"].empty()) {
            os << " (";
            bool first = true;
            for (const auto& l : row["experiments"]) {
                os << (first ? "" : ", ") << l.get<std::string>();
                first = false;
            }
            os << ")";
        } else if (row.contains("note")) {
            os << " (" << row["note"].get<std::string>() << ")";
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace dynlab
