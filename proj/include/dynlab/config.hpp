#pragma once

#include <dynlab/error.hpp>
#include <dynlab/maps.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dynlab {

// Flat "section.key" -> value. Keys outside any section go to "experiment".
struct ExperimentConfig {
    std::map<std::string, std::string> values;

    bool has(const std::string& k) const { return values.count(k) != 0; }
    const std::string& at(const std::string& k) const {
        auto it = values.find(k);
        if (it == values.end()) throw ConfigError("missing config key: " + k);
        return it->second;
    }
    std::string get(const std::string& k, const std::string& fallback) const {
        auto it = values.find(k);
        return it == values.end() ? fallback : it->second;
    }
    double number(const std::string& k) const { return detail::parse_double(at(k), k); }
    double number(const std::string& k, double fallback) const { return has(k) ? number(k) : fallback; }
    long integer(const std::string& k) const {
        double v = number(k);
        if (v != double(long(v))) throw ConfigError("key '" + k + "': expected an integer");
        return long(v);
    }
    long integer(const std::string& k, long fallback) const { return has(k) ? integer(k) : fallback; }
    std::vector<double> numbers(const std::string& k) const;
    std::vector<double> numbers(const std::string& k, std::vector<double> fallback) const {
        return has(k) ? numbers(k) : fallback;
    }
    std::string experiment() const { return get("experiment.name", ""); }

    bool operator==(const ExperimentConfig&) const = default;
};

// Lists are comma separated; "a..b" expands integer ranges and "a:step:b"
// arithmetic grids.
inline std::vector<double> ExperimentConfig::numbers(const std::string& k) const {
    std::vector<double> out;
    for (const auto& tok : detail::split_list(at(k))) {
        auto dots = tok.find("..");
        auto colon = tok.find(':');
        if (dots != std::string::npos) {
            long a = long(detail::parse_double(tok.substr(0, dots), k));
            long b = long(detail::parse_double(tok.substr(dots + 2), k));
            for (long v = a; v <= b; ++v) out.push_back(double(v));
        } else if (colon != std::string::npos) {
            auto c2 = tok.find(':', colon + 1);
            if (c2 == std::string::npos) throw ConfigError("key '" + k + "': expected a:step:b");
            double a = detail::parse_double(tok.substr(0, colon), k);
            double h = detail::parse_double(tok.substr(colon + 1, c2 - colon - 1), k);
            double b = detail::parse_double(tok.substr(c2 + 1), k);
            if (!(h > 0)) throw ConfigError("key '" + k + "': step must be positive");
            long n = long(std::floor((b - a) / h + 1e-9));
            for (long i = 0; i <= n; ++i) out.push_back(a + double(i) * h);
        } else {
            out.push_back(detail::parse_double(tok, k));
        }
    }
    if (out.empty()) throw ConfigError("key '" + k + "': empty list");
    return out;
}

inline ExperimentConfig parse_config(std::istream& is, const std::string& origin = "<config>") {
    ExperimentConfig c;
    std::string line, section = "experiment";
    int lineno = 0;
    std::vector<std::string> errors;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.push_back(origin + ":" + std::to_string(lineno) + ": unterminated section header");
                continue;
            }
            section = detail::strip(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back(origin + ":" + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        std::string key = section + "." + detail::strip(line.substr(0, eq));
        if (c.values.count(key)) errors.push_back(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
        c.values[key] = detail::strip(line.substr(eq + 1));
    }
    if (!errors.empty()) {
        std::string msg;
        for (auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
        throw ConfigError(msg);
    }
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    return parse_config(is, path);
}

// Canonical form: sections and keys in sorted order.
inline std::string serialize(const ExperimentConfig& c, bool with_output = true) {
    std::ostringstream os;
    std::string current;
    for (const auto& [k, v] : c.values) {
        auto dot = k.find('.');
        std::string sec = k.substr(0, dot), key = k.substr(dot + 1);
        if (!with_output && sec == "output") continue;
        if (sec != current) {
            if (!current.empty()) os << '\n';
            os << '[' << sec << "]\n";
            current = sec;
        }
        os << key << " = " << v << '\n';
    }
    return os.str();
}

// FNV-1a over the canonical form. Output paths do not enter the hash.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : serialize(c, false)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct ExperimentSchema {
    std::string name;
    std::vector<std::string> required;
    std::vector<std::string> optional;
    bool stochastic = false;
    bool needs_couple = false;
    bool real_only = false;
};

inline const std::vector<ExperimentSchema>& experiment_schemas() {
    static const std::vector<ExperimentSchema> s = {
        {"shrinking", {"params.rho", "params.depths"}, {"params.base_points", "check.beta_min"}},
        {"badness",
         {"params.depth", "params.t_grid"},
         {"params.budget", "check.upper_bound_max"},
         false,
         true},
        {"induce", {"params.max_time"}, {"params.budget"}, false, true, true},
        {"tail",
         {"params.max_time"},
         {"params.alpha", "params.fit_lo", "params.fit_hi", "params.budget", "check.exponent_min"},
         false,
         true,
         true},
        {"conformal",
         {"params.s", "params.depth"},
         {"params.base", "params.arcs", "params.hd", "params.eps", "params.delta_grid", "params.centers",
          "check.tv_max", "check.residual_max"}},
        {"density",
         {"params.atoms", "params.cesaro_depth", "params.samples"},
         {"params.bins", "params.window", "params.compare_bins", "check.discrepancy_max", "check.oracle",
          "check.oracle_max"},
         true,
         false,
         true},
        {"lp",
         {"params.atoms", "params.cesaro_depth", "params.p_grid"},
         {"params.bins", "check.stable", "check.diverging"},
         false,
         false,
         true},
        {"mixing",
         {"params.phi", "params.psi", "params.n_max", "params.samples"},
         {"params.chunks", "params.burn_in", "check.classification", "check.floor_by"},
         true,
         false,
         true},
        {"dims",
         {"params.s_grid", "params.depth", "params.method"},
         {"params.base", "params.points", "params.sample_depth", "params.scale_top", "params.k_min", "params.k_max", "params.max_iter",
          "params.hyperbolic_time", "params.hyperbolic_branches", "nice.delta", "nice.r", "nice.horizon",
          "check.tolerance", "check.hyperbolic_min"}},
        {"bc-probe", {"params.r", "params.delta_grid", "params.depth"}, {"params.budget"}},
        {"decomp-check",
         {"params.max_time", "params.bad_depth", "params.samples"},
         {"params.landing_depth", "params.budget"},
         true,
         true,
         true},
    };
    return s;
}

inline const ExperimentSchema* find_schema(const std::string& name) {
    for (const auto& s : experiment_schemas())
        if (s.name == name) return &s;
    return nullptr;
}

// Collects every problem before reporting.
inline void validate(const ExperimentConfig& c) {
    std::vector<std::string> problems;
    std::string name = c.experiment();
    const ExperimentSchema* s = find_schema(name);
    if (name.empty())
        problems.push_back("missing key experiment.name");
    else if (!s)
        problems.push_back("experiment.name: unknown experiment '" + name + "'");
    if (!c.has("map.kind")) problems.push_back("missing key map.kind");
    if (!c.has("map.coefficients")) problems.push_back("missing key map.coefficients");
    if (c.get("map.kind", "") == "real-polynomial" && !c.has("map.domain"))
        problems.push_back("missing key map.domain");
    std::set<std::string> known = {"experiment.name", "experiment.seed", "experiment.criterion", "experiment.label",
                                   "map.kind", "map.coefficients", "map.domain", "map.critical_in_julia"};
    if (s) {
        for (const auto& k : s->required) {
            known.insert(k);
            if (!c.has(k)) problems.push_back("missing key " + k);
        }
        for (const auto& k : s->optional) known.insert(k);
        bool sampled = s->stochastic || (name == "dims" && c.get("params.method", "") == "sample");
        if (sampled && !c.has("experiment.seed")) problems.push_back("missing key experiment.seed (seed is mandatory)");
        if (s->needs_couple) {
            for (const char* k : {"nice.delta", "nice.r"}) {
                known.insert(k);
                if (!c.has(k)) problems.push_back(std::string("missing key ") + k);
            }
            known.insert("nice.horizon");
        }
        if (s->real_only && c.has("map.kind") && c.get("map.kind", "") != "real-polynomial")
            problems.push_back("map.kind: experiment '" + name + "' needs a real-polynomial map");
    }
    for (const auto& [k, v] : c.values) {
        if (k.rfind("output.", 0) == 0) continue;
        if (!known.count(k)) problems.push_back("unknown key " + k);
        if (v.empty()) problems.push_back("empty value for " + k);
    }
    if (!problems.empty()) {
        std::string msg = "invalid config (" + std::to_string(problems.size()) + " problem" +
                          (problems.size() > 1 ? "s" : "") + "):";
        for (auto& p : problems) msg += "\n  " + p;
        throw ConfigError(msg);
    }
}

}  // namespace dynlab
