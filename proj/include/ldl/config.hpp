#pragma once

// INI-style run configuration: parsing with line-numbered diagnostics,
// environment overrides and a canonical serializer.
//
// Sections and keys (units in brackets):
//   [portfolio]    maturity [years], liability_growth [bool]
//   [rate]         rates [1/year, piecewise constant], knots [years]
//   [bank.i]       a0, l0 [currency], recovery [0..1], sigma [1/sqrt(year)],
//                  local_vol [CSV path relative to the config file] or inline
//                  local_vol_times, local_vol_assets, local_vol_values (row-major)
//   [liabilities]  lij [currency], owed by bank i to bank j
//   [correlation]  rhoij, bi (common-factor loadings); three banks may give
//                  rho_xz, rho_yz, phi_xy [radians, suffix "pi" allowed] instead
//                  of rho12
//   [jumps.i], [jumps.common]
//                  model = none | merton | kou | exp_negative | exp_positive,
//                  intensity [1/year], mean, stdev, p, theta1, theta2, rate
//   [numerics]     see apply_numerics
//   [mc]           paths, steps_per_year, seed, antithetic, workers, batch
//   [run]          bank (1-based, marginal/delta), probes (";"-separated points)
//
// Environment variables LDL_<SECTION>__<KEY> override file values; dots in
// section names become underscores (LDL_BANK_1__A0, LDL_NUMERICS__DTAU).

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ldl/errors.hpp"
#include "ldl/model.hpp"
#include "ldl/oracle.hpp"
#include "ldl/solver.hpp"

extern char** environ;

namespace ldl {

struct RunConfig {
    Portfolio portfolio;
    NumericsConfig numerics;
    McConfig mc;
    std::size_t bank = 0;  // 0-based
    std::vector<std::vector<double>> probes;
    std::optional<std::array<double, 3>> cosine_law;  // rho_xz, rho_yz, phi_xy when given

    bool operator==(const RunConfig& o) const {
        return portfolio == o.portfolio && bank == o.bank && probes == o.probes && serialize_numerics() ==
                                                                                     o.serialize_numerics() &&
               mc.paths == o.mc.paths && mc.steps_per_year == o.mc.steps_per_year && mc.seed == o.mc.seed &&
               mc.antithetic == o.mc.antithetic && mc.workers == o.mc.workers && mc.batch == o.mc.batch;
    }

    std::string serialize_numerics() const;
};

using EnvMap = std::map<std::string, std::string>;

inline EnvMap process_environment() {
    EnvMap env;
    for (char** e = environ; e && *e; ++e) {
        std::string kv(*e);
        auto eq = kv.find('=');
        if (eq != std::string::npos && kv.rfind("LDL_", 0) == 0) env[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return env;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

struct IniEntry {
    std::string value;
    std::string origin;  // "file:line" or "env NAME"
    bool used = false;
};

struct IniSection {
    std::string origin;
    std::map<std::string, IniEntry> entries;
};

// Comments start a line or follow whitespace, so ';' can separate values.
inline std::string strip_comment(const std::string& line) {
    for (std::size_t k = 0; k < line.size(); ++k) {
        if (line[k] != ';' && line[k] != '#') continue;
        if (k == 0 || std::isspace(static_cast<unsigned char>(line[k - 1]))) return line.substr(0, k);
    }
    return line;
}

class IniDocument {
public:
    static IniDocument parse(std::istream& in, const std::string& name) {
        IniDocument doc;
        std::string line, current;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string where = name + ":" + std::to_string(lineno);
            std::string t = trim(strip_comment(line));
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']') throw ConfigError(where + ": malformed section header");
                current = lower(trim(t.substr(1, t.size() - 2)));
                if (current.empty()) throw ConfigError(where + ": empty section name");
                if (doc.sections_.count(current)) throw ConfigError(where + ": duplicate section [" + current + "]");
                doc.sections_[current].origin = where;
                doc.order_.push_back(current);
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
            if (current.empty()) throw ConfigError(where + ": key outside any section");
            const std::string key = lower(trim(t.substr(0, eq)));
            if (key.empty()) throw ConfigError(where + ": empty key");
            auto& sec = doc.sections_[current];
            if (sec.entries.count(key)) throw ConfigError(where + ": duplicate key [" + current + "]." + key);
            sec.entries[key] = IniEntry{trim(t.substr(eq + 1)), where, false};
        }
        return doc;
    }

    void apply_environment(const EnvMap& env) {
        for (const auto& [name, value] : env) {
            if (name.rfind("LDL_", 0) != 0) continue;
            const auto sep = name.find("__", 4);
            if (sep == std::string::npos) continue;
            std::string section = lower(name.substr(4, sep - 4));
            std::replace(section.begin(), section.end(), '_', '.');
            const std::string key = lower(name.substr(sep + 2));
            auto& sec = sections_[section];
            if (sec.origin.empty()) {
                sec.origin = "env " + name;
                order_.push_back(section);
            }
            sec.entries[key] = IniEntry{value, "env " + name, false};
        }
    }

    bool has_section(const std::string& s) const { return sections_.count(s) > 0; }

    const IniEntry* find(const std::string& section, const std::string& key) {
        auto it = sections_.find(section);
        if (it == sections_.end()) return nullptr;
        auto jt = it->second.entries.find(key);
        if (jt == it->second.entries.end()) return nullptr;
        jt->second.used = true;
        return &jt->second;
    }

    const IniSection& section(const std::string& s) const { return sections_.at(s); }
    const std::vector<std::string>& order() const { return order_; }

    void reject_unused(const std::set<std::string>& known_sections) const {
        for (const auto& s : order_) {
            const auto& sec = sections_.at(s);
            if (!known_sections.count(s)) throw ConfigError(sec.origin + ": unknown section [" + s + "]");
            for (const auto& [k, e] : sec.entries)
                if (!e.used) throw ConfigError(e.origin + ": unknown key [" + s + "]." + k);
        }
    }

private:
    std::map<std::string, IniSection> sections_;
    std::vector<std::string> order_;
};

inline double parse_number(const std::string& text, const std::string& where, const std::string& key) {
    std::string t = trim(text);
    double scale = 1.0;
    if (t.size() >= 2 && lower(t.substr(t.size() - 2)) == "pi") {
        scale = std::numbers::pi;
        t = trim(t.substr(0, t.size() - 2));
        if (t.empty()) t = "1";
        if (t.back() == '*') t = trim(t.substr(0, t.size() - 1));
    }
    double v = 0.0;
    std::size_t pos = 0;
    try {
        v = std::stod(t, &pos);
    } catch (const std::exception&) {
        throw ConfigError(where + ": " + key + " expects a number, got '" + text + "'");
    }
    if (pos != t.size() || !std::isfinite(v))
        throw ConfigError(where + ": " + key + " expects a number, got '" + text + "'");
    return v * scale;
}

inline std::vector<double> parse_list(const std::string& text, const std::string& where, const std::string& key) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_number(item, where, key));
    }
    return out;
}

inline bool parse_bool(const std::string& text, const std::string& where, const std::string& key) {
    const std::string t = lower(trim(text));
    if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
    if (t == "false" || t == "no" || t == "0" || t == "off") return false;
    throw ConfigError(where + ": " + key + " expects true/false, got '" + text + "'");
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt(v[k]);
    return s;
}

// Typed accessors over one section.
class SectionReader {
public:
    SectionReader(IniDocument& doc, std::string section, std::string missing_origin)
        : doc_(doc), section_(std::move(section)), missing_origin_(std::move(missing_origin)) {}

    std::string key_name(const std::string& k) const { return "[" + section_ + "]." + k; }

    const IniEntry* raw(const std::string& k) { return doc_.find(section_, k); }

    const IniEntry& required(const std::string& k) {
        const IniEntry* e = raw(k);
        if (!e) throw ConfigError(missing_origin_ + ": missing required key " + key_name(k));
        return *e;
    }

    double number(const std::string& k) {
        const auto& e = required(k);
        return parse_number(e.value, e.origin, key_name(k));
    }

    double number(const std::string& k, double fallback) {
        const IniEntry* e = raw(k);
        return e ? parse_number(e->value, e->origin, key_name(k)) : fallback;
    }

    std::size_t count(const std::string& k, std::size_t fallback) {
        const IniEntry* e = raw(k);
        if (!e) return fallback;
        const double v = parse_number(e->value, e->origin, key_name(k));
        if (v < 0.0 || v != std::floor(v))
            throw ConfigError(e->origin + ": " + key_name(k) + " expects a non-negative integer");
        return static_cast<std::size_t>(v);
    }

    bool flag(const std::string& k, bool fallback) {
        const IniEntry* e = raw(k);
        return e ? parse_bool(e->value, e->origin, key_name(k)) : fallback;
    }

    std::optional<std::string> text(const std::string& k) {
        const IniEntry* e = raw(k);
        if (!e) return std::nullopt;
        return e->value;
    }

    std::vector<double> list(const std::string& k) {
        const IniEntry* e = raw(k);
        return e ? parse_list(e->value, e->origin, key_name(k)) : std::vector<double>{};
    }

    // Re-throws validation failures of a value with its origin.
    template <class Fn>
    void check(const std::string& k, Fn&& fn) {
        const IniEntry* e = raw(k);
        try {
            fn();
        } catch (const ConfigError& err) {
            throw ConfigError((e ? e->origin : missing_origin_) + ": " + err.what());
        }
    }

    const std::string& origin() const { return missing_origin_; }

private:
    IniDocument& doc_;
    std::string section_;
    std::string missing_origin_;
};

inline std::string section_origin(const IniDocument& doc, const std::string& s, const std::string& fallback) {
    return doc.has_section(s) ? doc.section(s).origin : fallback;
}

inline JumpSpec read_jumps(IniDocument& doc, const std::string& section, const std::string& name) {
    if (!doc.has_section(section)) return NoJumps{};
    SectionReader r(doc, section, section_origin(doc, section, name));
    const std::string model = lower(r.text("model").value_or("none"));
    JumpSpec spec;
    if (model == "none") {
        spec = NoJumps{};
    } else if (model == "merton") {
        spec = MertonJumps{r.number("intensity"), r.number("mean"), r.number("stdev")};
    } else if (model == "kou") {
        spec = KouJumps{r.number("intensity"), r.number("p"), r.number("theta1"), r.number("theta2")};
    } else if (model == "exp_negative") {
        spec = ExpNegativeJumps{r.number("intensity"), r.number("rate")};
    } else if (model == "exp_positive") {
        spec = ExpPositiveJumps{r.number("intensity"), r.number("rate")};
    } else {
        throw ConfigError(r.required("model").origin + ": unknown jump model '" + model + "'");
    }
    const IniEntry* m = r.raw("model");
    try {
        validate(spec, "[" + section + "]");
    } catch (const ConfigError& e) {
        std::string key = "model";
        const std::string what = e.what();
        for (const char* k : {"theta1", "theta2", "p", "stdev", "rate", "intensity"})
            if (what.find(k) != std::string::npos && r.raw(k)) {
                key = k;
                break;
            }
        const IniEntry* at = r.raw(key);
        throw ConfigError((at ? at->origin : (m ? m->origin : r.origin())) + ": " + what);
    }
    return spec;
}

inline LocalVolTable read_local_vol_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open local vol table " + path.string());
    LocalVolTable t;
    std::string line;
    std::size_t lineno = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
        if (cells.size() < 2) throw ConfigError(where + ": expected at least two columns");
        if (header) {
            for (std::size_t c = 1; c < cells.size(); ++c) t.assets.push_back(parse_number(cells[c], where, "asset"));
            header = false;
            continue;
        }
        if (cells.size() != t.assets.size() + 1) throw ConfigError(where + ": column count differs from header");
        t.times.push_back(parse_number(cells[0], where, "time"));
        std::vector<double> row;
        for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_number(cells[c], where, "vol"));
        t.vols.push_back(std::move(row));
    }
    try {
        t.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return t;
}

inline std::vector<std::vector<double>> parse_probes(const std::string& text, const std::string& where) {
    std::vector<std::vector<double>> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ';')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_list(item, where, "[run].probes"));
    }
    return out;
}

inline void apply_numerics(IniDocument& doc, NumericsConfig& num, const std::string& name) {
    SectionReader r(doc, "numerics", section_origin(doc, "numerics", name));
    if (auto e = r.raw("nodes")) {
        num.nodes.clear();
        for (double v : parse_list(e->value, e->origin, "[numerics].nodes")) {
            if (v < 1.0 || v != std::floor(v))
                throw ConfigError(e->origin + ": [numerics].nodes expects positive integers");
            num.nodes.push_back(static_cast<std::size_t>(v));
        }
    }
    num.dtau = r.number("dtau", num.dtau);
    num.scheme.theta = r.number("theta", num.scheme.theta);
    auto& it = num.iteration;
    it.picard_tol = r.number("picard_tol", it.picard_tol);
    it.picard_max = r.count("picard_max", it.picard_max);
    it.adi_tol = r.number("adi_tol", it.adi_tol);
    it.adi_max = r.count("adi_max", it.adi_max);
    it.shift_offset = r.number("shift_offset", it.shift_offset);
    if (auto s = r.text("solver")) {
        const std::string v = lower(*s);
        if (v == "adi")
            it.solver = ResolventSolver::adi;
        else if (v == "direct")
            it.solver = ResolventSolver::direct;
        else
            throw ConfigError(r.required("solver").origin + ": [numerics].solver expects adi or direct");
    }
    num.cluster_strength = r.number("cluster_strength", num.cluster_strength);
    num.cluster_width = r.number("cluster_width", num.cluster_width);
    num.upper_sd = r.number("upper_sd", num.upper_sd);
    if (auto s = r.text("grid_space")) {
        const std::string v = lower(*s);
        if (v == "log")
            num.grid_space = GridSpace::log;
        else if (v == "asset")
            num.grid_space = GridSpace::asset;
        else
            throw ConfigError(r.required("grid_space").origin + ": [numerics].grid_space expects log or asset");
    }
    if (r.raw("diff_upper")) num.diff_upper = r.list("diff_upper");
    num.jump_upper = r.number("jump_upper", num.jump_upper);
    num.jump_nodes = r.count("jump_nodes", num.jump_nodes);
    num.padding = r.count("padding", num.padding);
    num.smooth_terminal = r.flag("smooth_terminal", num.smooth_terminal);
    num.paper_literal_j12 = r.flag("paper_literal_j12", num.paper_literal_j12);
    num.kou_monotone = r.flag("kou_monotone", num.kou_monotone);
    num.merton.tail_tolerance = r.number("merton_tail_tolerance", num.merton.tail_tolerance);
    num.merton.window_sd = r.number("merton_window_sd", num.merton.window_sd);
}

}  // namespace detail

inline std::string RunConfig::serialize_numerics() const {
    using detail::fmt;
    const auto& n = numerics;
    std::ostringstream o;
    o << "[numerics]\n";
    o << "nodes = ";
    for (std::size_t k = 0; k < n.nodes.size(); ++k) o << (k ? ", " : "") << n.nodes[k];
    o << "\ndtau = " << fmt(n.dtau) << "\n";
    o << "theta = " << fmt(n.scheme.theta) << "\n";
    o << "picard_tol = " << fmt(n.iteration.picard_tol) << "\n";
    o << "picard_max = " << n.iteration.picard_max << "\n";
    o << "adi_tol = " << fmt(n.iteration.adi_tol) << "\n";
    o << "adi_max = " << n.iteration.adi_max << "\n";
    o << "shift_offset = " << fmt(n.iteration.shift_offset) << "\n";
    o << "solver = " << (n.iteration.solver == ResolventSolver::adi ? "adi" : "direct") << "\n";
    o << "cluster_strength = " << fmt(n.cluster_strength) << "\n";
    o << "cluster_width = " << fmt(n.cluster_width) << "\n";
    o << "upper_sd = " << fmt(n.upper_sd) << "\n";
    o << "grid_space = " << (n.grid_space == GridSpace::log ? "log" : "asset") << "\n";
    if (!n.diff_upper.empty()) o << "diff_upper = " << detail::fmt_list(n.diff_upper) << "\n";
    o << "jump_upper = " << fmt(n.jump_upper) << "\n";
    o << "jump_nodes = " << n.jump_nodes << "\n";
    o << "padding = " << n.padding << "\n";
    o << "smooth_terminal = " << (n.smooth_terminal ? "true" : "false") << "\n";
    o << "paper_literal_j12 = " << (n.paper_literal_j12 ? "true" : "false") << "\n";
    o << "kou_monotone = " << (n.kou_monotone ? "true" : "false") << "\n";
    o << "merton_tail_tolerance = " << fmt(n.merton.tail_tolerance) << "\n";
    o << "merton_window_sd = " << fmt(n.merton.window_sd) << "\n";
    return o.str();
}

/// Parses a configuration from a stream; `base_dir` resolves relative
/// local-vol paths.
inline RunConfig parse_config(std::istream& in, const std::string& name, const std::filesystem::path& base_dir,
                              const EnvMap& env) {
    using namespace detail;
    IniDocument doc = IniDocument::parse(in, name);
    doc.apply_environment(env);
    RunConfig cfg;
    Portfolio& p = cfg.portfolio;

    std::size_t n = 0;
    while (doc.has_section("bank." + std::to_string(n + 1))) ++n;
    if (n < 1 || n > 3) throw ConfigError(name + ": expected sections [bank.1] .. [bank.n] with n in 1..3");
    std::set<std::string> known{"portfolio", "rate", "liabilities", "correlation", "jumps.common", "numerics",
                                "mc", "run"};

    {
        SectionReader r(doc, "portfolio", section_origin(doc, "portfolio", name));
        p.maturity = r.number("maturity", 1.0);
        p.liability_growth = r.flag("liability_growth", true);
        if (!(p.maturity > 0.0)) throw ConfigError(r.required("maturity").origin + ": maturity must be > 0");
    }
    {
        SectionReader r(doc, "rate", section_origin(doc, "rate", name));
        p.rate.knots = r.list("knots");
        p.rate.rates = r.raw("rates") ? r.list("rates") : std::vector<double>{0.0};
        r.check("rates", [&] { p.rate.validate(); });
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::string s = "bank." + std::to_string(i + 1);
        known.insert(s);
        SectionReader r(doc, s, doc.section(s).origin);
        BankSpec b;
        b.a0 = r.number("a0");
        b.l0 = r.number("l0");
        b.recovery = r.number("recovery");
        if (auto path = r.text("local_vol")) {
            b.local_vol = read_local_vol_csv(base_dir / *path);
            b.sigma = r.number("sigma", 0.0);
        } else if (r.raw("local_vol_times")) {
            LocalVolTable t;
            t.times = r.list("local_vol_times");
            t.assets = r.list("local_vol_assets");
            const auto flat = r.list("local_vol_values");
            if (flat.size() != t.times.size() * t.assets.size())
                throw ConfigError(r.required("local_vol_values").origin + ": [" + s +
                                  "].local_vol_values needs times x assets entries");
            for (std::size_t k = 0; k < t.times.size(); ++k)
                t.vols.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(k * t.assets.size()),
                                    flat.begin() + static_cast<std::ptrdiff_t>((k + 1) * t.assets.size()));
            r.check("local_vol_values", [&] { t.validate(); });
            b.local_vol = std::move(t);
            b.sigma = r.number("sigma", 0.0);
        } else {
            b.sigma = r.number("sigma");
        }
        auto at = [&](const char* k) { return r.required(k).origin; };
        if (!(b.a0 > 0.0)) throw ConfigError(at("a0") + ": [" + s + "].a0 must be > 0");
        if (!(b.l0 >= 0.0)) throw ConfigError(at("l0") + ": [" + s + "].l0 must be >= 0");
        if (!(b.recovery >= 0.0 && b.recovery <= 1.0))
            throw ConfigError(at("recovery") + ": [" + s + "].recovery must lie in [0, 1]");
        if (!b.local_vol && !(b.sigma > 0.0)) throw ConfigError(at("sigma") + ": [" + s + "].sigma must be > 0");
        p.banks.push_back(std::move(b));
    }

    p.liabilities.assign(n, std::vector<double>(n, 0.0));
    {
        SectionReader r(doc, "liabilities", section_origin(doc, "liabilities", name));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const std::string k = "l" + std::to_string(i + 1) + std::to_string(j + 1);
                p.liabilities[i][j] = r.number(k, 0.0);
                if (!(p.liabilities[i][j] >= 0.0))
                    throw ConfigError(r.required(k).origin + ": [liabilities]." + k + " must be >= 0");
            }
    }

    p.corr.rho.assign(n, std::vector<double>(n, 0.0));
    p.corr.loadings.assign(n, 0.0);
    {
        SectionReader r(doc, "correlation", section_origin(doc, "correlation", name));
        for (std::size_t i = 0; i < n; ++i) {
            p.corr.rho[i][i] = 1.0;
            p.corr.loadings[i] = r.number("b" + std::to_string(i + 1), 0.0);
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const std::string k = "rho" + std::to_string(i + 1) + std::to_string(j + 1);
                p.corr.rho[i][j] = p.corr.rho[j][i] = r.number(k, 0.0);
            }
        const bool cosine = r.raw("phi_xy") || r.raw("rho_xz") || r.raw("rho_yz");
        if (cosine) {
            if (n != 3) throw ConfigError(r.origin() + ": rho_xz/rho_yz/phi_xy require three banks");
            if (r.raw("rho12") || r.raw("rho13") || r.raw("rho23"))
                throw ConfigError(r.origin() + ": give either rho12/rho13/rho23 or rho_xz/rho_yz/phi_xy");
            const double xz = r.number("rho_xz"), yz = r.number("rho_yz"), phi = r.number("phi_xy");
            cfg.cosine_law = std::array<double, 3>{xz, yz, phi};
            const double xy = correlation_cosine_law(yz, xz, phi);
            p.corr.rho[0][1] = p.corr.rho[1][0] = xy;
            p.corr.rho[0][2] = p.corr.rho[2][0] = xz;
            p.corr.rho[1][2] = p.corr.rho[2][1] = yz;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const std::string s = "jumps." + std::to_string(i + 1);
        known.insert(s);
        p.idio.push_back(read_jumps(doc, s, name));
    }
    p.corr.common = read_jumps(doc, "jumps.common", name);

    try {
        validate(p);
    } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
    }

    apply_numerics(doc, cfg.numerics, name);
    try {
        cfg.numerics.validate(n);
        cfg.numerics.steps(p.maturity);
    } catch (const ConfigError& e) {
        throw ConfigError(section_origin(doc, "numerics", name) + ": " + e.what());
    }

    {
        SectionReader r(doc, "mc", section_origin(doc, "mc", name));
        auto& mc = cfg.mc;
        mc.paths = r.count("paths", mc.paths);
        mc.steps_per_year = r.count("steps_per_year", mc.steps_per_year);
        mc.seed = r.count("seed", mc.seed);
        mc.antithetic = r.flag("antithetic", mc.antithetic);
        mc.workers = r.count("workers", mc.workers);
        mc.batch = r.count("batch", mc.batch);
        if (mc.paths < 1 || mc.steps_per_year < 1 || mc.workers < 1 || mc.batch < 1)
            throw ConfigError(r.origin() + ": [mc] counts must be >= 1");
    }
    {
        SectionReader r(doc, "run", section_origin(doc, "run", name));
        const std::size_t bank = r.count("bank", 1);
        if (bank < 1 || bank > n) throw ConfigError(r.required("bank").origin + ": [run].bank out of range");
        cfg.bank = bank - 1;
        if (auto e = r.raw("probes")) {
            cfg.probes = parse_probes(e->value, e->origin);
            for (const auto& pt : cfg.probes)
                if (pt.size() != n) throw ConfigError(e->origin + ": every probe needs one coordinate per bank");
        }
    }

    doc.reject_unused(known);
    return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path, const EnvMap& env) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration " + path.string());
    return parse_config(in, path.string(), path.parent_path(), env);
}

inline RunConfig parse_config(const std::filesystem::path& path) { return parse_config(path, process_environment()); }

inline RunConfig parse_config_string(const std::string& text, const EnvMap& env = {}) {
    std::istringstream in(text);
    return parse_config(in, "<string>", std::filesystem::current_path(), env);
}

namespace detail {

inline void write_jumps(std::ostream& o, const std::string& section, const JumpSpec& spec) {
    o << "\n[" << section << "]\n";
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, NoJumps>) {
                o << "model = none\n";
            } else if constexpr (std::is_same_v<T, MertonJumps>) {
                o << "model = merton\nintensity = " << fmt(s.intensity) << "\nmean = " << fmt(s.mean)
                  << "\nstdev = " << fmt(s.stdev) << "\n";
            } else if constexpr (std::is_same_v<T, KouJumps>) {
                o << "model = kou\nintensity = " << fmt(s.intensity) << "\np = " << fmt(s.p)
                  << "\ntheta1 = " << fmt(s.theta1) << "\ntheta2 = " << fmt(s.theta2) << "\n";
            } else if constexpr (std::is_same_v<T, ExpNegativeJumps>) {
                o << "model = exp_negative\nintensity = " << fmt(s.intensity) << "\nrate = " << fmt(s.rate) << "\n";
            } else {
                o << "model = exp_positive\nintensity = " << fmt(s.intensity) << "\nrate = " << fmt(s.rate) << "\n";
            }
        },
        spec);
}

}  // namespace detail

/// Canonical text form; parse_config_string(serialize_config(c)) == c.
inline std::string serialize_config(const RunConfig& cfg) {
    using detail::fmt;
    using detail::fmt_list;
    const Portfolio& p = cfg.portfolio;
    const std::size_t n = p.size();
    std::ostringstream o;
    o << "[portfolio]\nmaturity = " << fmt(p.maturity) << "\nliability_growth = "
      << (p.liability_growth ? "true" : "false") << "\n";
    o << "\n[rate]\nrates = " << fmt_list(p.rate.rates) << "\n";
    if (!p.rate.knots.empty()) o << "knots = " << fmt_list(p.rate.knots) << "\n";
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = p.banks[i];
        o << "\n[bank." << i + 1 << "]\na0 = " << fmt(b.a0) << "\nl0 = " << fmt(b.l0)
          << "\nrecovery = " << fmt(b.recovery) << "\nsigma = " << fmt(b.sigma) << "\n";
        if (b.local_vol) {
            std::vector<double> flat;
            for (const auto& row : b.local_vol->vols) flat.insert(flat.end(), row.begin(), row.end());
            o << "local_vol_times = " << fmt_list(b.local_vol->times) << "\nlocal_vol_assets = "
              << fmt_list(b.local_vol->assets) << "\nlocal_vol_values = " << fmt_list(flat) << "\n";
        }
    }
    o << "\n[liabilities]\n";
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) o << "l" << i + 1 << j + 1 << " = " << fmt(p.liabilities[i][j]) << "\n";
    o << "\n[correlation]\n";
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) o << "rho" << i + 1 << j + 1 << " = " << fmt(p.corr.rho[i][j]) << "\n";
    for (std::size_t i = 0; i < n; ++i) o << "b" << i + 1 << " = " << fmt(p.corr.loadings[i]) << "\n";
    for (std::size_t i = 0; i < n; ++i) detail::write_jumps(o, "jumps." + std::to_string(i + 1), p.idio[i]);
    detail::write_jumps(o, "jumps.common", p.corr.common);
    o << "\n" << cfg.serialize_numerics();
    o << "\n[mc]\npaths = " << cfg.mc.paths << "\nsteps_per_year = " << cfg.mc.steps_per_year
      << "\nseed = " << cfg.mc.seed << "\nantithetic = " << (cfg.mc.antithetic ? "true" : "false")
      << "\nworkers = " << cfg.mc.workers << "\nbatch = " << cfg.mc.batch << "\n";
    o << "\n[run]\nbank = " << cfg.bank + 1 << "\n";
    if (!cfg.probes.empty()) {
        o << "probes = ";
        for (std::size_t k = 0; k < cfg.probes.size(); ++k) o << (k ? "; " : "") << fmt_list(cfg.probes[k]);
        o << "\n";
    }
    return o.str();
}

}  // namespace ldl
