#pragma once

// Field CSVs and run manifests.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldl/config.hpp"
#include "ldl/errors.hpp"
#include "ldl/field.hpp"
#include "ldl/model.hpp"
#include "ldl/solver.hpp"

namespace ldl {

inline constexpr const char* version = "1.0.0";

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(serialize_config(cfg))); }

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// One row per node: coordinates then value, 17 significant digits.
inline void write_field_csv(const std::filesystem::path& path, const std::vector<std::vector<double>>& axes,
                            const NdField& values, const std::string& value_name = "q") {
    if (axes.size() != values.rank()) throw DomainError("write_field_csv: axis count differs from field rank");
    for (std::size_t a = 0; a < axes.size(); ++a)
        if (axes[a].size() != values.dim(a)) throw DomainError("write_field_csv: axis length differs from field");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    for (std::size_t a = 0; a < axes.size(); ++a) out << "a" << a + 1 << ",";
    out << value_name << "\n";
    for (std::size_t k = 0; k < values.size(); ++k) {
        const Index3 idx = values.unravel(k);
        for (std::size_t a = 0; a < axes.size(); ++a) out << format_double(axes[a][idx[a]]) << ",";
        out << format_double(values[k]) << "\n";
    }
}

inline std::vector<std::vector<double>> field_axes(const SurvivalField& f) {
    std::vector<std::vector<double>> axes;
    for (const auto& g : f.grids) axes.push_back(g.nodes);
    return axes;
}

inline void write_field_csv(const std::filesystem::path& path, const SurvivalField& f) {
    write_field_csv(path, field_axes(f), f.values);
}

/// Reads a file written by write_field_csv.
inline std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::size_t start = 0;
        while (start <= line.size()) {
            auto comma = line.find(',', start);
            if (comma == std::string::npos) comma = line.size();
            row.push_back(std::stod(line.substr(start, comma - start)));
            start = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::ordered_json jump_json(const JumpSpec& spec) {
    nlohmann::ordered_json j;
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, NoJumps>) {
                j["model"] = "none";
            } else if constexpr (std::is_same_v<T, MertonJumps>) {
                j = {{"model", "merton"}, {"intensity", s.intensity}, {"mean", s.mean}, {"stdev", s.stdev}};
            } else if constexpr (std::is_same_v<T, KouJumps>) {
                j = {{"model", "kou"}, {"intensity", s.intensity}, {"p", s.p}, {"theta1", s.theta1},
                     {"theta2", s.theta2}};
            } else if constexpr (std::is_same_v<T, ExpNegativeJumps>) {
                j = {{"model", "exp_negative"}, {"intensity", s.intensity}, {"rate", s.rate}};
            } else {
                j = {{"model", "exp_positive"}, {"intensity", s.intensity}, {"rate", s.rate}};
            }
        },
        spec);
    j["compensator"] = log_mgf(spec, 1.0);
    return j;
}

/// Resolved model quantities: correlations, barriers, compensators.
inline nlohmann::ordered_json resolved_parameters(const RunConfig& cfg) {
    const Portfolio& p = cfg.portfolio;
    const std::size_t n = p.size();
    nlohmann::ordered_json r;
    r["banks"] = n;
    r["maturity"] = p.maturity;
    r["liability_growth"] = p.liability_growth;
    r["rho"] = p.corr.rho;
    if (n == 3) {
        r["rho_xy"] = p.corr.rho[0][1];
        if (cfg.cosine_law) {
            r["cosine_law"] = {{"rho_xz", (*cfg.cosine_law)[0]},
                               {"rho_yz", (*cfg.cosine_law)[1]},
                               {"phi_xy", (*cfg.cosine_law)[2]}};
        }
    }
    nlohmann::ordered_json inst = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row;
        for (std::size_t j = 0; j < n; ++j) row.push_back(instantaneous_correlation(p, i, j));
        inst.push_back(row);
    }
    r["instantaneous_correlation"] = inst;
    nlohmann::ordered_json banks = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < n; ++i) {
        const BarrierSchedule s = barrier_schedule(p, i);
        nlohmann::ordered_json b;
        b["a0"] = p.banks[i].a0;
        b["pre_maturity_barrier"] = s.pre_maturity;
        b["terminal_barrier"] = s.terminal;
        nlohmann::ordered_json raised = nlohmann::ordered_json::object();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const Portfolio q = after_default(p, j);
            raised[std::to_string(j + 1)] = {{"pre_maturity", pre_maturity_level(q, i)},
                                             {"terminal", terminal_level(q, i)}};
        }
        b["raised_after_default"] = raised;
        b["idiosyncratic_jumps"] = jump_json(p.idio[i]);
        b["common_loading"] = p.corr.loadings[i];
        b["common_compensator"] = common_compensator(p, i);
        banks.push_back(b);
    }
    r["bank"] = banks;
    r["common_jumps"] = jump_json(p.corr.common);
    return r;
}

inline nlohmann::ordered_json stats_json(const IterationStats& s, bool conv1) {
    return {{"resolvent_solves", s.resolvent_solves},
            {"adi_iterations_total", s.adi_iterations_total},
            {"adi_iterations_max", s.adi_iterations_max},
            {"picard_steps", s.picard_steps},
            {"picard_iterations_total", s.picard_iterations_total},
            {"picard_iterations_max", s.picard_iterations_max},
            {"picard_last_residual", s.picard_last_residual},
            {"first_order_convergence_condition", conv1}};
}

inline nlohmann::ordered_json timings_json(const StageTimings& t) {
    return {{"diffusion", t.diffusion}, {"idio_jumps", t.idio_jumps}, {"common_jumps", t.common_jumps},
            {"boundary", t.boundary},   {"total", t.total},           {"steps", t.steps}};
}

inline nlohmann::ordered_json base_manifest(const RunConfig& cfg, const std::string& command) {
    nlohmann::ordered_json m;
    m["version"] = version;
    m["command"] = command;
    m["config_hash"] = config_hash(cfg);
    m["seed"] = cfg.mc.seed;
    m["resolved"] = resolved_parameters(cfg);
    return m;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace ldl
