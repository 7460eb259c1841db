#pragma once

// Batch commands behind the CLI: joint, marginal, delta, converge, oracle.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldl/config.hpp"
#include "ldl/errors.hpp"
#include "ldl/io.hpp"
#include "ldl/oracle.hpp"
#include "ldl/solver.hpp"

namespace ldl {

struct OracleTolerance {
    double relative_analytic = 0.01;  // FD vs closed form, nodes >= 1.05 x barrier
    double z_score = 4.0;             // FD vs Monte Carlo
    double absolute_floor = 2e-3;     // accepted |FD - MC| regardless of stderr
};

struct CommandOutcome {
    ExitCode code = ExitCode::ok;
    nlohmann::ordered_json manifest;
};

namespace detail {

inline std::vector<std::vector<double>> probe_points(const RunConfig& cfg) {
    if (!cfg.probes.empty()) return cfg.probes;
    std::vector<double> a0;
    for (const auto& b : cfg.portfolio.banks) a0.push_back(b.a0);
    return {a0};
}

inline nlohmann::ordered_json probe_values(const SurvivalField& f, const std::vector<std::vector<double>>& pts) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& pt : pts) arr.push_back({{"point", pt}, {"q", survival_at(f, pt)}});
    return arr;
}

inline nlohmann::ordered_json field_summary(const SurvivalField& f) {
    const InvariantReport inv = check_invariants(f);
    nlohmann::ordered_json grid = nlohmann::ordered_json::array();
    for (std::size_t a = 0; a < f.rank(); ++a)
        grid.push_back({{"nodes", f.grids[a].size()},
                        {"diffusion_nodes", f.grids[a].diff_end - f.grids[a].diff_begin},
                        {"barrier_node", f.grids[a].nodes[f.lo[a]]},
                        {"upper_node", f.grids[a].nodes[f.hi[a]]}});
    return {{"grid", grid},
            {"tau", f.tau},
            {"invariants",
             {{"ok", inv.ok},
              {"min", inv.min_value},
              {"max", inv.max_value},
              {"monotonicity_violation", inv.monotonicity_violation}}},
            {"iterations", stats_json(f.stats, f.conv1)},
            {"warnings", f.warnings}};
}

// Largest |difference| inside the diffusion box, and the largest where every
// coordinate exceeds `far` times its barrier.
inline nlohmann::ordered_json delta_summary(const DeltaResult& d, const std::vector<double>& barriers, double far) {
    const SurvivalField& f = d.with_liabilities;
    double sup = 0.0, far_sup = 0.0, signed_at = 0.0;
    std::vector<double> at(f.rank(), 0.0);
    for (std::size_t k = 0; k < d.difference.size(); ++k) {
        const Index3 idx = d.difference.unravel(k);
        bool in_box = true, far_field = true;
        std::vector<double> x(f.rank());
        for (std::size_t a = 0; a < f.rank(); ++a) {
            if (idx[a] < f.lo[a] || idx[a] > f.hi[a]) in_box = false;
            x[a] = f.grids[a].nodes[idx[a]];
            if (!(x[a] > far * barriers[a])) far_field = false;
        }
        if (!in_box) continue;
        const double v = std::abs(d.difference[k]);
        if (v > sup) {
            sup = v;
            at = x;
            signed_at = d.difference[k];
        }
        if (far_field) far_sup = std::max(far_sup, v);
    }
    return {{"sup_abs", sup}, {"argmax", at}, {"value_at_argmax", signed_at}, {"far_field_sup_abs", far_sup}};
}

inline std::vector<double> axis_barriers(const Portfolio& p) {
    std::vector<double> b;
    for (std::size_t i = 0; i < p.size(); ++i) b.push_back(pre_maturity_level(p, i));
    return b;
}

inline SurvivalField solve_marginal(const RunConfig& cfg, const NumericsConfig& num) {
    const Portfolio& p = cfg.portfolio;
    if (p.size() == 1) return joint_survival(p, num);
    if (p.size() == 2) return marginal_survival_2d(p, num, cfg.bank);
    throw ConfigError("marginal survival is available for one or two banks");
}

inline bool analytic_case(const Portfolio& p) {
    return p.size() == 1 && !p.banks[0].local_vol && std::holds_alternative<NoJumps>(p.idio[0]) &&
           (std::holds_alternative<NoJumps>(p.corr.common) || p.corr.loadings[0] == 0.0) && p.liability_growth &&
           p.rate.knots.empty();
}

}  // namespace detail

inline CommandOutcome run_joint(const RunConfig& cfg, const std::filesystem::path& out) {
    CommandOutcome r;
    r.manifest = base_manifest(cfg, "joint");
    const Portfolio& p = cfg.portfolio;
    SurvivalField f;
    if (p.size() == 3) {
        Run3dResult res = run_3d(p, cfg.numerics);
        f = std::move(res.field);
        const char* names[] = {"slice_12.csv", "slice_13.csv", "slice_23.csv"};
        const std::size_t planes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
        for (std::size_t s = 0; s < 3; ++s)
            write_field_csv(out / names[s], {f.grids[planes[s][0]].nodes, f.grids[planes[s][1]].nodes},
                            res.slices[s]);
    } else {
        f = joint_survival(p, cfg.numerics);
    }
    write_field_csv(out / "joint.csv", f);
    r.manifest["field"] = detail::field_summary(f);
    r.manifest["probes"] = detail::probe_values(f, detail::probe_points(cfg));
    write_json(out / "timings.json", timings_json(f.timings));
    return r;
}

inline CommandOutcome run_marginal(const RunConfig& cfg, const std::filesystem::path& out) {
    CommandOutcome r;
    r.manifest = base_manifest(cfg, "marginal");
    r.manifest["bank"] = cfg.bank + 1;
    const SurvivalField f = detail::solve_marginal(cfg, cfg.numerics);
    write_field_csv(out / "marginal.csv", f);
    r.manifest["field"] = detail::field_summary(f);
    r.manifest["probes"] = detail::probe_values(f, detail::probe_points(cfg));
    write_json(out / "timings.json", timings_json(f.timings));
    return r;
}

inline CommandOutcome run_delta(const RunConfig& cfg, const std::filesystem::path& out) {
    CommandOutcome r;
    r.manifest = base_manifest(cfg, "delta");
    const Portfolio& p = cfg.portfolio;
    const auto barriers = detail::axis_barriers(p);
    nlohmann::ordered_json timings;

    DeltaResult joint = delta_q(p, cfg.numerics, DeltaKind::joint);
    const auto axes = field_axes(joint.with_liabilities);
    write_field_csv(out / "joint_with_liabilities.csv", joint.with_liabilities);
    write_field_csv(out / "joint_netted.csv", joint.netted);
    write_field_csv(out / "delta_joint.csv", axes, joint.difference, "delta_q");
    r.manifest["joint"] = detail::delta_summary(joint, barriers, 5.0);
    r.manifest["joint"]["warnings"] = joint.warnings;
    timings["joint_with_liabilities"] = timings_json(joint.with_liabilities.timings);
    timings["joint_netted"] = timings_json(joint.netted.timings);

    if (p.size() == 2) {
        DeltaResult marg = delta_q(p, cfg.numerics, DeltaKind::marginal, cfg.bank);
        write_field_csv(out / "marginal_with_liabilities.csv", marg.with_liabilities);
        write_field_csv(out / "marginal_netted.csv", marg.netted);
        write_field_csv(out / "delta_marginal.csv", field_axes(marg.with_liabilities), marg.difference, "delta_q");
        r.manifest["marginal"] = detail::delta_summary(marg, barriers, 5.0);
        r.manifest["marginal"]["bank"] = cfg.bank + 1;
        timings["marginal_with_liabilities"] = timings_json(marg.with_liabilities.timings);
        timings["marginal_netted"] = timings_json(marg.netted.timings);
    }
    write_json(out / "timings.json", timings);
    return r;
}

/// Time-step halving and node doubling at the probe points.
inline CommandOutcome run_converge(const RunConfig& cfg, const std::filesystem::path& out) {
    CommandOutcome r;
    r.manifest = base_manifest(cfg, "converge");
    const auto pts = detail::probe_points(cfg);
    auto probe = [&](const NumericsConfig& num) {
        const SurvivalField f = joint_survival(cfg.portfolio, num);
        std::vector<double> v;
        for (const auto& pt : pts) v.push_back(survival_at(f, pt));
        return v;
    };
    auto orders = [](const std::vector<std::vector<double>>& seq, double ratio) {
        nlohmann::ordered_json o = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < seq[0].size(); ++k) {
            const double d1 = std::abs(seq[0][k] - seq[1][k]), d2 = std::abs(seq[1][k] - seq[2][k]);
            o.push_back(d1 > 0.0 && d2 > 0.0 ? std::log(d1 / d2) / std::log(ratio) : 0.0);
        }
        return o;
    };

    std::vector<std::vector<double>> temporal;
    nlohmann::ordered_json dts = nlohmann::ordered_json::array();
    for (double div : {1.0, 2.0, 4.0}) {
        NumericsConfig num = cfg.numerics;
        num.dtau /= div;
        dts.push_back(num.dtau);
        temporal.push_back(probe(num));
    }
    r.manifest["temporal"] = {{"dtau", dts}, {"values", temporal}, {"order", orders(temporal, 2.0)}};

    std::vector<std::vector<double>> spatial;
    nlohmann::ordered_json ns = nlohmann::ordered_json::array();
    for (double mul : {0.5, 1.0, 2.0}) {
        NumericsConfig num = cfg.numerics;
        for (auto& n : num.nodes) n = std::max<std::size_t>(8, static_cast<std::size_t>(std::lround(n * mul)));
        ns.push_back(num.nodes);
        spatial.push_back(probe(num));
    }
    r.manifest["spatial"] = {{"nodes", ns}, {"values", spatial}, {"order", orders(spatial, 2.0)}};
    r.manifest["points"] = pts;

    std::ofstream csv(out / "converge.csv", std::ios::binary);
    if (!csv) throw ConfigError("cannot write " + (out / "converge.csv").string());
    csv << "study,level,point,q\n";
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t k = 0; k < pts.size(); ++k) {
            csv << "temporal," << l << "," << k << "," << format_double(temporal[l][k]) << "\n";
            csv << "spatial," << l << "," << k << "," << format_double(spatial[l][k]) << "\n";
        }
    return r;
}

/// FD vs closed form (one bank, pure diffusion) or vs Monte Carlo.
inline CommandOutcome run_oracle(const RunConfig& cfg, const std::filesystem::path& out,
                                 const OracleTolerance& tol = {}) {
    CommandOutcome r;
    r.manifest = base_manifest(cfg, "oracle");
    const Portfolio& p = cfg.portfolio;
    const SurvivalField f = joint_survival(p, cfg.numerics);
    write_field_csv(out / "joint.csv", f);
    bool agree = true;

    if (detail::analytic_case(p)) {
        const double barrier = pre_maturity_level(p, 0);
        const double sigma = p.banks[0].sigma;
        const double rate = p.rate.rates.front();
        double worst = 0.0, worst_at = 0.0;
        std::vector<double> err(f.values.size(), 0.0);
        for (std::size_t k = f.lo[0]; k <= f.hi[0]; ++k) {
            const double a = f.grids[0].nodes[k];
            const double exact = analytic_survival_diffusion_1d(a, barrier, sigma, rate, p.maturity);
            err[k] = exact > 0.0 ? std::abs(f.values[k] - exact) / exact : 0.0;
            if (a >= 1.05 * barrier && err[k] > worst) {
                worst = err[k];
                worst_at = a;
            }
        }
        NdField e({err.size()});
        for (std::size_t k = 0; k < err.size(); ++k) e[k] = err[k];
        write_field_csv(out / "relative_error.csv", field_axes(f), e, "relative_error");
        const bool ok = worst < tol.relative_analytic;
        agree = agree && ok;
        r.manifest["analytic"] = {{"max_relative_error", worst},
                                  {"at", worst_at},
                                  {"tolerance", tol.relative_analytic},
                                  {"from_multiple_of_barrier", 1.05},
                                  {"agree", ok}};
    }

    nlohmann::ordered_json mc = nlohmann::ordered_json::array();
    for (const auto& pt : detail::probe_points(cfg)) {
        Portfolio q = p;
        for (std::size_t i = 0; i < q.size(); ++i) q.banks[i].a0 = pt[i];
        const double fd = survival_at(f, pt);
        const McEstimate est = mc_survival(q, McMode::joint, 0, cfg.mc);
        const double diff = fd - est.mean;
        const double z = est.stderr_ > 0.0 ? diff / est.stderr_ : 0.0;
        const bool ok = std::abs(z) <= tol.z_score || std::abs(diff) <= tol.absolute_floor;
        agree = agree && ok;
        mc.push_back({{"point", pt},
                      {"fd", fd},
                      {"mc", est.mean},
                      {"stderr", est.stderr_},
                      {"paths", est.paths},
                      {"z", z},
                      {"agree", ok}});
    }
    r.manifest["monte_carlo"] = mc;
    r.manifest["tolerance"] = {{"z", tol.z_score}, {"absolute_floor", tol.absolute_floor}};
    r.manifest["field"] = detail::field_summary(f);
    r.manifest["agree"] = agree;
    write_json(out / "timings.json", timings_json(f.timings));
    if (!agree) r.code = ExitCode::oracle_disagreement;
    return r;
}

/// Runs `command`, writes manifest.json into `out`; maps failures to exit codes.
inline ExitCode run_command(const RunConfig& cfg, const std::string& command, const std::filesystem::path& out,
                            std::ostream& log) {
    try {
        std::filesystem::create_directories(out);
        CommandOutcome r;
        if (command == "joint")
            r = run_joint(cfg, out);
        else if (command == "marginal")
            r = run_marginal(cfg, out);
        else if (command == "delta")
            r = run_delta(cfg, out);
        else if (command == "converge")
            r = run_converge(cfg, out);
        else if (command == "oracle")
            r = run_oracle(cfg, out);
        else
            throw ConfigError("unknown command '" + command + "'");
        write_json(out / "manifest.json", r.manifest);
        log << command << ": wrote " << (out / "manifest.json").string() << "\n";
        return r.code;
    } catch (const ConfigError& e) {
        log << "configuration error: " << e.what() << "\n";
        return ExitCode::config_invalid;
    } catch (const NumericalError& e) {
        log << "numerical failure: " << e.what() << "\n";
        return ExitCode::non_convergence;
    } catch (const DomainError& e) {
        log << "configuration error: " << e.what() << "\n";
        return ExitCode::config_invalid;
    }
}

}  // namespace ldl
