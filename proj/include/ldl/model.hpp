#pragma once

// Domain model: banks with external and mutual liabilities, default barriers,
// jump specifications and correlation structure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ldl/errors.hpp"

namespace ldl {

/// Piecewise-constant forward rates. rates[0] applies on [0, knots[0]],
/// rates[k] on (knots[k-1], knots[k]], and rates.back() after the last knot.
struct RateCurve {
    std::vector<double> knots;
    std::vector<double> rates{0.0};

    static RateCurve constant(double r) { return RateCurve{{}, {r}}; }

    void validate() const {
        if (rates.size() != knots.size() + 1)
            throw ConfigError("rate curve needs exactly one more rate than knots");
        for (std::size_t k = 0; k < knots.size(); ++k) {
            if (!(knots[k] > 0.0) || (k > 0 && !(knots[k] > knots[k - 1])))
                throw ConfigError("rate curve knots must be positive and strictly increasing");
        }
        for (double r : rates)
            if (!std::isfinite(r)) throw ConfigError("rate curve contains a non-finite rate");
    }

    double rate_at(double t) const {
        auto it = std::lower_bound(knots.begin(), knots.end(), t);
        return rates[static_cast<std::size_t>(it - knots.begin())];
    }

    /// Exact integral of r over [0, t].
    double integral(double t) const {
        double acc = 0.0;
        double left = 0.0;
        for (std::size_t k = 0; k < knots.size(); ++k) {
            if (t <= knots[k]) return acc + rates[k] * (t - left);
            acc += rates[k] * (knots[k] - left);
            left = knots[k];
        }
        return acc + rates.back() * (t - left);
    }

    bool operator==(const RateCurve&) const = default;
};

inline double growth_factor(const RateCurve& rate, double t) {
    if (t < 0.0) throw DomainError("growth_factor: negative time");
    return std::exp(rate.integral(t));
}

/// sigma(t, A) on a (time x asset) grid, bilinear inside, flat outside.
struct LocalVolTable {
    std::vector<double> times;
    std::vector<double> assets;
    std::vector<std::vector<double>> vols;  // vols[time][asset]

    void validate() const {
        if (times.empty() || assets.empty()) throw ConfigError("local vol table is empty");
        if (vols.size() != times.size()) throw ConfigError("local vol table: row count mismatch");
        for (const auto& row : vols) {
            if (row.size() != assets.size())
                throw ConfigError("local vol table: column count mismatch");
            for (double v : row)
                if (!(v > 0.0) || !std::isfinite(v))
                    throw ConfigError("local vol table: volatilities must be positive");
        }
        auto increasing = [](const std::vector<double>& g) {
            return std::adjacent_find(g.begin(), g.end(), std::greater_equal<>()) == g.end();
        };
        if (!increasing(times) || !increasing(assets))
            throw ConfigError("local vol table: grids must be strictly increasing");
    }

    bool operator==(const LocalVolTable&) const = default;
};

namespace detail {

// Bracketing index and weight for clamped linear interpolation.
inline std::pair<std::size_t, double> bracket(const std::vector<double>& g, double x) {
    if (g.size() == 1 || x <= g.front()) return {0, 0.0};
    if (x >= g.back()) return {g.size() - 2, 1.0};
    auto it = std::upper_bound(g.begin(), g.end(), x);
    std::size_t i = static_cast<std::size_t>(it - g.begin()) - 1;
    return {i, (x - g[i]) / (g[i + 1] - g[i])};
}

}  // namespace detail

inline double local_vol(const LocalVolTable& table, double t, double a) {
    if (table.times.empty() || table.assets.empty())
        throw ConfigError("local_vol: empty table");
    auto [it, wt] = detail::bracket(table.times, t);
    auto [ia, wa] = detail::bracket(table.assets, a);
    auto at = [&](std::size_t r, std::size_t c) {
        r = std::min(r, table.times.size() - 1);
        c = std::min(c, table.assets.size() - 1);
        return table.vols[r][c];
    };
    const double lo = (1.0 - wa) * at(it, ia) + wa * at(it, ia + 1);
    const double hi = (1.0 - wa) * at(it + 1, ia) + wa * at(it + 1, ia + 1);
    return (1.0 - wt) * lo + wt * hi;
}

// ---------------------------------------------------------------------------
// Jumps

struct NoJumps {
    bool operator==(const NoJumps&) const = default;
};

/// Gaussian log-jumps N(mean, stdev^2) arriving at rate `intensity`.
struct MertonJumps {
    double intensity = 0.0;
    double mean = 0.0;
    double stdev = 0.0;
    bool operator==(const MertonJumps&) const = default;
};

/// Double-exponential log-jumps: up with probability p (rate theta1),
/// down with probability 1-p (rate theta2).
struct KouJumps {
    double intensity = 0.0;
    double p = 0.5;
    double theta1 = 2.0;
    double theta2 = 2.0;
    bool operator==(const KouJumps&) const = default;
};

/// One-sided exponential log-jumps y <= 0 with density rate*e^{rate*y}.
struct ExpNegativeJumps {
    double intensity = 0.0;
    double rate = 1.0;
    bool operator==(const ExpNegativeJumps&) const = default;
};

/// One-sided exponential log-jumps y >= 0 with density rate*e^{-rate*y}.
struct ExpPositiveJumps {
    double intensity = 0.0;
    double rate = 2.0;
    bool operator==(const ExpPositiveJumps&) const = default;
};

using JumpSpec = std::variant<NoJumps, MertonJumps, KouJumps, ExpNegativeJumps, ExpPositiveJumps>;

inline double jump_intensity(const JumpSpec& spec) {
    return std::visit(
        [](const auto& s) -> double {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, NoJumps>)
                return 0.0;
            else
                return s.intensity;
        },
        spec);
}

inline void validate(const JumpSpec& spec, const std::string& where) {
    auto fail = [&](const std::string& msg) { throw ConfigError(where + ": " + msg); };
    if (!(jump_intensity(spec) >= 0.0)) fail("jump intensity must be >= 0");
    if (auto* k = std::get_if<KouJumps>(&spec)) {
        if (!(k->theta1 > 1.0)) fail("Kou theta1 must satisfy theta1 > 1");
        if (!(k->theta2 > 0.0)) fail("Kou theta2 must satisfy theta2 > 0");
        if (!(k->p > 0.0 && k->p < 1.0)) fail("Kou p must satisfy 0 < p < 1");
    } else if (auto* m = std::get_if<MertonJumps>(&spec)) {
        if (!(m->stdev >= 0.0)) fail("Merton stdev must be >= 0");
    } else if (auto* e = std::get_if<ExpNegativeJumps>(&spec)) {
        if (!(e->rate > 0.0)) fail("exponential jump rate must be > 0");
    } else if (auto* e = std::get_if<ExpPositiveJumps>(&spec)) {
        if (!(e->rate > 1.0)) fail("positive exponential jump rate must be > 1");
    }
}

/// kappa(u) = integral of (e^{u y} - 1) over the Levy measure, i.e. the
/// log-MGF of the jump part per unit time. kappa(1) is the compensator.
inline double log_mgf(const JumpSpec& spec, double u) {
    struct V {
        double u;
        double operator()(const NoJumps&) const { return 0.0; }
        double operator()(const MertonJumps& m) const {
            return m.intensity * std::expm1(m.mean * u + 0.5 * m.stdev * m.stdev * u * u);
        }
        double operator()(const KouJumps& k) const {
            if (!(u < k.theta1 && u > -k.theta2))
                throw DomainError("Kou log-MGF outside the existence strip -theta2 < u < theta1");
            return k.intensity *
                   (k.p * k.theta1 / (k.theta1 - u) + (1.0 - k.p) * k.theta2 / (k.theta2 + u) - 1.0);
        }
        double operator()(const ExpNegativeJumps& e) const {
            if (!(u > -e.rate)) throw DomainError("exponential log-MGF outside existence region");
            return e.intensity * (e.rate / (e.rate + u) - 1.0);
        }
        double operator()(const ExpPositiveJumps& e) const {
            if (!(u < e.rate)) throw DomainError("exponential log-MGF outside existence region");
            return e.intensity * (e.rate / (e.rate - u) - 1.0);
        }
    };
    return std::visit(V{u}, spec);
}

/// Variance of the jump part at t = 1.
inline double jump_variance(const JumpSpec& spec) {
    struct V {
        double operator()(const NoJumps&) const { return 0.0; }
        double operator()(const MertonJumps& m) const {
            return m.intensity * (m.mean * m.mean + m.stdev * m.stdev);
        }
        double operator()(const KouJumps& k) const {
            return k.intensity *
                   (2.0 * k.p / (k.theta1 * k.theta1) + 2.0 * (1.0 - k.p) / (k.theta2 * k.theta2));
        }
        double operator()(const ExpNegativeJumps& e) const {
            return 2.0 * e.intensity / (e.rate * e.rate);
        }
        double operator()(const ExpPositiveJumps& e) const {
            return 2.0 * e.intensity / (e.rate * e.rate);
        }
    };
    return std::visit(V{}, spec);
}

/// Mean of the jump part at t = 1.
inline double jump_mean(const JumpSpec& spec) {
    struct V {
        double operator()(const NoJumps&) const { return 0.0; }
        double operator()(const MertonJumps& m) const { return m.intensity * m.mean; }
        double operator()(const KouJumps& k) const {
            return k.intensity * (k.p / k.theta1 - (1.0 - k.p) / k.theta2);
        }
        double operator()(const ExpNegativeJumps& e) const { return -e.intensity / e.rate; }
        double operator()(const ExpPositiveJumps& e) const { return e.intensity / e.rate; }
    };
    return std::visit(V{}, spec);
}

// ---------------------------------------------------------------------------
// Portfolio

struct BankSpec {
    double a0 = 100.0;
    double l0 = 0.0;
    double recovery = 0.4;
    double sigma = 0.2;
    std::optional<LocalVolTable> local_vol;

    double vol(double t, double asset) const {
        return local_vol ? ldl::local_vol(*local_vol, t, asset) : sigma;
    }

    bool operator==(const BankSpec&) const = default;
};

/// l[i][j] = L_{ij,0}, owed by bank i to bank j.
using LiabilityMatrix = std::vector<std::vector<double>>;

struct CorrelationSpec {
    std::vector<std::vector<double>> rho;  // diffusion correlation
    std::vector<double> loadings;          // b_i on the common factor
    JumpSpec common = NoJumps{};

    bool operator==(const CorrelationSpec&) const = default;
};

struct Portfolio {
    std::vector<BankSpec> banks;
    LiabilityMatrix liabilities;
    CorrelationSpec corr;
    std::vector<JumpSpec> idio;
    RateCurve rate;
    double maturity = 1.0;
    // When false, liabilities stay at their t = 0 values and the barrier is
    // flat in undiscounted asset space.
    bool liability_growth = true;

    std::size_t size() const { return banks.size(); }

    bool operator==(const Portfolio&) const = default;
};

inline std::string bank_key(std::size_t i) { return "[bank." + std::to_string(i + 1) + "]"; }

inline void validate(const Portfolio& p) {
    const std::size_t n = p.size();
    if (n < 1 || n > 3) throw ConfigError("portfolio must hold 1, 2 or 3 banks");
    if (!(p.maturity > 0.0)) throw ConfigError("maturity must be > 0");
    p.rate.validate();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = p.banks[i];
        if (!(b.a0 > 0.0)) throw ConfigError(bank_key(i) + ".a0 must be > 0");
        if (!(b.l0 >= 0.0)) throw ConfigError(bank_key(i) + ".l0 must be >= 0");
        if (!(b.recovery >= 0.0 && b.recovery <= 1.0))
            throw ConfigError(bank_key(i) + ".recovery must lie in [0, 1]");
        if (b.local_vol)
            b.local_vol->validate();
        else if (!(b.sigma > 0.0))
            throw ConfigError(bank_key(i) + ".sigma must be > 0");
    }
    if (p.liabilities.size() != n) throw ConfigError("liability matrix size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (p.liabilities[i].size() != n) throw ConfigError("liability matrix size mismatch");
        for (std::size_t j = 0; j < n; ++j) {
            double v = p.liabilities[i][j];
            if (i == j && v != 0.0) throw ConfigError("liability matrix diagonal must be zero");
            if (!(v >= 0.0)) throw ConfigError("liabilities must be >= 0");
        }
    }
    if (p.idio.size() != n) throw ConfigError("one idiosyncratic jump spec per bank required");
    for (std::size_t i = 0; i < n; ++i)
        validate(p.idio[i], "[jumps." + std::to_string(i + 1) + "]");
    validate(p.corr.common, "[jumps.common]");
    if (p.corr.loadings.size() != n) throw ConfigError("one loading per bank required");
    if (auto* k = std::get_if<KouJumps>(&p.corr.common)) {
        for (std::size_t i = 0; i < n; ++i) {
            double b = p.corr.loadings[i];
            if (!(b > -k->theta2 && b < k->theta1))
                throw ConfigError("[jumps.common].b_" + std::to_string(i + 1) +
                                  " violates -theta2 < b < theta1");
        }
    }
    const auto& rho = p.corr.rho;
    if (rho.size() != n) throw ConfigError("correlation matrix size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (rho[i].size() != n) throw ConfigError("correlation matrix size mismatch");
        if (std::abs(rho[i][i] - 1.0) > 1e-12)
            throw ConfigError("correlation matrix needs a unit diagonal");
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(rho[i][j] - rho[j][i]) > 1e-12)
                throw ConfigError("correlation matrix must be symmetric");
            if (!(std::abs(rho[i][j]) <= 1.0)) throw ConfigError("correlations must lie in [-1, 1]");
        }
    }
    // Positive semidefinite via Cholesky with a small tolerance.
    std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = rho[i][j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            if (i == j) {
                if (s < -1e-12) throw ConfigError("correlation matrix is not positive semidefinite");
                l[i][i] = std::sqrt(std::max(s, 0.0));
            } else {
                l[i][j] = l[j][j] > 0.0 ? s / l[j][j] : 0.0;
            }
        }
    }
}

/// Growth of liabilities between 0 and t (1 when liabilities are flat).
inline double liability_growth_factor(const Portfolio& p, double t) {
    return p.liability_growth ? growth_factor(p.rate, t) : 1.0;
}

/// Drift of the asset relative to the barrier frame, before convexity and
/// jump compensation: zero in growth-discounted coordinates, r(t) otherwise.
inline double frame_rate(const Portfolio& p, double t) {
    return p.liability_growth ? 0.0 : p.rate.rate_at(t);
}

/// Pre-maturity barrier level at t = 0: R_i (L_i + sum_j L_ij) - sum_j L_ji.
inline double pre_maturity_level(const Portfolio& p, std::size_t i) {
    double owed = p.banks[i].l0;
    double claims = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (j == i) continue;
        owed += p.liabilities[i][j];
        claims += p.liabilities[j][i];
    }
    return p.banks[i].recovery * owed - claims;
}

/// Barrier level at maturity (t = 0 value): L_i + sum_j L_ij - sum_j L_ji.
inline double terminal_level(const Portfolio& p, std::size_t i) {
    double v = p.banks[i].l0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (j == i) continue;
        v += p.liabilities[i][j] - p.liabilities[j][i];
    }
    return v;
}

inline double default_barrier(std::size_t bank, const Portfolio& p, double t, bool at_maturity) {
    if (t < 0.0 || t > p.maturity + 1e-12) throw DomainError("default_barrier: t outside [0, T]");
    const double g = liability_growth_factor(p, at_maturity ? p.maturity : t);
    return (at_maturity ? terminal_level(p, bank) : pre_maturity_level(p, bank)) * g;
}

/// Portfolio after `defaulter` fails: the survivors' external liabilities
/// absorb the recovery received and the full amount still owed, and all
/// mutual positions with the defaulter are closed out.
inline Portfolio after_default(const Portfolio& p, std::size_t defaulter) {
    Portfolio q = p;
    const double rd = p.banks[defaulter].recovery;
    for (std::size_t s = 0; s < p.size(); ++s) {
        if (s == defaulter) continue;
        q.banks[s].l0 = p.banks[s].l0 - rd * p.liabilities[defaulter][s] + p.liabilities[s][defaulter];
        q.liabilities[s][defaulter] = 0.0;
        q.liabilities[defaulter][s] = 0.0;
    }
    return q;
}

/// Increase of the survivor's barrier when the counterparty defaults at
/// time tau: (1 - R_s R_d) L_{ds, tau}.
inline double barrier_jump_on_default(const Portfolio& p, std::size_t survivor, std::size_t defaulter,
                                      double tau_default) {
    if (survivor == defaulter) throw DomainError("survivor and defaulter must differ");
    const double rs = p.banks[survivor].recovery;
    const double rd = p.banks[defaulter].recovery;
    return (1.0 - rs * rd) * p.liabilities[defaulter][survivor] *
           liability_growth_factor(p, tau_default);
}

/// Deterministic barrier of one bank, including the levels it moves to when
/// a counterparty defaults first. Levels are t = 0 values; scale by growth.
struct BarrierSchedule {
    double pre_maturity = 0.0;
    double terminal = 0.0;
    std::vector<double> raised_pre;       // indexed by defaulting counterparty
    std::vector<double> raised_terminal;  // idem
    RateCurve growth;
    bool grows = true;

    double level(double t, bool at_maturity, std::optional<std::size_t> defaulted = {}) const {
        double base = at_maturity ? terminal : pre_maturity;
        if (defaulted) base = at_maturity ? raised_terminal[*defaulted] : raised_pre[*defaulted];
        return grows ? base * growth_factor(growth, t) : base;
    }
};

inline BarrierSchedule barrier_schedule(const Portfolio& p, std::size_t i) {
    BarrierSchedule s;
    s.pre_maturity = pre_maturity_level(p, i);
    s.terminal = terminal_level(p, i);
    s.growth = p.rate;
    s.grows = p.liability_growth;
    s.raised_pre.assign(p.size(), s.pre_maturity);
    s.raised_terminal.assign(p.size(), s.terminal);
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (j == i) continue;
        Portfolio q = after_default(p, j);
        s.raised_pre[j] = pre_maturity_level(q, i);
        s.raised_terminal[j] = terminal_level(q, i);
    }
    return s;
}

/// Correlation of log-asset increments from the diffusion and the jump parts.
inline double instantaneous_correlation(const Portfolio& p, std::size_t i, std::size_t j) {
    if (i == j) return 1.0;
    const double var_z = jump_variance(p.corr.common);
    const auto& bi = p.banks[i];
    const auto& bj = p.banks[j];
    const double si = bi.vol(0.0, bi.a0);
    const double sj = bj.vol(0.0, bj.a0);
    const double b_i = p.corr.loadings[i];
    const double b_j = p.corr.loadings[j];
    const double var_i = jump_variance(p.idio[i]) + b_i * b_i * var_z;
    const double var_j = jump_variance(p.idio[j]) + b_j * b_j * var_z;
    const double den = std::sqrt(si * si + var_i) * std::sqrt(sj * sj + var_j);
    if (!(den > 0.0)) throw DomainError("instantaneous_correlation: zero variance");
    return (p.corr.rho[i][j] * si * sj + b_i * b_j * var_z) / den;
}

/// Correlation of x and y from their correlations with z and the angle
/// between x and its projection on the (y, z) plane.
inline double correlation_cosine_law(double rho_yz, double rho_xz, double phi_xy) {
    double r = rho_yz * rho_xz +
               std::sqrt(std::max(0.0, (1.0 - rho_yz * rho_yz) * (1.0 - rho_xz * rho_xz))) *
                   std::cos(phi_xy);
    return std::clamp(r, -1.0, 1.0);
}

/// Comparison portfolio: each external liability is reduced by what the bank
/// owes to the others, then all mutual liabilities are zeroed. Negative
/// results are clamped to zero and reported through `warnings`.
inline Portfolio netted_scenario(const Portfolio& p, std::vector<std::string>* warnings = nullptr) {
    Portfolio q = p;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double owed = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (j != i) owed += p.liabilities[i][j];
        double l = p.banks[i].l0 - owed;
        if (l < 0.0) {
            if (warnings)
                warnings->push_back("netted external liability of bank " + std::to_string(i + 1) +
                                    " is negative (" + std::to_string(l) + "); clamped to 0");
            l = 0.0;
        }
        q.banks[i].l0 = l;
        for (std::size_t j = 0; j < p.size(); ++j) q.liabilities[i][j] = 0.0;
    }
    return q;
}

inline bool has_mutual_liabilities(const Portfolio& p) {
    for (const auto& row : p.liabilities)
        for (double v : row)
            if (v != 0.0) return true;
    return false;
}

/// Martingale compensator of bank i's common-factor jumps: kappa_Z(b_i).
inline double common_compensator(const Portfolio& p, std::size_t i) {
    return log_mgf(p.corr.common, p.corr.loadings[i]);
}

}  // namespace ldl
