#pragma once

// Independent references: closed-form 1D diffusion survival, Monte Carlo
// first passage with jumps and contagion, dense generators and their
// matrix exponentials.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <thread>
#include <variant>
#include <vector>

#include "ldl/errors.hpp"
#include "ldl/jump_common.hpp"
#include "ldl/jump_idio.hpp"
#include "ldl/model.hpp"

namespace ldl {

/// Survival of a1 = a0 exp(-sigma^2 t / 2 + sigma W_t) above a flat barrier
/// (growth-discounted coordinates).
inline double analytic_survival_diffusion_1d(double a0, double barrier0, double sigma, double /*rate*/, double maturity) {
    if (!(sigma > 0.0)) throw DomainError("analytic survival: sigma must be > 0");
    if (!(barrier0 > 0.0) || !(a0 > barrier0)) return 0.0;
    const double beta = std::log(barrier0 / a0);
    const double nu = -0.5 * sigma * sigma;
    const double sd = sigma * std::sqrt(maturity);
    return normal_cdf((-beta + nu * maturity) / sd) -
           std::exp(2.0 * nu * beta / (sigma * sigma)) * normal_cdf((beta + nu * maturity) / sd);
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct McConfig {
    std::size_t paths = 100000;
    std::size_t steps_per_year = 50;
    std::uint64_t seed = 20240601;
    bool antithetic = false;
    std::size_t workers = 1;
    std::size_t batch = 4096;
};

struct McEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t paths = 0;
};

enum class McMode { joint, marginal };

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Counter-based stream keyed by (seed, path); draw k is a pure function of
// (seed, path, k).
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t path, bool mirror)
        : key_(splitmix64(seed ^ splitmix64(path * 0xD1B54A32D192ED03ULL + 1))), mirror_(mirror) {}

    double uniform() {
        const std::uint64_t bits = splitmix64(key_ + 0x632BE59BD9B4E019ULL * (++counter_));
        const double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
        return mirror_ ? 1.0 - u : u;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // Draw raw uniforms so that the mirrored path sees the negated normals.
        const bool m = mirror_;
        mirror_ = false;
        const double u1 = uniform(), u2 = uniform();
        mirror_ = m;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double z0 = r * std::cos(2.0 * std::numbers::pi * u2);
        const double z1 = r * std::sin(2.0 * std::numbers::pi * u2);
        spare_ = mirror_ ? -z1 : z1;
        has_spare_ = true;
        return mirror_ ? -z0 : z0;
    }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool mirror_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline double draw_jump(const JumpSpec& spec, CounterRng& rng) {
    struct V {
        CounterRng& rng;
        double operator()(const NoJumps&) const { return 0.0; }
        double operator()(const MertonJumps& m) const { return m.mean + m.stdev * rng.normal(); }
        double operator()(const KouJumps& k) const {
            return rng.uniform() < k.p ? rng.exponential(k.theta1) : -rng.exponential(k.theta2);
        }
        double operator()(const ExpNegativeJumps& e) const { return -rng.exponential(e.rate); }
        double operator()(const ExpPositiveJumps& e) const { return rng.exponential(e.rate); }
    };
    return std::visit(V{rng}, spec);
}

// Lower Cholesky factor of a PSD correlation matrix (zero columns allowed).
inline std::vector<std::vector<double>> cholesky_psd(const std::vector<std::vector<double>>& rho) {
    const std::size_t n = rho.size();
    std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = rho[i][j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            if (i == j)
                l[i][i] = std::sqrt(std::max(s, 0.0));
            else
                l[i][j] = l[j][j] > 0.0 ? s / l[j][j] : 0.0;
        }
    return l;
}

struct PathEvent {
    double t;
    int source;  // -1 grid point, k < n idiosyncratic jump of bank k, n common jump
};

class PathSimulator {
public:
    PathSimulator(const Portfolio& p, McMode mode, std::size_t bank, const McConfig& cfg)
        : p_(p), mode_(mode), bank_(bank), cfg_(cfg), chol_(cholesky_psd(p.corr.rho)) {
        const std::size_t n = p.size();
        for (std::size_t i = 0; i < n; ++i) {
            double c = log_mgf(p.idio[i], 1.0);
            c += log_mgf(p.corr.common, p.corr.loadings[i]);
            compensator_.push_back(c);
        }
        const double h = 1.0 / static_cast<double>(cfg.steps_per_year);
        const std::size_t m = static_cast<std::size_t>(std::ceil(p.maturity / h - 1e-9));
        for (std::size_t k = 1; k < m; ++k) grid_.push_back(static_cast<double>(k) * h);
        for (double knot : p.rate.knots)
            if (knot < p.maturity) grid_.push_back(knot);
        grid_.push_back(p.maturity);
        std::sort(grid_.begin(), grid_.end());
    }

    /// 1 if the path survives (joint: all banks; marginal: `bank`), else 0.
    double run(std::uint64_t path, bool mirror) const {
        CounterRng rng(cfg_.seed, path, mirror);
        const std::size_t n = p_.size();

        std::vector<PathEvent> events;
        for (double t : grid_) events.push_back({t, -1});
        for (std::size_t k = 0; k <= n; ++k) {
            const double lam = k < n ? jump_intensity(p_.idio[k]) : jump_intensity(p_.corr.common);
            if (lam <= 0.0) continue;
            for (double t = rng.exponential(lam); t < p_.maturity; t += rng.exponential(lam))
                events.push_back({t, static_cast<int>(k)});
        }
        std::sort(events.begin(), events.end(), [](const PathEvent& a, const PathEvent& b) {
            return a.t < b.t || (a.t == b.t && a.source > b.source);
        });

        Portfolio cur = p_;
        std::vector<bool> alive(n, true);
        std::vector<double> x(n), level(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = std::log(p_.banks[i].a0);
        auto refresh_levels = [&]() {
            for (std::size_t i = 0; i < n; ++i) {
                const double l = pre_maturity_level(cur, i);
                level[i] = l > 0.0 ? std::log(l) : -std::numeric_limits<double>::infinity();
            }
        };
        refresh_levels();

        // Returns false when the tracked event has failed.
        auto on_defaults = [&](std::vector<std::size_t> defaulted) -> bool {
            while (!defaulted.empty()) {
                for (auto j : defaulted) {
                    if (mode_ == McMode::joint || j == bank_) return false;
                    alive[j] = false;
                    cur = after_default(cur, j);
                }
                refresh_levels();
                defaulted.clear();
                for (std::size_t i = 0; i < n; ++i)
                    if (alive[i] && x[i] <= level[i]) defaulted.push_back(i);
            }
            return true;
        };

        double t = 0.0;
        std::vector<double> z(n), w(n);
        for (const PathEvent& ev : events) {
            const double dt = ev.t - t;
            if (dt > 0.0) {
                const double g = liability_growth_factor(p_, t);
                const double rate = frame_rate(p_, t);
                for (std::size_t i = 0; i < n; ++i) z[i] = rng.normal();
                std::vector<std::size_t> crossed;
                for (std::size_t i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (std::size_t k = 0; k <= i; ++k) s += chol_[i][k] * z[k];
                    const double sigma = p_.banks[i].vol(t, std::exp(x[i]) * g);
                    const double x0 = x[i];
                    x[i] += (rate - 0.5 * sigma * sigma - compensator_[i]) * dt + sigma * std::sqrt(dt) * s;
                    const double u = rng.uniform();
                    if (!alive[i]) continue;
                    if (x[i] <= level[i]) {
                        crossed.push_back(i);
                    } else if (std::isfinite(level[i])) {
                        const double pc = std::exp(-2.0 * (x0 - level[i]) * (x[i] - level[i]) / (sigma * sigma * dt));
                        if (u < pc) crossed.push_back(i);
                    }
                }
                t = ev.t;
                if (!crossed.empty() && !on_defaults(crossed)) return 0.0;
            }
            if (ev.source >= 0) {
                const std::size_t k = static_cast<std::size_t>(ev.source);
                if (k < n) {
                    x[k] += draw_jump(p_.idio[k], rng);
                } else {
                    const double zj = draw_jump(p_.corr.common, rng);
                    for (std::size_t i = 0; i < n; ++i) x[i] += p_.corr.loadings[i] * zj;
                }
                std::vector<std::size_t> crossed;
                for (std::size_t i = 0; i < n; ++i)
                    if (alive[i] && x[i] <= level[i]) crossed.push_back(i);
                if (!crossed.empty() && !on_defaults(crossed)) return 0.0;
            }
        }

        // Maturity: settle from "all survive" to a fixed point.
        for (;;) {
            std::vector<std::size_t> fails;
            for (std::size_t i = 0; i < n; ++i) {
                if (!alive[i]) continue;
                const double l = terminal_level(cur, i);
                if (!(std::exp(x[i]) > l)) fails.push_back(i);
            }
            if (fails.empty()) break;
            for (auto j : fails) {
                if (mode_ == McMode::joint || j == bank_) return 0.0;
                alive[j] = false;
                cur = after_default(cur, j);
            }
        }
        return 1.0;
    }

private:
    const Portfolio& p_;
    McMode mode_;
    std::size_t bank_;
    McConfig cfg_;
    std::vector<std::vector<double>> chol_;
    std::vector<double> compensator_;
    std::vector<double> grid_;
};

inline double pairwise_sum(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    if (hi - lo <= 8) {
        double s = 0.0;
        for (std::size_t k = lo; k < hi; ++k) s += v[k];
        return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

}  // namespace detail

/// Survival estimate; `bank` selects the tracked bank in marginal mode.
inline McEstimate mc_survival(const Portfolio& p, McMode mode, std::size_t bank, const McConfig& cfg) {
    validate(p);
    if (cfg.paths < 1) throw ConfigError("[mc].paths must be >= 1");
    if (cfg.steps_per_year < 12) throw ConfigError("[mc].steps_per_year must be >= 12");
    if (mode == McMode::marginal && bank >= p.size()) throw ConfigError("marginal bank out of range");
    detail::PathSimulator sim(p, mode, bank, cfg);

    // Sampling units: single paths, or antithetic pairs.
    const std::size_t units = cfg.antithetic ? (cfg.paths + 1) / 2 : cfg.paths;
    const std::size_t batch = std::max<std::size_t>(1, cfg.batch);
    const std::size_t nb = (units + batch - 1) / batch;
    std::vector<double> sums(nb, 0.0), squares(nb, 0.0);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t b = next++; b < nb; b = next++) {
            double s = 0.0, q = 0.0;
            const std::size_t end = std::min(units, (b + 1) * batch);
            for (std::size_t u = b * batch; u < end; ++u) {
                double v = sim.run(u, false);
                if (cfg.antithetic) v = 0.5 * (v + sim.run(u, true));
                s += v;
                q += v * v;
            }
            sums[b] = s;
            squares[b] = q;
        }
    };
    const std::size_t nw = std::max<std::size_t>(1, std::min(cfg.workers, nb));
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    const double s = detail::pairwise_sum(sums, 0, nb);
    const double q = detail::pairwise_sum(squares, 0, nb);
    const double m = static_cast<double>(units);
    McEstimate est;
    est.mean = s / m;
    const double var = units > 1 ? std::max(0.0, (q - m * est.mean * est.mean) / (m - 1.0)) : 0.0;
    est.stderr_ = std::sqrt(var / m);
    est.paths = cfg.antithetic ? 2 * units : units;
    return est;
}

// ---------------------------------------------------------------------------
// Dense references

inline constexpr std::size_t dense_node_cap = 2500;

inline Eigen::MatrixXd dense_exponential(const Eigen::MatrixXd& generator, double dt) {
    return (generator * dt).exp();
}

inline Eigen::MatrixXd dense_generator_reference(const ExpJumpGenerator& g) {
    if (g.size() > dense_node_cap) throw ConfigError("dense reference: too many nodes");
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n), k = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            m(i, j) = g.m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            k(i, j) = g.k(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
    return g.coef * m.partialPivLu().solve(k);
}

/// intensity * (G - I) with G the single-jump interpolation kernel.
inline Eigen::MatrixXd dense_generator_reference(const std::vector<double>& logx, const MertonJumps& spec) {
    if (logx.size() > dense_node_cap) throw ConfigError("dense reference: too many nodes");
    const auto n = static_cast<Eigen::Index>(logx.size());
    SparseRows g = build_single_jump_kernel(logx, spec);
    Eigen::MatrixXd j = -spec.intensity * Eigen::MatrixXd::Identity(n, n);
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t p = g.row_start[i]; p < g.row_start[i + 1]; ++p)
            j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g.cols[p])) += spec.intensity * g.vals[p];
    return j;
}

namespace detail {

// theta I - sum_j B_j on the tensor grid `dims` (row-major, last axis fastest).
inline Eigen::MatrixXd dense_first_order(const FirstOrderSystem& sys, const std::vector<std::size_t>& dims) {
    std::size_t total = 1;
    for (auto d : dims) total *= d;
    const auto n = static_cast<Eigen::Index>(total);
    Eigen::MatrixXd m = sys.theta * Eigen::MatrixXd::Identity(n, n);
    NdField shape(dims);
    for (std::size_t a = 0; a < dims.size(); ++a) {
        if (!sys.active(a)) continue;
        const BandedMatrix& b = sys.b[a];
        for (std::size_t k = 0; k < total; ++k) {
            Index3 idx = shape.unravel(k);
            const std::size_t i = idx[a];
            for (std::size_t j = 0; j < dims[a]; ++j) {
                const double v = b(i, j);
                if (v == 0.0) continue;
                Index3 col = idx;
                col[a] = j;
                m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(shape.offset(col))) -= v;
            }
        }
    }
    return m;
}

}  // namespace detail

inline Eigen::MatrixXd dense_generator_reference(const CommonJumpOperator& op, const std::vector<std::size_t>& dims) {
    std::size_t total = 1;
    for (auto d : dims) total *= d;
    if (total > dense_node_cap) throw ConfigError("dense reference: too many nodes");
    const auto& k = op.spec();
    const auto n = static_cast<Eigen::Index>(total);
    Eigen::MatrixXd plus = detail::dense_first_order(op.plus_system(), dims);
    Eigen::MatrixXd minus = detail::dense_first_order(op.minus_system(), dims);
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd j = k.p * k.theta1 * plus.partialPivLu().solve(id) +
                        (1.0 - k.p) * k.theta2 * minus.partialPivLu().solve(id);
    if (!op.paper_literal()) j -= id;
    return k.intensity * j;
}

inline Eigen::VectorXd to_vector(const NdField& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

}  // namespace ldl
