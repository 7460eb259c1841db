#pragma once

// Backward-time Strang splitting for joint and marginal survival fields.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ldl/diffusion.hpp"
#include "ldl/errors.hpp"
#include "ldl/field.hpp"
#include "ldl/grid.hpp"
#include "ldl/jump_common.hpp"
#include "ldl/jump_idio.hpp"
#include "ldl/model.hpp"

namespace ldl {

struct NumericsConfig {
    std::vector<std::size_t> nodes{100};  // per axis; a single entry applies to all
    double dtau = 0.01;
    SchemeParams scheme;
    IterationControls iteration;
    double cluster_strength = 4.0;
    double cluster_width = 0.05;
    double upper_sd = 6.0;           // diffusion upper bound, see default_upper_bound
    GridSpace grid_space = GridSpace::log;
    std::vector<double> diff_upper;  // optional per-axis override
    double jump_upper = 1e5;
    std::size_t jump_nodes = 80;
    std::size_t padding = 2;
    bool smooth_terminal = true;
    bool paper_literal_j12 = false;
    bool kou_monotone = true;  // first-order rows where the second-order stencil loses positivity
    MertonKernelOptions merton;

    std::size_t nodes_for(std::size_t axis) const {
        if (nodes.empty()) throw ConfigError("[numerics].nodes is empty");
        return nodes.size() == 1 ? nodes.front() : nodes.at(axis);
    }

    std::size_t steps(double maturity) const {
        if (!(dtau > 0.0)) throw ConfigError("[numerics].dtau must be > 0");
        const double n = std::round(maturity / dtau);
        if (n < 1.0 || std::abs(n * dtau - maturity) > 1e-9 * std::max(1.0, maturity))
            throw ConfigError("[numerics].dtau must divide the maturity");
        return static_cast<std::size_t>(n);
    }

    void validate(std::size_t n_axes) const {
        if (!(nodes.size() == 1 || nodes.size() == n_axes))
            throw ConfigError("[numerics].nodes needs 1 or n entries");
        for (auto n : nodes)
            if (n < 8) throw ConfigError("[numerics].nodes must be >= 8");
        if (!(scheme.theta > 0.0 && scheme.theta <= 1.0)) throw ConfigError("[numerics].theta must lie in (0, 1]");
        if (!(iteration.picard_tol > 0.0 && iteration.adi_tol > 0.0))
            throw ConfigError("[numerics] tolerances must be > 0");
        if (iteration.picard_max < 1 || iteration.adi_max < 1)
            throw ConfigError("[numerics] iteration caps must be >= 1");
        if (!(cluster_strength >= 0.0 && cluster_width > 0.0)) throw ConfigError("[numerics] invalid clustering");
        if (!(upper_sd > 0.0)) throw ConfigError("[numerics].upper_sd must be > 0");
        if (!(jump_upper > 0.0) || jump_nodes < 1) throw ConfigError("[numerics] invalid jump grid");
        if (!diff_upper.empty() && diff_upper.size() != n_axes)
            throw ConfigError("[numerics].diff_upper needs n entries");
    }
};

struct StageTimings {
    double diffusion = 0.0;
    double idio_jumps = 0.0;
    double common_jumps = 0.0;
    double boundary = 0.0;
    double total = 0.0;
    std::size_t steps = 0;

    void merge(const StageTimings& o) {
        diffusion += o.diffusion;
        idio_jumps += o.idio_jumps;
        common_jumps += o.common_jumps;
        boundary += o.boundary;
    }
};

/// Survival values on the jump grids of the participating banks.
struct SurvivalField {
    std::vector<std::size_t> banks;
    std::vector<Grid1D> grids;
    std::vector<std::size_t> lo, hi;  // barrier and top diffusion index per axis
    NdField values;
    double tau = 0.0;
    IterationStats stats;
    StageTimings timings;
    std::vector<std::string> warnings;
    bool conv1 = true;

    std::size_t rank() const { return grids.size(); }
};

// ---------------------------------------------------------------------------
// Grids

/// Barrier level actually used on the grid: non-positive levels are replaced
/// by a small floor (the bank cannot default before maturity).
inline double effective_barrier(double level, double a0, double terminal, std::vector<std::string>* warnings,
                                std::size_t bank) {
    if (level > 0.0) return level;
    double floor = 0.01 * a0;
    if (terminal > 0.0) floor = std::min(floor, 0.5 * terminal);
    if (warnings)
        warnings->push_back("bank " + std::to_string(bank + 1) + ": non-positive pre-maturity barrier " +
                            std::to_string(level) + " replaced by floor " + std::to_string(floor));
    return floor;
}

/// a0 * exp(upper_sd * sd + loss): sd is the log-asset standard deviation over
/// the horizon (diffusion and jumps), loss the mean downward log drift.
inline double default_upper_bound(const Portfolio& p, const NumericsConfig& num, std::size_t bank) {
    const auto& b = p.banks[bank];
    const double sigma = b.vol(0.0, b.a0);
    const double loading = p.corr.loadings[bank];
    const double var = sigma * sigma + jump_variance(p.idio[bank]) + loading * loading * jump_variance(p.corr.common);
    const double drift = -0.5 * sigma * sigma - log_mgf(p.idio[bank], 1.0) - log_mgf(p.corr.common, loading) +
                         jump_mean(p.idio[bank]) + loading * jump_mean(p.corr.common);
    const double t = p.maturity;
    return b.a0 * std::exp(num.upper_sd * std::sqrt(var * t) + std::max(0.0, -drift * t));
}

/// Jump grid for one bank supporting every barrier level in `levels`
/// (lowest one at the diffusion grid's first node, the rest pinned).
inline Grid1D build_axis_grid(const Portfolio& p, const NumericsConfig& num, std::size_t bank, std::size_t axis,
                              std::vector<double> levels) {
    const auto& b = p.banks[bank];
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const double barrier = levels.front();
    if (!(b.a0 > barrier))
        throw ConfigError("bank " + std::to_string(bank + 1) + ": initial asset value must exceed its barrier");
    double upper = num.diff_upper.empty() ? default_upper_bound(p, num, bank) : num.diff_upper.at(axis);
    for (double l : levels) upper = std::max(upper, 1.5 * l);
    Grid1D diff = build_diffusion_grid(barrier, b.a0, upper, num.nodes_for(axis), num.cluster_strength,
                                       num.cluster_width, num.grid_space);
    std::vector<double> pins(levels.begin() + 1, levels.end());
    pins.push_back(b.a0);
    pin_levels(diff, pins);
    // Tail ratio no finer than the last diffusion spacing.
    const double top = std::max(num.jump_upper, 1.01 * upper);
    const std::size_t n = diff.size();
    const double h_last = std::log(diff.nodes[n - 1] / diff.nodes[n - 2]);
    const auto coarse = static_cast<std::size_t>(std::ceil(std::log(top / upper) / h_last));
    return build_jump_grid(diff, top, std::clamp<std::size_t>(coarse, 1, num.jump_nodes), num.padding);
}

// ---------------------------------------------------------------------------
// Per-bank operators shared by all marchers of a run.

struct BankOperators {
    Grid1D grid;
    std::vector<double> logx;
    std::optional<MertonKernel> merton;
    std::optional<ExpJumpStepper> exp_step;
    double merton_compensator = 0.0;
};

struct RunContext {
    const Portfolio* portfolio = nullptr;
    NumericsConfig num;
    std::vector<BankOperators> ops;  // indexed by portfolio bank
    IterationStats stats;
    StageTimings timings;
    std::vector<std::string> warnings;
    bool conv1 = true;

    RunContext(const Portfolio& p, const NumericsConfig& n, std::vector<Grid1D> grids)
        : portfolio(&p), num(n) {
        const double half = 0.5 * num.dtau;
        for (std::size_t i = 0; i < p.size(); ++i) {
            BankOperators b;
            b.grid = std::move(grids[i]);
            b.logx = b.grid.log_nodes();
            const JumpSpec& j = p.idio[i];
            if (auto* m = std::get_if<MertonJumps>(&j); m && m->intensity > 0.0) {
                b.merton = build_merton_kernel(b.logx, *m, half, num.merton);
                b.merton_compensator = log_mgf(j, 1.0);
            } else if ((std::holds_alternative<ExpNegativeJumps>(j) || std::holds_alternative<ExpPositiveJumps>(j)) &&
                       jump_intensity(j) > 0.0) {
                b.exp_step.emplace(exp_jump_generator(b.grid.nodes, j), half);
            }
            ops.push_back(std::move(b));
        }
    }
};

/// Position inside one split step: first diffusion half, idiosyncratic
/// jumps per bank (ascending), common jumps, idiosyncratic jumps per bank
/// (descending), second diffusion half. Child marchers are read at the
/// parent's stage so that boundary data follow the same splitting.
namespace stage {
inline constexpr int count = 9;
inline constexpr int diffusion_first = 0;
inline constexpr int common = 4;
inline constexpr int end = 8;
inline constexpr int idio_up(std::size_t bank) { return 1 + static_cast<int>(bank); }
inline constexpr int idio_down(std::size_t bank) { return 7 - static_cast<int>(bank); }
}  // namespace stage

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Fraction of the log-cell around node k lying above `level`.
inline double cell_fraction(const std::vector<double>& logx, std::size_t k, double level, bool smooth) {
    const double ll = std::log(level);
    if (!smooth) return logx[k] > ll ? 1.0 : 0.0;
    const double left = k > 0 ? 0.5 * (logx[k - 1] + logx[k]) : logx[k];
    const double right = k + 1 < logx.size() ? 0.5 * (logx[k] + logx[k + 1]) : logx[k];
    if (right <= left) return logx[k] > ll ? 1.0 : 0.0;
    return std::clamp((right - ll) / (right - left), 0.0, 1.0);
}

}  // namespace detail

/// One lock-step backward-time solver over a subset of banks.
class Marcher {
public:
    using BoundaryFn = std::function<double(const Index3&, int)>;

    Marcher(RunContext& ctx, std::vector<std::size_t> banks, std::vector<std::size_t> lo, NdField terminal,
            BoundaryFn boundary, std::vector<Marcher*> children)
        : ctx_(ctx), banks_(std::move(banks)), lo_(std::move(lo)), boundary_(std::move(boundary)),
          children_(std::move(children)), cur_(std::move(terminal)) {
        const Portfolio& p = *ctx_.portfolio;
        for (std::size_t a = 0; a < banks_.size(); ++a) {
            const Grid1D& g = ctx_.ops[banks_[a]].grid;
            hi_.push_back(g.diff_end - 1);
            if (!(lo_[a] + 2 <= hi_[a])) throw ConfigError("diffusion box is too small");
        }
        // Non-interior nodes, visited by every boundary fill.
        for (std::size_t k = 0; k < cur_.size(); ++k) {
            Index3 idx = cur_.unravel(k);
            bool interior = true;
            for (std::size_t a = 0; a < banks_.size(); ++a)
                if (idx[a] <= lo_[a] || idx[a] >= hi_[a]) interior = false;
            if (!interior) {
                boundary_nodes_.push_back(k);
                boundary_index_.push_back(idx);
            }
        }
        if (auto* kou = std::get_if<KouJumps>(&p.corr.common); kou && kou->intensity > 0.0) {
            std::vector<std::vector<double>> xs;
            std::vector<double> b;
            for (auto bank : banks_) {
                xs.push_back(ctx_.ops[bank].logx);
                b.push_back(p.corr.loadings[bank]);
            }
            common_.emplace(std::move(xs), *kou, std::move(b), ctx_.num.paper_literal_j12, ctx_.num.kou_monotone);
            if (!common_->conv1_satisfied(ctx_.num.iteration.shift_offset)) ctx_.conv1 = false;
        }
        fill_boundary(cur_, stage::end);
        prev_ = cur_;
    }

    const NdField& current() const { return cur_; }
    const NdField& previous() const { return prev_; }
    const std::vector<std::size_t>& lo() const { return lo_; }
    const std::vector<std::size_t>& hi() const { return hi_; }
    const std::vector<std::size_t>& banks() const { return banks_; }
    std::size_t steps_done() const { return steps_; }

    /// Value after the last sub-step at or before stage `s` of the latest step.
    double staged(std::size_t offset, int s) const {
        for (int c = s; c >= 0; --c)
            if (recorded_[static_cast<std::size_t>(c)]) return snapshots_[static_cast<std::size_t>(c)][offset];
        return prev_[offset];
    }

    void step_to(std::size_t n) {
        while (steps_ < n) step();
    }

private:
    void record(int s, const NdField& f) {
        snapshots_[static_cast<std::size_t>(s)] = f;
        recorded_[static_cast<std::size_t>(s)] = true;
    }

    void fill_boundary(NdField& f, int s) {
        auto t0 = std::chrono::steady_clock::now();
        for (std::size_t q = 0; q < boundary_nodes_.size(); ++q) f[boundary_nodes_[q]] = boundary_(boundary_index_[q], s);
        ctx_.timings.boundary += detail::seconds_since(t0);
    }

    DiffusionOperatorSet diffusion_ops(double tau_mid) const {
        const Portfolio& p = *ctx_.portfolio;
        const double t = std::clamp(p.maturity - tau_mid, 0.0, p.maturity);
        const double g = liability_growth_factor(p, t);
        DiffusionOperatorSet ops;
        const std::size_t r = banks_.size();
        ops.rho.assign(r, std::vector<double>(r, 0.0));
        for (std::size_t a = 0; a < r; ++a) {
            const std::size_t bank = banks_[a];
            const BankOperators& bo = ctx_.ops[bank];
            std::vector<double> x(bo.logx.begin() + static_cast<long>(lo_[a]),
                                  bo.logx.begin() + static_cast<long>(hi_[a]) + 1);
            AxisCoefficients c;
            double extra = bo.merton_compensator;
            if (common_ && !ctx_.num.paper_literal_j12) extra += common_->compensator(a);
            const double rate = frame_rate(p, t);
            for (std::size_t k = lo_[a]; k <= hi_[a]; ++k) {
                const double sigma = p.banks[bank].vol(t, bo.grid.nodes[k] * g);
                c.vol.push_back(sigma);
                c.drift.push_back(rate - 0.5 * sigma * sigma - extra);
            }
            ops.x.push_back(std::move(x));
            ops.coef.push_back(std::move(c));
            for (std::size_t b = 0; b < r; ++b) ops.rho[a][b] = a == b ? 1.0 : p.corr.rho[bank][banks_[b]];
        }
        ops.assemble();
        return ops;
    }

    void diffusion_half(NdField& q, double tau_mid, int target_stage) {
        auto t0 = std::chrono::steady_clock::now();
        Index3 lo{0, 0, 0}, hi{0, 0, 0};
        for (std::size_t a = 0; a < banks_.size(); ++a) {
            lo[a] = lo_[a];
            hi[a] = hi_[a];
        }
        NdField target = q;
        ctx_.timings.diffusion += detail::seconds_since(t0);
        fill_boundary(target, target_stage);
        t0 = std::chrono::steady_clock::now();
        NdField u = extract_box(q, lo, hi);
        NdField g = extract_box(target, lo, hi);
        SchemeParams sp = ctx_.num.scheme;
        sp.dtau = ctx_.num.dtau;
        NdField out = hv_half_step(u, g, diffusion_ops(tau_mid), sp);
        insert_box(q, out, lo);
        ctx_.timings.diffusion += detail::seconds_since(t0);
        fill_boundary(q, target_stage);
        record(target_stage, q);
    }

    void idio_jumps(NdField& q, bool reverse) {
        const std::size_t r = banks_.size();
        for (std::size_t s = 0; s < r; ++s) {
            const std::size_t a = reverse ? r - 1 - s : s;
            const BankOperators& bo = ctx_.ops[banks_[a]];
            if (!bo.merton && !bo.exp_step) continue;
            auto t0 = std::chrono::steady_clock::now();
            if (bo.merton) merton_step(q, a, *bo.merton);
            if (bo.exp_step) exp_jump_step(q, a, *bo.exp_step);
            ctx_.timings.idio_jumps += detail::seconds_since(t0);
            const int at = reverse ? stage::idio_down(banks_[a]) : stage::idio_up(banks_[a]);
            fill_boundary(q, at);
            record(at, q);
        }
    }

    void step() {
        for (Marcher* c : children_) c->step_to(steps_ + 1);
        const double dtau = ctx_.num.dtau;
        const double tau0 = static_cast<double>(steps_) * dtau;
        prev_ = cur_;
        recorded_.fill(false);
        NdField q = cur_;

        diffusion_half(q, tau0 + 0.25 * dtau, stage::diffusion_first);
        idio_jumps(q, false);
        if (common_) {
            auto t0 = std::chrono::steady_clock::now();
            q = kou_common_step(q, *common_, dtau, ctx_.num.iteration, &ctx_.stats, &warm_,
                                [this](NdField& f) { fill_boundary(f, stage::common); });
            ctx_.timings.common_jumps += detail::seconds_since(t0);
            record(stage::common, q);
        }
        idio_jumps(q, true);
        diffusion_half(q, tau0 + 0.75 * dtau, stage::end);

        cur_ = std::move(q);
        ++steps_;
    }

    RunContext& ctx_;
    std::vector<std::size_t> banks_;
    std::vector<std::size_t> lo_, hi_;
    BoundaryFn boundary_;
    std::vector<Marcher*> children_;
    NdField cur_, prev_;
    std::array<NdField, stage::count> snapshots_;
    std::array<bool, stage::count> recorded_{};
    std::vector<std::size_t> boundary_nodes_;
    std::vector<Index3> boundary_index_;
    std::optional<CommonJumpOperator> common_;
    KouWarmStart warm_;
    std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Scenario builders

/// Barrier and terminal levels of one scenario (t = 0 values).
struct ScenarioLevels {
    std::vector<double> barrier;
    std::vector<double> terminal;
};

inline ScenarioLevels scenario_levels(const Portfolio& p, std::vector<std::string>* warnings) {
    ScenarioLevels s;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double term = terminal_level(p, i);
        s.barrier.push_back(effective_barrier(pre_maturity_level(p, i), p.banks[i].a0, term, warnings, i));
        s.terminal.push_back(term);
    }
    return s;
}

/// Family of joint marchers over subsets of the portfolio's banks, sharing
/// lower-dimensional children.
class JointFamily {
public:
    JointFamily(RunContext& ctx, ScenarioLevels levels) : ctx_(ctx), levels_(std::move(levels)) {}

    Marcher& get(unsigned mask) {
        auto it = cache_.find(mask);
        if (it != cache_.end()) return *it->second;
        const Portfolio& p = *ctx_.portfolio;
        std::vector<std::size_t> banks;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (mask & (1u << i)) banks.push_back(i);
        const std::size_t r = banks.size();

        std::vector<std::size_t> lo, dims;
        for (auto b : banks) {
            lo.push_back(ctx_.ops[b].grid.index_of(levels_.barrier[b]));
            dims.push_back(ctx_.ops[b].grid.size());
        }
        // Children for every proper non-empty subset reached through an upper face.
        std::map<unsigned, Marcher*> child_of;
        std::vector<Marcher*> children;
        for (unsigned sub = 1; sub < (1u << r) - 1; ++sub) {
            unsigned child_mask = 0;
            for (std::size_t a = 0; a < r; ++a)
                if (sub & (1u << a)) child_mask |= 1u << banks[a];
            Marcher& c = get(child_mask);
            child_of[sub] = &c;
            children.push_back(&c);
        }

        NdField terminal(dims, 0.0);
        for (std::size_t k = 0; k < terminal.size(); ++k) {
            Index3 idx = terminal.unravel(k);
            double v = 1.0;
            for (std::size_t a = 0; a < r; ++a)
                v *= detail::cell_fraction(ctx_.ops[banks[a]].logx, idx[a], levels_.terminal[banks[a]],
                                           ctx_.num.smooth_terminal);
            terminal[k] = v;
        }

        std::vector<std::size_t> hi;
        for (auto b : banks) hi.push_back(ctx_.ops[b].grid.diff_end - 1);
        auto boundary = [lo, hi, r, child_of](const Index3& idx, int s) -> double {
            unsigned below = 0;
            for (std::size_t a = 0; a < r; ++a)
                if (idx[a] <= lo[a]) return 0.0;
            for (std::size_t a = 0; a < r; ++a)
                if (idx[a] < hi[a]) below |= 1u << a;
            if (below == 0) return 1.0;
            const Marcher* c = child_of.at(below);
            Index3 ci{0, 0, 0};
            std::size_t q = 0;
            for (std::size_t a = 0; a < r; ++a)
                if (below & (1u << a)) ci[q++] = idx[a];
            return c->staged(c->current().offset(ci), s);
        };
        auto m = std::make_unique<Marcher>(ctx_, banks, lo, std::move(terminal), boundary, children);
        Marcher& ref = *m;
        cache_[mask] = std::move(m);
        return ref;
    }

private:
    RunContext& ctx_;
    ScenarioLevels levels_;
    std::map<unsigned, std::unique_ptr<Marcher>> cache_;
};

inline SurvivalField collect(const RunContext& ctx, const Marcher& m, double seconds) {
    SurvivalField f;
    f.banks = m.banks();
    for (auto b : f.banks) f.grids.push_back(ctx.ops[b].grid);
    f.lo = m.lo();
    f.hi = m.hi();
    f.values = m.current();
    f.tau = static_cast<double>(m.steps_done()) * ctx.num.dtau;
    f.stats = ctx.stats;
    f.timings = ctx.timings;
    f.timings.total = seconds;
    f.timings.steps = m.steps_done();
    f.warnings = ctx.warnings;
    f.conv1 = ctx.conv1;
    return f;
}

inline std::vector<Grid1D> scenario_grids(const Portfolio& p, const NumericsConfig& num,
                                          const std::vector<std::vector<double>>& levels) {
    std::vector<Grid1D> g;
    for (std::size_t i = 0; i < p.size(); ++i) g.push_back(build_axis_grid(p, num, i, i, levels[i]));
    return g;
}

/// Joint survival on grids that also resolve the barrier levels in
/// `extra_levels` (per bank); used to share grids between scenarios.
inline SurvivalField joint_survival_on(const Portfolio& p, const NumericsConfig& num,
                                       const std::vector<std::vector<double>>& extra_levels) {
    validate(p);
    num.validate(p.size());
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> warnings;
    ScenarioLevels lv = scenario_levels(p, &warnings);
    std::vector<std::vector<double>> levels(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        levels[i] = {lv.barrier[i]};
        if (i < extra_levels.size()) levels[i].insert(levels[i].end(), extra_levels[i].begin(), extra_levels[i].end());
    }
    RunContext ctx(p, num, scenario_grids(p, num, levels));
    ctx.warnings = warnings;
    JointFamily fam(ctx, lv);
    Marcher& root = fam.get((1u << p.size()) - 1);
    const std::size_t steps = num.steps(p.maturity);
    for (std::size_t n = 1; n <= steps; ++n) root.step_to(n);
    return collect(ctx, root, detail::seconds_since(t0));
}

inline SurvivalField joint_survival(const Portfolio& p, const NumericsConfig& num) {
    return joint_survival_on(p, num, {});
}

/// Marginal survival of `bank` in a two-bank portfolio: the counterparty's
/// default raises the bank's barrier (lower face in the counterparty axis
/// carries the 1D survival under the raised barrier).
inline SurvivalField marginal_survival_on(const Portfolio& p, const NumericsConfig& num, std::size_t bank,
                                          const std::vector<std::vector<double>>& extra_levels) {
    validate(p);
    if (p.size() != 2) throw ConfigError("marginal survival requires exactly two banks");
    if (bank > 1) throw ConfigError("bank index out of range");
    num.validate(2);
    auto t0 = std::chrono::steady_clock::now();
    const std::size_t s = bank, d = 1 - bank;
    std::vector<std::string> warnings;
    ScenarioLevels lv = scenario_levels(p, &warnings);
    const Portfolio after = after_default(p, d);
    const double raised_term = terminal_level(after, s);
    const double raised = effective_barrier(pre_maturity_level(after, s), p.banks[s].a0, raised_term, &warnings, s);

    std::vector<std::vector<double>> levels(2);
    for (std::size_t i = 0; i < 2; ++i) {
        levels[i] = {lv.barrier[i]};
        if (i < extra_levels.size()) levels[i].insert(levels[i].end(), extra_levels[i].begin(), extra_levels[i].end());
    }
    levels[s].push_back(raised);
    RunContext ctx(p, num, scenario_grids(p, num, levels));
    ctx.warnings = warnings;

    const Grid1D& gs = ctx.ops[s].grid;
    const Grid1D& gd = ctx.ops[d].grid;
    const bool smooth = num.smooth_terminal;

    // v: bank s alone with its original barrier; u: with the raised barrier.
    JointFamily fam(ctx, lv);
    Marcher& v = fam.get(1u << s);
    const std::size_t lo_u = gs.index_of(raised);
    const std::size_t hi_s = gs.diff_end - 1;
    NdField term_u({gs.size()}, 0.0);
    for (std::size_t k = 0; k < gs.size(); ++k)
        term_u[k] = detail::cell_fraction(ctx.ops[s].logx, k, raised_term, smooth);
    Marcher u(ctx, {s}, {lo_u}, std::move(term_u),
              [lo_u, hi_s](const Index3& idx, int) { return idx[0] <= lo_u ? 0.0 : (idx[0] >= hi_s ? 1.0 : 0.0); },
              {});

    // Axis order follows bank order.
    std::vector<std::size_t> banks{0, 1};
    const std::size_t ax_s = s, ax_d = d;
    std::vector<std::size_t> lo(2);
    lo[ax_s] = gs.index_of(lv.barrier[s]);
    lo[ax_d] = gd.index_of(lv.barrier[d]);
    const std::size_t hi_d = gd.diff_end - 1;

    NdField terminal({ctx.ops[0].grid.size(), ctx.ops[1].grid.size()}, 0.0);
    for (std::size_t k = 0; k < terminal.size(); ++k) {
        Index3 idx = terminal.unravel(k);
        const double fd = detail::cell_fraction(ctx.ops[d].logx, idx[ax_d], lv.terminal[d], smooth);
        const double fs = detail::cell_fraction(ctx.ops[s].logx, idx[ax_s], lv.terminal[s], smooth);
        const double fs_raised = detail::cell_fraction(ctx.ops[s].logx, idx[ax_s], raised_term, smooth);
        terminal[k] = fd * fs + (1.0 - fd) * std::min(fs, fs_raised);
    }
    const std::size_t lo_s = lo[ax_s], lo_d = lo[ax_d];
    auto boundary = [&u, &v, ax_s, ax_d, lo_s, lo_d, hi_s, hi_d](const Index3& idx, int st) -> double {
        const std::size_t is = idx[ax_s], id = idx[ax_d];
        if (is <= lo_s) return 0.0;
        if (is >= hi_s) return 1.0;
        if (id <= lo_d) return u.staged(is, st);
        return v.staged(is, st);  // id >= hi_d
    };
    (void)hi_d;
    Marcher root(ctx, banks, lo, std::move(terminal), boundary, {&u, &v});
    const std::size_t steps = num.steps(p.maturity);
    for (std::size_t n = 1; n <= steps; ++n) root.step_to(n);
    return collect(ctx, root, detail::seconds_since(t0));
}

inline SurvivalField marginal_survival_2d(const Portfolio& p, const NumericsConfig& num, std::size_t bank) {
    return marginal_survival_on(p, num, bank, {});
}

enum class DeltaKind { joint, marginal };

struct DeltaResult {
    SurvivalField with_liabilities;
    SurvivalField netted;
    NdField difference;
    std::vector<std::string> warnings;
};

/// Q(portfolio) - Q(netted portfolio) on a shared grid.
inline DeltaResult delta_q(const Portfolio& p, const NumericsConfig& num, DeltaKind kind, std::size_t bank = 0) {
    DeltaResult r;
    Portfolio net = netted_scenario(p, &r.warnings);
    ScenarioLevels a = scenario_levels(p, nullptr);
    ScenarioLevels b = scenario_levels(net, nullptr);
    std::vector<std::vector<double>> for_p(p.size()), for_net(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        for_p[i] = {b.barrier[i]};
        for_net[i] = {a.barrier[i]};
    }
    if (kind == DeltaKind::marginal) {
        if (p.size() != 2) throw ConfigError("marginal delta requires exactly two banks");
        const std::size_t d = 1 - bank;
        auto raised = [&](const Portfolio& q) {
            const Portfolio after = after_default(q, d);
            return effective_barrier(pre_maturity_level(after, bank), q.banks[bank].a0, terminal_level(after, bank),
                                     nullptr, bank);
        };
        for_p[bank].push_back(raised(net));
        for_net[bank].push_back(raised(p));
        r.with_liabilities = marginal_survival_on(p, num, bank, for_p);
        r.netted = marginal_survival_on(net, num, bank, for_net);
    } else {
        r.with_liabilities = joint_survival_on(p, num, for_p);
        r.netted = joint_survival_on(net, num, for_net);
    }
    for (std::size_t i = 0; i < p.size(); ++i)
        if (r.with_liabilities.grids[i].nodes != r.netted.grids[i].nodes)
            throw NumericalError("delta_q: scenario grids differ");
    r.difference = r.with_liabilities.values;
    for (std::size_t k = 0; k < r.difference.size(); ++k) r.difference[k] -= r.netted.values[k];
    return r;
}

// ---------------------------------------------------------------------------
// Queries

/// Cubic Lagrange interpolation in log-asset coordinates inside the
/// diffusion box of each axis; exact at nodes.
inline double survival_at(const SurvivalField& f, const std::vector<double>& assets) {
    const std::size_t r = f.rank();
    if (assets.size() != r) throw DomainError("survival_at: wrong number of coordinates");
    std::vector<std::vector<std::pair<std::size_t, double>>> w(r);
    for (std::size_t a = 0; a < r; ++a) {
        const Grid1D& g = f.grids[a];
        const double v = assets[a];
        if (v <= g.nodes[f.lo[a]]) return 0.0;
        if (v >= g.nodes[f.hi[a]]) {
            w[a] = {{f.hi[a], 1.0}};
            continue;
        }
        std::size_t k = g.nearest(v);
        if (std::abs(g.nodes[k] - v) <= 1e-12 * v) {
            w[a] = {{k, 1.0}};
            continue;
        }
        auto it = std::upper_bound(g.nodes.begin(), g.nodes.end(), v);
        std::size_t j = static_cast<std::size_t>(it - g.nodes.begin()) - 1;  // nodes[j] < v < nodes[j+1]
        std::size_t first = j >= 1 ? j - 1 : 0;
        first = std::max(first, f.lo[a]);
        if (first + 3 > f.hi[a]) first = f.hi[a] - 3;
        const double x = std::log(v);
        for (std::size_t m = first; m < first + 4; ++m) {
            double l = 1.0;
            const double xm = std::log(g.nodes[m]);
            for (std::size_t q = first; q < first + 4; ++q)
                if (q != m) l *= (x - std::log(g.nodes[q])) / (xm - std::log(g.nodes[q]));
            w[a].push_back({m, l});
        }
    }
    double sum = 0.0;
    Index3 idx{0, 0, 0};
    std::function<void(std::size_t, double)> rec = [&](std::size_t a, double weight) {
        if (a == r) {
            sum += weight * f.values.at(idx);
            return;
        }
        for (auto [k, wk] : w[a]) {
            idx[a] = k;
            rec(a + 1, weight * wk);
        }
    };
    rec(0, 1.0);
    return sum;
}

struct InvariantReport {
    double min_value = 0.0;
    double max_value = 0.0;
    double barrier_face_max = 0.0;
    double monotonicity_violation = 0.0;  // largest decrease along any axis in the box
    bool ok = false;
};

inline InvariantReport check_invariants(const SurvivalField& f, double tol = 1e-9, double monotone_tol = 1e-4) {
    InvariantReport rep;
    rep.min_value = f.values.min();
    rep.max_value = f.values.max();
    const std::size_t r = f.rank();
    for (std::size_t k = 0; k < f.values.size(); ++k) {
        Index3 idx = f.values.unravel(k);
        bool in_box = true, on_barrier = false;
        for (std::size_t a = 0; a < r; ++a) {
            if (idx[a] < f.lo[a] || idx[a] > f.hi[a]) in_box = false;
            if (idx[a] <= f.lo[a]) on_barrier = true;
        }
        if (on_barrier) rep.barrier_face_max = std::max(rep.barrier_face_max, std::abs(f.values[k]));
        if (!in_box) continue;
        for (std::size_t a = 0; a < r; ++a) {
            if (idx[a] == f.hi[a]) continue;
            Index3 n = idx;
            n[a] += 1;
            rep.monotonicity_violation = std::max(rep.monotonicity_violation, f.values[k] - f.values.at(n));
        }
    }
    rep.ok = rep.min_value >= -1e-12 && rep.max_value <= 1.0 + tol && rep.barrier_face_max == 0.0 &&
             rep.monotonicity_violation <= monotone_tol;
    return rep;
}

/// Plane through the anchor node of the remaining axis: (axis_a, axis_b).
inline NdField plane_slice(const SurvivalField& f, std::size_t axis_a, std::size_t axis_b, std::size_t fixed_index) {
    if (f.rank() != 3) throw DomainError("plane_slice requires a 3D field");
    const std::size_t c = 3 - axis_a - axis_b;
    NdField out({f.values.dim(axis_a), f.values.dim(axis_b)});
    for (std::size_t i = 0; i < out.dim(0); ++i)
        for (std::size_t j = 0; j < out.dim(1); ++j) {
            Index3 idx{0, 0, 0};
            idx[axis_a] = i;
            idx[axis_b] = j;
            idx[c] = fixed_index;
            out.at({i, j, 0}) = f.values.at(idx);
        }
    return out;
}

struct Run3dResult {
    SurvivalField field;
    double rho_xy = 0.0;
    std::vector<NdField> slices;  // (0,1), (0,2), (1,2) through the anchors
};

inline Run3dResult run_3d(const Portfolio& p, const NumericsConfig& num) {
    if (p.size() != 3) throw ConfigError("run_3d requires three banks");
    Run3dResult r;
    r.rho_xy = p.corr.rho[0][1];
    r.field = joint_survival(p, num);
    const std::array<std::pair<std::size_t, std::size_t>, 3> planes{{{0, 1}, {0, 2}, {1, 2}}};
    for (auto [a, b] : planes) {
        const std::size_t c = 3 - a - b;
        r.slices.push_back(plane_slice(r.field, a, b, r.field.grids[c].index_of(p.banks[c].a0)));
    }
    return r;
}

}  // namespace ldl
