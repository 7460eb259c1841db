#pragma once

// Common Kou jump step: Pade(1,1) in time solved by Picard iteration, with
// the first-order resolvent systems solved by Peaceman-Rachford ADI (or by
// an exact directional sweep).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ldl/banded.hpp"
#include "ldl/errors.hpp"
#include "ldl/field.hpp"
#include "ldl/model.hpp"

namespace ldl {

enum class ResolventSolver { adi, direct };

struct IterationControls {
    double picard_tol = 1e-7;
    std::size_t picard_max = 10;
    double adi_tol = 1e-6;
    std::size_t adi_max = 12;
    ResolventSolver solver = ResolventSolver::direct;
    double shift_offset = 1.0;  // s = theta + shift_offset
};

struct IterationStats {
    std::size_t resolvent_solves = 0;
    std::size_t adi_iterations_total = 0;
    std::size_t adi_iterations_max = 0;
    std::size_t picard_steps = 0;
    std::size_t picard_iterations_total = 0;
    std::size_t picard_iterations_max = 0;
    double picard_last_residual = 0.0;

    void merge(const IterationStats& o) {
        resolvent_solves += o.resolvent_solves;
        adi_iterations_total += o.adi_iterations_total;
        adi_iterations_max = std::max(adi_iterations_max, o.adi_iterations_max);
        picard_steps += o.picard_steps;
        picard_iterations_total += o.picard_iterations_total;
        picard_iterations_max = std::max(picard_iterations_max, o.picard_iterations_max);
        picard_last_residual = std::max(picard_last_residual, o.picard_last_residual);
    }
};

/// (theta - sum_j B_j) z = f on a tensor grid, each B_j a triangular banded
/// matrix acting along axis j (empty when the loading is zero).
struct FirstOrderSystem {
    double theta = 1.0;
    std::vector<BandedMatrix> b;  // per axis; size 0 means absent
    std::vector<bool> upper;      // orientation of each B_j

    bool active(std::size_t a) const { return b[a].size() > 0; }
};

namespace detail {

inline void apply_axis(const BandedMatrix& m, const NdField& in, NdField& out, std::size_t axis, double scale) {
    const std::size_t n = in.dim(axis), st = in.stride(axis);
    std::vector<double> buf(n), res(n);
    in.for_each_line(axis, [&](std::size_t off, const Index3&) {
        for (std::size_t k = 0; k < n; ++k) buf[k] = in[off + k * st];
        m.apply(buf.data(), res.data());
        for (std::size_t k = 0; k < n; ++k) out[off + k * st] += scale * res[k];
    });
}

inline void solve_axis(const BandedLU& lu, NdField& f, std::size_t axis) {
    const std::size_t st = f.stride(axis);
    f.for_each_line(axis, [&](std::size_t off, const Index3&) { lu.solve(f.data() + off, st); });
}

}  // namespace detail

/// Exact solve by a directional sweep: every B_j is triangular, so the
/// whole operator is triangular under a suitable node ordering.
inline NdField solve_direct(const FirstOrderSystem& sys, const NdField& f) {
    const std::size_t r = f.rank();
    NdField z(f.dims(), 0.0);
    std::vector<std::size_t> active;
    for (std::size_t a = 0; a < r; ++a)
        if (sys.active(a)) active.push_back(a);

    // Ordering per axis: descending for upper-triangular, ascending otherwise.
    const std::size_t total = f.size();
    Index3 idx{0, 0, 0};
    for (std::size_t t = 0; t < total; ++t) {
        std::size_t rem = t;
        for (std::size_t a = r; a-- > 0;) {
            std::size_t i = rem % f.dim(a);
            rem /= f.dim(a);
            const bool desc = sys.active(a) && sys.upper[a];
            idx[a] = desc ? f.dim(a) - 1 - i : i;
        }
        const std::size_t off = f.offset(idx);
        double diag = sys.theta;
        double s = f[off];
        for (std::size_t a : active) {
            const BandedMatrix& m = sys.b[a];
            const std::size_t i = idx[a], n = f.dim(a), st = f.stride(a);
            diag -= m(i, i);
            const std::size_t jlo = i >= m.lower() ? i - m.lower() : 0;
            const std::size_t jhi = std::min(n - 1, i + m.upper());
            for (std::size_t j = jlo; j <= jhi; ++j) {
                if (j == i) continue;
                const double v = m(i, j);
                if (v != 0.0) s += v * z[off + j * st - i * st];
            }
        }
        if (!(std::abs(diag) > 0.0)) throw NumericalError("first-order system: zero diagonal");
        z[off] = s / diag;
    }
    return z;
}

/// theta^(r-1) prod_j (theta - B_j)^{-1} f: exact with one active axis.
inline NdField factorized_guess(const FirstOrderSystem& sys, const NdField& f) {
    NdField z = f;
    bool first = true;
    for (std::size_t a = 0; a < f.rank(); ++a) {
        if (!sys.active(a)) continue;
        if (!first)
            for (std::size_t k = 0; k < z.size(); ++k) z[k] *= sys.theta;
        detail::solve_axis(BandedLU(sys.b[a].shifted(-1.0, sys.theta)), z, a);
        first = false;
    }
    if (first)
        for (std::size_t k = 0; k < z.size(); ++k) z[k] /= sys.theta;
    return z;
}

/// Peaceman-Rachford iteration (cyclic over axes in 3D) started from `z`.
/// Returns the number of iterations; throws ConvergenceError past max_iter.
inline std::size_t solve_adi(const FirstOrderSystem& sys, const NdField& f, NdField& z, double s, double tol,
                             std::size_t max_iter) {
    const std::size_t r = f.rank();
    std::vector<std::size_t> active;
    for (std::size_t a = 0; a < r; ++a)
        if (sys.active(a)) active.push_back(a);
    if (active.empty()) {
        for (std::size_t k = 0; k < f.size(); ++k) z[k] = f[k] / sys.theta;
        return 0;
    }
    if (active.size() == 1) {
        const std::size_t a = active.front();
        z = f;
        detail::solve_axis(BandedLU(sys.b[a].shifted(-1.0, sys.theta)), z, a);
        return 1;
    }
    std::vector<BandedLU> lus;
    for (std::size_t a : active) lus.emplace_back(sys.b[a].shifted(-1.0, s + 0.5 * sys.theta));

    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= max_iter; ++it) {
        NdField start = z;
        for (std::size_t q = 0; q < active.size(); ++q) {
            NdField rhs = f;
            for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] += (s - 0.5 * sys.theta) * z[k];
            for (std::size_t p = 0; p < active.size(); ++p)
                if (p != q) detail::apply_axis(sys.b[active[p]], z, rhs, active[p], 1.0);
            detail::solve_axis(lus[q], rhs, active[q]);
            z = std::move(rhs);
        }
        residual = max_abs_diff(z, start);
        if (!std::isfinite(residual)) break;
        if (residual <= tol) return it;
    }
    throw ConvergenceError("ADI resolvent iteration did not converge", residual, max_iter);
}

namespace detail {

// One-sided second-order derivative (F2 if `forward`, else B2). With
// `monotone`, rows whose spacing exceeds |b| / (2 theta) fall back to the
// first-order stencil so that theta - b A keeps a nonnegative inverse.
inline BandedMatrix one_sided_derivative(const std::vector<double>& x, bool forward, double theta, double b,
                                         bool monotone) {
    BandedMatrix d = derivative_matrix(x, forward ? DerivKind::F2 : DerivKind::B2);
    if (!monotone) return d;
    const BandedMatrix first = derivative_matrix(x, forward ? DerivKind::F : DerivKind::B);
    const double hmax = std::abs(b) / (2.0 * theta);
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        double h = 0.0;
        if (forward) {
            for (std::size_t k = i; k < std::min(n - 1, i + 2); ++k) h = std::max(h, x[k + 1] - x[k]);
        } else {
            for (std::size_t k = i; k > 0 && k + 2 > i; --k) h = std::max(h, x[k] - x[k - 1]);
        }
        if (h <= hmax) continue;
        const std::size_t jlo = forward ? i : (i >= 2 ? i - 2 : 0);
        const std::size_t jhi = forward ? std::min(n - 1, i + 2) : i;
        for (std::size_t j = jlo; j <= jhi; ++j) {
            const bool in_first = forward ? j <= i + first.upper() : j + first.lower() >= i;
            d(i, j) = in_first ? first(i, j) : 0.0;
        }
    }
    return d;
}

}  // namespace detail

/// Common Kou jump operator on the jump grid of each axis (log nodes).
class CommonJumpOperator {
public:
    CommonJumpOperator() = default;
    CommonJumpOperator(std::vector<std::vector<double>> log_nodes, KouJumps spec, std::vector<double> loadings,
                       bool paper_literal = false, bool monotone = false)
        : x_(std::move(log_nodes)), spec_(spec), b_(std::move(loadings)), literal_(paper_literal) {
        if (x_.size() != b_.size()) throw ConfigError("common jump: one loading per axis required");
        validate(JumpSpec{spec_}, "[jumps.common]");
        plus_.theta = spec_.theta1;
        minus_.theta = spec_.theta2;
        for (std::size_t a = 0; a < x_.size(); ++a) {
            const double b = b_[a];
            if (!(b > -spec_.theta2 && b < spec_.theta1))
                throw ConfigError("common jump loading violates -theta2 < b < theta1");
            if (b == 0.0) {
                plus_.b.emplace_back();
                minus_.b.emplace_back();
                plus_.upper.push_back(false);
                minus_.upper.push_back(false);
                continue;
            }
            // theta1 - b A+ with A+ = F2 for b > 0, B2 otherwise.
            const bool up_plus = b > 0.0;
            plus_.b.push_back(
                detail::one_sided_derivative(x_[a], up_plus, spec_.theta1, b, monotone).shifted(b, 0.0));
            plus_.upper.push_back(up_plus);
            // theta2 + b A- with A- = B2 for b > 0, F2 otherwise.
            const bool up_minus = b < 0.0;
            minus_.b.push_back(
                detail::one_sided_derivative(x_[a], up_minus, spec_.theta2, b, monotone).shifted(-b, 0.0));
            minus_.upper.push_back(up_minus);
        }
    }

    const KouJumps& spec() const { return spec_; }
    const std::vector<double>& loadings() const { return b_; }
    bool paper_literal() const { return literal_; }
    std::size_t rank() const { return x_.size(); }
    const FirstOrderSystem& plus_system() const { return plus_; }
    const FirstOrderSystem& minus_system() const { return minus_; }

    /// Per-axis martingale drift phi[p th1/(th1-b) + (1-p) th2/(th2+b) - 1].
    double compensator(std::size_t axis) const { return log_mgf(JumpSpec{spec_}, b_[axis]); }

    /// Smallest log spacing over active axes and the (conv1) sufficient bound
    /// s > theta/2 + 3 max|b| / h_min for the given shift offset.
    bool conv1_satisfied(double shift_offset) const {
        double hmin = std::numeric_limits<double>::infinity(), bmax = 0.0;
        for (std::size_t a = 0; a < x_.size(); ++a) {
            if (b_[a] == 0.0) continue;
            bmax = std::max(bmax, std::abs(b_[a]));
            for (std::size_t k = 1; k < x_[a].size(); ++k) hmin = std::min(hmin, x_[a][k] - x_[a][k - 1]);
        }
        if (bmax == 0.0) return true;
        const double th = std::min(spec_.theta1, spec_.theta2);
        return th + shift_offset > 0.5 * th + 3.0 * bmax / hmin;
    }

    /// z solving (theta1 - sum b_j A_j) z = p theta1 q.
    NdField resolvent_plus(const NdField& q, const IterationControls& ctl, IterationStats* stats = nullptr,
                           NdField* warm = nullptr) const {
        return resolve(plus_, spec_.p * spec_.theta1, q, ctl, stats, warm);
    }
    /// z solving (theta2 + sum b_j A_j) z = (1 - p) theta2 q.
    NdField resolvent_minus(const NdField& q, const IterationControls& ctl, IterationStats* stats = nullptr,
                            NdField* warm = nullptr) const {
        return resolve(minus_, (1.0 - spec_.p) * spec_.theta2, q, ctl, stats, warm);
    }

    /// phi [z+ + z- - q]; the literal form omits the -q term.
    NdField apply_J12(const NdField& q, const IterationControls& ctl, IterationStats* stats = nullptr,
                      NdField* warm_plus = nullptr, NdField* warm_minus = nullptr) const {
        NdField zp = resolvent_plus(q, ctl, stats, warm_plus);
        NdField zm = resolvent_minus(q, ctl, stats, warm_minus);
        const double phi = spec_.intensity;
        for (std::size_t k = 0; k < zp.size(); ++k) zp[k] = phi * (zp[k] + zm[k] - (literal_ ? 0.0 : q[k]));
        return zp;
    }

private:
    NdField resolve(const FirstOrderSystem& sys, double weight, const NdField& q, const IterationControls& ctl,
                    IterationStats* stats, NdField* warm) const {
        if (q.rank() != rank()) throw DomainError("common jump: field rank mismatch");
        NdField f = q;
        for (std::size_t k = 0; k < f.size(); ++k) f[k] *= weight;
        NdField z;
        std::size_t iters = 0;
        if (ctl.solver == ResolventSolver::direct) {
            z = solve_direct(sys, f);
        } else {
            if (warm && warm->same_shape(f)) {
                z = *warm;
            } else {
                z = factorized_guess(sys, f);
            }
            iters = solve_adi(sys, f, z, sys.theta + ctl.shift_offset, ctl.adi_tol, ctl.adi_max);
        }
        if (warm) *warm = z;
        if (stats) {
            stats->resolvent_solves += 1;
            stats->adi_iterations_total += iters;
            stats->adi_iterations_max = std::max(stats->adi_iterations_max, iters);
        }
        return z;
    }

    std::vector<std::vector<double>> x_;
    KouJumps spec_;
    std::vector<double> b_;
    bool literal_ = false;
    FirstOrderSystem plus_, minus_;
};

/// Warm-start buffers carried across Picard iterations and time steps.
struct KouWarmStart {
    NdField old_plus, old_minus, it_plus, it_minus;
};

/// q_new - q_old = (dt/2) J12 (q_new + q_old) by Picard iteration from q_old.
/// `reimpose` (optional) restores out-of-domain values after every iterate.
inline NdField kou_common_step(const NdField& q_old, const CommonJumpOperator& op, double dt,
                               const IterationControls& ctl, IterationStats* stats = nullptr,
                               KouWarmStart* warm = nullptr,
                               const std::function<void(NdField&)>& reimpose = {}) {
    if (op.spec().intensity == 0.0) return q_old;
    KouWarmStart local;
    KouWarmStart& w = warm ? *warm : local;
    NdField base = op.apply_J12(q_old, ctl, stats, &w.old_plus, &w.old_minus);
    for (std::size_t k = 0; k < base.size(); ++k) base[k] = q_old[k] + 0.5 * dt * base[k];

    NdField q = q_old;
    double residual = std::numeric_limits<double>::infinity();
    if (!w.it_plus.same_shape(q_old)) {
        w.it_plus = w.old_plus;
        w.it_minus = w.old_minus;
    }
    for (std::size_t m = 1; m <= ctl.picard_max; ++m) {
        NdField jq = op.apply_J12(q, ctl, stats, &w.it_plus, &w.it_minus);
        NdField next = base;
        for (std::size_t k = 0; k < next.size(); ++k) next[k] += 0.5 * dt * jq[k];
        if (reimpose) reimpose(next);
        residual = max_abs_diff(next, q);
        q = std::move(next);
        if (residual <= ctl.picard_tol) {
            if (stats) {
                stats->picard_steps += 1;
                stats->picard_iterations_total += m;
                stats->picard_iterations_max = std::max(stats->picard_iterations_max, m);
                stats->picard_last_residual = std::max(stats->picard_last_residual, residual);
            }
            return q;
        }
    }
    throw ConvergenceError("Picard iteration for the common jump step did not converge", residual, ctl.picard_max);
}

}  // namespace ldl
