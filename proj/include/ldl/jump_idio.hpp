#pragma once

// Idiosyncratic jump steps along one axis: the Merton compound-Poisson
// exponential as a precomputed kernel, and the banded Pade step for one-sided
// exponential jumps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <variant>
#include <vector>

#include "ldl/banded.hpp"
#include "ldl/errors.hpp"
#include "ldl/field.hpp"
#include "ldl/model.hpp"

namespace ldl {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// Row-sparse linear map on a line of nodes.
struct SparseRows {
    std::vector<std::size_t> row_start{0};
    std::vector<std::size_t> cols;
    std::vector<double> vals;

    std::size_t size() const { return row_start.size() - 1; }

    void apply(const double* in, std::size_t in_stride, double* out, std::size_t out_stride) const {
        for (std::size_t i = 0; i + 1 < row_start.size(); ++i) {
            double s = 0.0;
            for (std::size_t p = row_start[i]; p < row_start[i + 1]; ++p) s += vals[p] * in[cols[p] * in_stride];
            out[i * out_stride] = s;
        }
    }
};

namespace detail {

// Adds to `row` the weights w_j with sum_j w_j q_j = E[qhat(center + Y)],
// Y ~ N(mean, sd^2), qhat the piecewise-linear interpolant of q on x with
// constant extension past both ends. Contributions beyond `window` standard
// deviations are dropped.
inline void gaussian_row(const std::vector<double>& x, double center, double mean, double sd, double window,
                         double scale, std::vector<double>& row) {
    const std::size_t n = x.size();
    const double m = center + mean;
    if (sd <= 0.0) {
        // Point mass: linear interpolation.
        if (m <= x.front()) {
            row.front() += scale;
        } else if (m >= x.back()) {
            row.back() += scale;
        } else {
            auto it = std::upper_bound(x.begin(), x.end(), m);
            std::size_t j = static_cast<std::size_t>(it - x.begin()) - 1;
            const double w = (m - x[j]) / (x[j + 1] - x[j]);
            row[j] += scale * (1.0 - w);
            row[j + 1] += scale * w;
        }
        return;
    }
    const double lo = m - window * sd, hi = m + window * sd;
    row.front() += scale * normal_cdf((x.front() - m) / sd);
    row.back() += scale * (1.0 - normal_cdf((x.back() - m) / sd));
    std::size_t j0 = 0;
    if (lo > x.front()) j0 = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), lo) - x.begin()) - 1;
    for (std::size_t j = j0; j + 1 < n && x[j] < hi; ++j) {
        const double a = x[j], b = x[j + 1];
        const double za = (a - m) / sd, zb = (b - m) / sd;
        const double p = normal_cdf(zb) - normal_cdf(za);
        // Integral of (z - a) * density over [a, b], written to avoid cancellation.
        const double m1 = (m - a) * p - sd * (normal_pdf(zb) - normal_pdf(za));
        const double wb = std::clamp(m1 / (b - a), 0.0, p);
        row[j] += scale * (p - wb);
        row[j + 1] += scale * wb;
    }
}

}  // namespace detail

struct MertonKernelOptions {
    double tail_tolerance = 1e-12;
    double window_sd = 8.0;
};

/// One-jump transition on log nodes `x`: row i holds the weights w_j with
/// sum_j w_j q_j = E[qhat(x_i + Y)], qhat the piecewise-linear interpolant.
inline SparseRows build_single_jump_kernel(const std::vector<double>& x, const MertonJumps& spec,
                                           double window_sd = 8.0) {
    const std::size_t n = x.size();
    SparseRows rows;
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        detail::gaussian_row(x, x[i], spec.mean, spec.stdev, window_sd, 1.0, row);
        double sum = 0.0;
        for (double v : row) sum += v;
        for (std::size_t j = 0; j < n; ++j) {
            if (row[j] == 0.0) continue;
            rows.cols.push_back(j);
            rows.vals.push_back(row[j] / sum);
        }
        rows.row_start.push_back(rows.cols.size());
    }
    return rows;
}

/// exp(dt * intensity * (G - I)) = sum_k P(k) G^k with G the one-jump
/// kernel and P the Poisson weights, applied by Horner's rule. The
/// compensator drift belongs to the convection operator.
struct MertonKernel {
    SparseRows single;
    std::vector<double> weights;

    std::size_t size() const { return single.size(); }

    void apply(const double* in, std::size_t in_stride, double* out, std::size_t out_stride,
               std::vector<double>& buf) const {
        const std::size_t n = size();
        buf.resize(3 * n);
        double* q = buf.data();
        double* acc = q + n;
        double* tmp = acc + n;
        for (std::size_t j = 0; j < n; ++j) q[j] = in[j * in_stride];
        const std::size_t top = weights.size() - 1;
        for (std::size_t j = 0; j < n; ++j) acc[j] = weights[top] * q[j];
        for (std::size_t k = top; k-- > 0;) {
            single.apply(acc, 1, tmp, 1);
            for (std::size_t j = 0; j < n; ++j) acc[j] = tmp[j] + weights[k] * q[j];
        }
        for (std::size_t j = 0; j < n; ++j) out[j * out_stride] = acc[j];
    }

    std::vector<double> apply(const std::vector<double>& q) const {
        if (q.size() != size()) throw DomainError("Merton kernel size does not match the field");
        std::vector<double> out(q.size()), buf;
        apply(q.data(), 1, out.data(), 1, buf);
        return out;
    }
};

inline MertonKernel build_merton_kernel(const std::vector<double>& x, const MertonJumps& spec, double dt,
                                        const MertonKernelOptions& opt = {}) {
    if (x.size() < 2) throw ConfigError("merton kernel needs at least 2 nodes");
    if (spec.stdev > x.back() - x.front())
        throw ConfigError("Merton jump kernel wider than the grid span; extend the jump grid");
    const double lam = spec.intensity * dt;
    MertonKernel k;
    double p = std::exp(-lam), cum = 0.0;
    for (std::size_t j = 0;; ++j) {
        k.weights.push_back(p);
        cum += p;
        if (1.0 - cum <= opt.tail_tolerance || lam == 0.0 || j > 200) break;
        p *= lam / static_cast<double>(j + 1);
    }
    for (double& w : k.weights) w /= cum;
    k.single = build_single_jump_kernel(x, spec, opt.window_sd);
    return k;
}

/// Applies exp(dt * J) of the Merton jump part along `axis`.
inline void merton_step(NdField& f, std::size_t axis, const MertonKernel& kernel) {
    const std::size_t n = f.dim(axis), st = f.stride(axis);
    if (kernel.size() != n) throw DomainError("kernel size does not match the field axis");
    std::vector<double> in(n), buf;
    f.for_each_line(axis, [&](std::size_t off, const Index3&) {
        for (std::size_t j = 0; j < n; ++j) in[j] = f[off + j * st];
        kernel.apply(in.data(), 1, f.data() + off, st, buf);
    });
}

// ---------------------------------------------------------------------------
// One-sided exponential jumps in asset coordinates.

/// J = coef * M^{-1} K with K = a^2 C2 and
///   negative jumps: M = rate I + a B2,  coef = intensity / (rate + 1)
///   positive jumps: M = rate I - a F2,  coef = intensity / (rate - 1).
/// The compensator is part of J.
struct ExpJumpGenerator {
    BandedMatrix m;
    BandedMatrix k;
    double coef = 0.0;
    bool positive = false;

    std::size_t size() const { return m.size(); }

    std::vector<double> apply(const std::vector<double>& q) const {
        std::vector<double> kq = k.apply(q);
        std::vector<double> r = solve_banded(m, kq);
        for (double& v : r) v *= coef;
        return r;
    }
};

inline ExpJumpGenerator exp_jump_generator(const std::vector<double>& a, const JumpSpec& spec) {
    ExpJumpGenerator g;
    double intensity = 0.0, rate = 0.0;
    if (auto* e = std::get_if<ExpNegativeJumps>(&spec)) {
        intensity = e->intensity;
        rate = e->rate;
        if (!(rate > 0.0)) throw ConfigError("exponential jump rate must be > 0");
    } else if (auto* e = std::get_if<ExpPositiveJumps>(&spec)) {
        intensity = e->intensity;
        rate = e->rate;
        g.positive = true;
        if (!(rate > 1.0)) throw ConfigError("positive exponential jump rate must be > 1");
    } else {
        throw ConfigError("exp_jump_generator requires an exponential jump spec");
    }
    const std::size_t n = a.size();
    BandedMatrix d = derivative_matrix(a, g.positive ? DerivKind::F2 : DerivKind::B2);
    g.m = d.row_scaled(a).shifted(g.positive ? -1.0 : 1.0, rate);
    std::vector<double> a2(n);
    for (std::size_t i = 0; i < n; ++i) a2[i] = a[i] * a[i];
    g.k = derivative_matrix(a, DerivKind::C2).row_scaled(a2);
    g.coef = intensity / (g.positive ? rate - 1.0 : rate + 1.0);
    return g;
}

/// One Pade(1,1) step of length dt:
/// (M - c K) q_new = (M + c K) q_old, c = coef * dt / 2.
class ExpJumpStepper {
public:
    ExpJumpStepper(const ExpJumpGenerator& g, double dt) : c_(0.5 * g.coef * dt) {
        lhs_ = g.m.combine(1.0, g.k, -c_);
        rhs_ = g.m.combine(1.0, g.k, c_);
        lu_ = BandedLU(lhs_);
    }

    void step(double* q, std::size_t stride, std::vector<double>& buf) const {
        const std::size_t n = lhs_.size();
        buf.resize(2 * n);
        for (std::size_t i = 0; i < n; ++i) buf[i] = q[i * stride];
        rhs_.apply(buf.data(), buf.data() + n);
        lu_.solve(buf.data() + n);
        for (std::size_t i = 0; i < n; ++i) q[i * stride] = buf[n + i];
    }

    std::vector<double> step(std::vector<double> q) const {
        std::vector<double> buf;
        step(q.data(), 1, buf);
        return q;
    }

private:
    double c_;
    BandedMatrix lhs_, rhs_;
    BandedLU lu_;
};

inline void exp_jump_step(NdField& f, std::size_t axis, const ExpJumpStepper& stepper) {
    const std::size_t st = f.stride(axis);
    std::vector<double> buf;
    f.for_each_line(axis, [&](std::size_t off, const Index3&) { stepper.step(f.data() + off, st, buf); });
}

inline std::vector<double> exp_jump_step(const std::vector<double>& q, const ExpJumpGenerator& g, double dt) {
    return ExpJumpStepper(g, dt).step(q);
}

}  // namespace ldl
