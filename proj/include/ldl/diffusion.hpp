#pragma once

// Convection-diffusion operator in log-asset coordinates and the
// Hundsdorfer-Verwer ADI step (mixed derivatives explicit).

#include <cmath>
#include <cstddef>
#include <vector>

#include "ldl/banded.hpp"
#include "ldl/errors.hpp"
#include "ldl/field.hpp"

namespace ldl {

struct AxisCoefficients {
    std::vector<double> drift;  // coefficient of d/dx
    std::vector<double> vol;    // sigma at each node
};

struct DiffusionOperatorSet {
    std::vector<std::vector<double>> x;  // log nodes of the box, per axis
    std::vector<AxisCoefficients> coef;
    std::vector<std::vector<double>> rho;

    // Filled by assemble().
    std::vector<BandedMatrix> axis_op;  // drift*C + sigma^2/2*C2, face rows zero
    std::vector<BandedMatrix> central;  // C with face rows zero

    std::size_t rank() const { return x.size(); }

    void assemble() {
        const std::size_t r = rank();
        if (coef.size() != r) throw DomainError("diffusion operator: coefficient rank mismatch");
        axis_op.clear();
        central.clear();
        for (std::size_t a = 0; a < r; ++a) {
            const std::size_t n = x[a].size();
            if (coef[a].drift.size() != n || coef[a].vol.size() != n)
                throw DomainError("diffusion operator: coefficient size mismatch");
            BandedMatrix c = derivative_matrix(x[a], DerivKind::C);
            BandedMatrix c2 = derivative_matrix(x[a], DerivKind::C2);
            std::vector<double> hv(n);
            for (std::size_t k = 0; k < n; ++k) {
                if (!(coef[a].vol[k] >= 0.0)) throw DomainError("diffusion operator: negative volatility");
                hv[k] = 0.5 * coef[a].vol[k] * coef[a].vol[k];
            }
            c.zero_row(0);
            c.zero_row(n - 1);
            BandedMatrix op = c.row_scaled(coef[a].drift).combine(1.0, c2.row_scaled(hv), 1.0);
            op.zero_row(0);
            op.zero_row(n - 1);
            axis_op.push_back(std::move(op));
            central.push_back(std::move(c));
        }
    }

    bool has_mixed() const {
        for (std::size_t a = 0; a < rank(); ++a)
            for (std::size_t b = a + 1; b < rank(); ++b)
                if (rho[a][b] != 0.0) return true;
        return false;
    }
};

struct SchemeParams {
    double theta = 0.5 + std::sqrt(3.0) / 6.0;
    double dtau = 0.01;
};

namespace detail {

inline void apply_along(const BandedMatrix& m, const NdField& in, NdField& out, std::size_t axis,
                        double scale, bool accumulate) {
    const std::size_t n = in.dim(axis), st = in.stride(axis);
    std::vector<double> buf(n), res(n);
    in.for_each_line(axis, [&](std::size_t off, const Index3&) {
        for (std::size_t k = 0; k < n; ++k) buf[k] = in[off + k * st];
        m.apply(buf.data(), res.data());
        for (std::size_t k = 0; k < n; ++k) {
            if (accumulate)
                out[off + k * st] += scale * res[k];
            else
                out[off + k * st] = scale * res[k];
        }
    });
}

inline void solve_along(const BandedLU& lu, NdField& f, std::size_t axis) {
    const std::size_t st = f.stride(axis);
    f.for_each_line(axis, [&](std::size_t off, const Index3&) { lu.solve(f.data() + off, st); });
}

inline bool on_face(const NdField& f, const Index3& idx) {
    for (std::size_t a = 0; a < f.rank(); ++a)
        if (idx[a] == 0 || idx[a] + 1 == f.dim(a)) return true;
    return false;
}

}  // namespace detail

/// Mixed-derivative part: sum over pairs of rho*sigma_a*sigma_b*d2/dx_a dx_b
/// (9-point stencil per pair). Face nodes get 0.
inline NdField apply_mixed(const NdField& u, const DiffusionOperatorSet& ops) {
    NdField out(u.dims(), 0.0);
    const std::size_t r = ops.rank();
    for (std::size_t a = 0; a < r; ++a) {
        for (std::size_t b = a + 1; b < r; ++b) {
            const double rho = ops.rho[a][b];
            if (rho == 0.0) continue;
            const auto& ca = ops.central[a];
            const auto& cb = ops.central[b];
            const std::size_t sa = u.stride(a), sb = u.stride(b);
            for (std::size_t k = 0; k < u.size(); ++k) {
                Index3 idx = u.unravel(k);
                if (detail::on_face(u, idx)) continue;
                const std::size_t i = idx[a], j = idx[b];
                double s = 0.0;
                for (int p = -1; p <= 1; ++p) {
                    const double wa = ca(i, static_cast<std::size_t>(static_cast<long>(i) + p));
                    if (wa == 0.0) continue;
                    for (int q = -1; q <= 1; ++q) {
                        const double wb = cb(j, static_cast<std::size_t>(static_cast<long>(j) + q));
                        s += wa * wb * u[static_cast<std::size_t>(static_cast<long>(k) + p * static_cast<long>(sa) +
                                                                  q * static_cast<long>(sb))];
                    }
                }
                out[k] += rho * ops.coef[a].vol[i] * ops.coef[b].vol[j] * s;
            }
        }
    }
    return out;
}

/// L u on the box (9-point stencil in 2D, 19-point in 3D); zero on faces.
inline NdField apply_L(const NdField& u, const DiffusionOperatorSet& ops) {
    if (u.rank() != ops.rank()) throw DomainError("apply_L: rank mismatch");
    NdField out = ops.has_mixed() ? apply_mixed(u, ops) : NdField(u.dims(), 0.0);
    for (std::size_t a = 0; a < ops.rank(); ++a) detail::apply_along(ops.axis_op[a], u, out, a, 1.0, true);
    return out;
}

/// One Hundsdorfer-Verwer step of length dtau/2. `u` carries the boundary
/// values at the start of the step, `target` those at its end (only face
/// entries of `target` are read).
inline NdField hv_half_step(const NdField& u, const NdField& target, const DiffusionOperatorSet& ops,
                            const SchemeParams& params) {
    if (!u.same_shape(target)) throw DomainError("hv_half_step: boundary field shape mismatch");
    if (!(params.theta > 0.0 && params.theta <= 1.0) || !(params.dtau > 0.0))
        throw ConfigError("hv_half_step: invalid scheme parameters");
    const std::size_t r = ops.rank();
    const double dt = 0.5 * params.dtau;
    const double th = params.theta;

    std::vector<std::size_t> faces;
    for (std::size_t k = 0; k < u.size(); ++k)
        if (detail::on_face(u, u.unravel(k))) faces.push_back(k);
    auto set_faces = [&](NdField& f) {
        for (std::size_t k : faces) f[k] = target[k];
    };

    std::vector<BandedLU> lus;
    lus.reserve(r);
    for (std::size_t a = 0; a < r; ++a)
        lus.emplace_back(ops.axis_op[a].shifted(-th * dt, 1.0));

    // Per-axis pieces of F evaluated at a state, reused by the corrector.
    auto axis_parts = [&](const NdField& v) {
        std::vector<NdField> parts;
        for (std::size_t a = 0; a < r; ++a) {
            NdField p(v.dims(), 0.0);
            detail::apply_along(ops.axis_op[a], v, p, a, 1.0, false);
            parts.push_back(std::move(p));
        }
        return parts;
    };
    auto total = [&](const NdField& v, const std::vector<NdField>& parts) {
        NdField f = ops.has_mixed() ? apply_mixed(v, ops) : NdField(v.dims(), 0.0);
        for (const auto& p : parts)
            for (std::size_t k = 0; k < f.size(); ++k) f[k] += p[k];
        return f;
    };

    const auto fu_parts = axis_parts(u);
    const NdField fu = total(u, fu_parts);

    NdField y = u;
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += dt * fu[k];
    set_faces(y);
    const NdField y0 = y;
    for (std::size_t a = 0; a < r; ++a) {
        for (std::size_t k = 0; k < y.size(); ++k) y[k] -= th * dt * fu_parts[a][k];
        set_faces(y);
        detail::solve_along(lus[a], y, a);
        set_faces(y);
    }

    const auto fy_parts = axis_parts(y);
    const NdField fy = total(y, fy_parts);
    NdField z = y0;
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += 0.5 * dt * (fy[k] - fu[k]);
    set_faces(z);
    for (std::size_t a = 0; a < r; ++a) {
        for (std::size_t k = 0; k < z.size(); ++k) z[k] -= th * dt * fy_parts[a][k];
        set_faces(z);
        detail::solve_along(lus[a], z, a);
        set_faces(z);
    }
    return z;
}

}  // namespace ldl
