#pragma once

// Structural checks for EM-matrices: M = s I - B with B eventually
// nonnegative and rho(B) < s.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "ldl/banded.hpp"
#include "ldl/errors.hpp"

namespace ldl {

struct MatrixPropertyReport {
    bool is_metzler = false;  // -M is Metzler (off-diagonals of M are <= 0)
    bool eventually_nonnegative = false;
    double spectral_radius_bound = 0.0;  // rho(B) / s
    bool is_em = false;
    bool partial = false;  // eigenvalue work skipped (size cap)
    double s = 0.0;
    std::size_t first_nonnegative_power = 0;  // 0 when decided by the triangular sign test
    bool triangular_sign_test = false;
    Eigen::MatrixXd b;  // the B of the decomposition that was accepted (or last tried)
};

struct EmCheckOptions {
    std::size_t size_cap = 200;
    double tolerance = 1e-12;
};

inline Eigen::MatrixXd to_eigen(const BandedMatrix& m) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.size()),
                                              static_cast<Eigen::Index>(m.size()));
    for (std::size_t i = 0; i < m.size(); ++i) {
        const std::size_t jlo = i >= m.lower() ? i - m.lower() : 0;
        const std::size_t jhi = std::min(m.size() - 1, i + m.upper());
        for (std::size_t j = jlo; j <= jhi; ++j)
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
    }
    return d;
}

inline double spectral_radius(const Eigen::MatrixXd& m) {
    if (m.rows() == 0) return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

// Smallest k0 such that B^k >= 0 (relative tolerance) for all k0 <= k <= kmax,
// or kmax + 1 if none.
inline std::size_t first_nonnegative_power(const Eigen::MatrixXd& b, std::size_t kmax, double tol) {
    Eigen::MatrixXd p = b;
    std::size_t k0 = kmax + 1;
    for (std::size_t k = 1; k <= kmax; ++k) {
        const double scale = p.cwiseAbs().maxCoeff();
        const bool nonneg = scale == 0.0 || p.minCoeff() >= -tol * scale;
        if (nonneg) {
            if (k0 > kmax) k0 = k;
        } else {
            k0 = kmax + 1;
        }
        if (scale == 0.0) return k0;
        p = (p / scale) * b;
    }
    return k0;
}

inline bool is_upper_triangular(const Eigen::MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = j + 1; i < m.rows(); ++i)
            if (m(i, j) != 0.0) return false;
    return true;
}

// Exact test for upper-triangular B with nonnegative diagonal. The entry
// B^k(i, j) is a sum over increasing index paths from i to j; its generating
// function has its dominant pole at 1 / lam, lam the largest diagonal entry
// on [i, j], of order equal to the largest number of such entries one path
// visits. The sign of the leading coefficient is the sign of the sum, over
// paths attaining that order, of the edge weights times 1 / (lam - d_p) for
// every other visited node.
inline bool upper_triangular_eventually_nonnegative(const Eigen::MatrixXd& b, double tol) {
    const Eigen::Index n = b.rows();
    const double eq = tol * std::max(1e-300, b.cwiseAbs().maxCoeff());
    Eigen::Index band = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (b(i, i) < -eq) return false;
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (b(i, j) != 0.0) band = std::max(band, j - i);
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::vector<double> value(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double lam = b(i, i);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            lam = std::max(lam, b(j, j));
            if (lam <= eq) continue;  // nilpotent on [i, j]: the entry vanishes for k >= n
            auto top = [&](Eigen::Index p) { return std::abs(b(p, p) - lam) <= eq; };
            auto weight = [&](Eigen::Index p) { return top(p) ? 1.0 : 1.0 / (lam - b(p, p)); };
            for (Eigen::Index p = i; p <= j; ++p) {
                auto& ord = order[static_cast<std::size_t>(p - i)];
                auto& val = value[static_cast<std::size_t>(p - i)];
                if (p == i) {
                    ord = top(p) ? 1 : 0;
                    val = weight(p);
                    continue;
                }
                ord = -1;
                val = 0.0;
                for (Eigen::Index q = std::max(i, p - band); q < p; ++q) {
                    const int oq = order[static_cast<std::size_t>(q - i)];
                    if (b(q, p) == 0.0 || oq < 0) continue;
                    const int o = oq + (top(p) ? 1 : 0);
                    const double v = value[static_cast<std::size_t>(q - i)] * b(q, p) * weight(p);
                    if (o > ord) {
                        ord = o;
                        val = v;
                    } else if (o == ord) {
                        val += v;
                    }
                }
            }
            const auto last = static_cast<std::size_t>(j - i);
            if (order[last] < 0) continue;  // no path: the entry is identically zero
            if (!(value[last] > 0.0)) return false;
        }
    }
    return true;
}

}  // namespace detail

/// Tries shifts s slightly above the largest diagonal entry and beyond; the
/// first decomposition with B eventually nonnegative and 0 < rho(B) < s is
/// reported. Triangular B is decided exactly by the sign of the leading
/// asymptotic term of every entry; otherwise B^k >= 0 is required for
/// N <= k <= 2N.
inline MatrixPropertyReport check_em_matrix(const Eigen::MatrixXd& m, const EmCheckOptions& opt = {}) {
    if (m.rows() != m.cols()) throw DomainError("check_em_matrix: matrix must be square");
    const std::size_t n = static_cast<std::size_t>(m.rows());
    MatrixPropertyReport rep;
    rep.is_metzler = true;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (i != j && m(i, j) > 0.0) rep.is_metzler = false;

    const double dmax = m.diagonal().maxCoeff();
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const std::vector<double> bumps = {1e-9, 1e-6, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 4.0};

    if (n > opt.size_cap) {
        rep.partial = true;
        rep.s = dmax + 1e-6 * scale;
        rep.spectral_radius_bound = std::numeric_limits<double>::quiet_NaN();
        return rep;
    }

    const bool upper = detail::is_upper_triangular(m);
    const bool lower = detail::is_upper_triangular(m.transpose());
    for (double bump : bumps) {
        const double s = dmax + bump * scale;
        Eigen::MatrixXd b = s * Eigen::MatrixXd::Identity(m.rows(), m.cols()) - m;
        const double rho = spectral_radius(b);
        rep.s = s;
        rep.b = b;
        rep.spectral_radius_bound = rho / s;
        if (upper || lower) {
            rep.triangular_sign_test = true;
            rep.first_nonnegative_power = 0;
            rep.eventually_nonnegative = detail::upper_triangular_eventually_nonnegative(
                upper ? b : Eigen::MatrixXd(b.transpose()), 1e-10);
        } else {
            const std::size_t k0 = detail::first_nonnegative_power(b, 2 * n, opt.tolerance);
            rep.first_nonnegative_power = k0;
            rep.eventually_nonnegative = k0 <= std::max<std::size_t>(n, 1);
        }
        if (rep.eventually_nonnegative && rho > 0.0 && rho < s) {
            rep.is_em = true;
            return rep;
        }
    }
    return rep;
}

inline MatrixPropertyReport check_em_matrix(const BandedMatrix& m, const EmCheckOptions& opt = {}) {
    return check_em_matrix(to_eigen(m), opt);
}

/// Closed-form ADI contraction estimate for constant coefficients on a
/// uniform grid: |(s - theta/2 + 3b/h) / (s + theta/2 - 3b/h)| with signed
/// loading b; below 1 for b < 0 once s > theta/2 + 3|b|/h.
inline double adi_convergence_factor(double s, double theta, double b, double h) {
    const double g = 3.0 * b / h;
    return std::abs((s - 0.5 * theta + g) / (s + 0.5 * theta - g));
}

inline bool entrywise_nonnegative(const Eigen::MatrixXd& m, double tol = 1e-12) {
    const double scale = std::max(1e-300, m.cwiseAbs().maxCoeff());
    return m.minCoeff() >= -tol * scale;
}

}  // namespace ldl
