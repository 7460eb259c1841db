#pragma once

// Banded matrices (bandwidth <= 2 each side), one-dimensional derivative
// stencils on non-uniform nodes and an O(N) banded LU without pivoting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ldl/errors.hpp"

namespace ldl {

enum class DerivKind { F, B, C, F2, B2, C2 };

inline const char* to_string(DerivKind k) {
    switch (k) {
        case DerivKind::F: return "F";
        case DerivKind::B: return "B";
        case DerivKind::C: return "C";
        case DerivKind::F2: return "F2";
        case DerivKind::B2: return "B2";
        case DerivKind::C2: return "C2";
    }
    return "?";
}

class BandedMatrix {
public:
    BandedMatrix() = default;
    BandedMatrix(std::size_t n, std::size_t kl, std::size_t ku)
        : n_(n), kl_(kl), ku_(ku), w_(kl + ku + 1), band_(n * (kl + ku + 1), 0.0) {
        if (kl > 2 || ku > 2) throw ConfigError("banded matrix bandwidth must be <= 2");
    }

    static BandedMatrix identity(std::size_t n, std::size_t kl = 0, std::size_t ku = 0) {
        BandedMatrix m(n, kl, ku);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t size() const { return n_; }
    std::size_t lower() const { return kl_; }
    std::size_t upper() const { return ku_; }

    bool in_band(std::size_t i, std::size_t j) const {
        return i < n_ && j < n_ && j + kl_ >= i && j <= i + ku_;
    }

    double& operator()(std::size_t i, std::size_t j) {
        if (!in_band(i, j)) throw DomainError("banded matrix index outside the band");
        return band_[i * w_ + (j + kl_ - i)];
    }
    double operator()(std::size_t i, std::size_t j) const {
        return in_band(i, j) ? band_[i * w_ + (j + kl_ - i)] : 0.0;
    }

    /// Entry k of row i, k in [0, kl+ku], column i - kl + k.
    double* row(std::size_t i) { return band_.data() + i * w_; }
    const double* row(std::size_t i) const { return band_.data() + i * w_; }

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(n_, 0.0);
        apply(x.data(), y.data());
        return y;
    }

    void apply(const double* x, double* y) const {
        for (std::size_t i = 0; i < n_; ++i) {
            const double* r = row(i);
            const std::size_t jlo = i >= kl_ ? i - kl_ : 0;
            const std::size_t jhi = std::min(n_ - 1, i + ku_);
            double s = 0.0;
            for (std::size_t j = jlo; j <= jhi; ++j) s += r[j + kl_ - i] * x[j];
            y[i] = s;
        }
    }

    /// alpha * this + beta * other on the union of the two bands.
    BandedMatrix combine(double alpha, const BandedMatrix& other, double beta) const {
        if (other.n_ != n_) throw DomainError("banded matrix size mismatch");
        BandedMatrix r(n_, std::max(kl_, other.kl_), std::max(ku_, other.ku_));
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t jlo = i >= r.kl_ ? i - r.kl_ : 0;
            const std::size_t jhi = std::min(n_ - 1, i + r.ku_);
            for (std::size_t j = jlo; j <= jhi; ++j)
                r(i, j) = alpha * (*this)(i, j) + beta * other(i, j);
        }
        return r;
    }

    /// alpha * this + beta * I.
    BandedMatrix shifted(double alpha, double beta) const {
        BandedMatrix r = *this;
        for (double& v : r.band_) v *= alpha;
        for (std::size_t i = 0; i < n_; ++i) r(i, i) += beta;
        return r;
    }

    /// diag(d) * this.
    BandedMatrix row_scaled(const std::vector<double>& d) const {
        BandedMatrix r = *this;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t k = 0; k < w_; ++k) r.band_[i * w_ + k] *= d[i];
        return r;
    }

    /// Product of two banded matrices; the result bandwidth must stay <= 2.
    BandedMatrix operator*(const BandedMatrix& o) const {
        BandedMatrix r(n_, std::min<std::size_t>(2, kl_ + o.kl_), std::min<std::size_t>(2, ku_ + o.ku_));
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t klo = i >= kl_ ? i - kl_ : 0;
            const std::size_t khi = std::min(n_ - 1, i + ku_);
            for (std::size_t k = klo; k <= khi; ++k) {
                const double a = (*this)(i, k);
                if (a == 0.0) continue;
                const std::size_t jlo = k >= o.kl_ ? k - o.kl_ : 0;
                const std::size_t jhi = std::min(n_ - 1, k + o.ku_);
                for (std::size_t j = jlo; j <= jhi; ++j) {
                    const double v = a * o(k, j);
                    if (v == 0.0) continue;
                    if (!r.in_band(i, j)) throw DomainError("banded product exceeds bandwidth 2");
                    r(i, j) += v;
                }
            }
        }
        return r;
    }

    void zero_row(std::size_t i) { std::fill(row(i), row(i) + w_, 0.0); }

    std::vector<std::vector<double>> dense() const {
        std::vector<std::vector<double>> d(n_, std::vector<double>(n_, 0.0));
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) d[i][j] = (*this)(i, j);
        return d;
    }

    DerivKind kind = DerivKind::C;

private:
    std::size_t n_ = 0, kl_ = 0, ku_ = 0, w_ = 1;
    std::vector<double> band_;
};

/// One-dimensional derivative matrix on strictly increasing coordinates.
/// F/B are first-order one-sided, C/F2/B2 second-order first derivatives,
/// C2 the three-point second derivative. Rows that would reach past an end
/// fall back to the next lower-order stencil; rows with no admissible
/// stencil are zero (constant extension).
inline BandedMatrix derivative_matrix(const std::vector<double>& x, DerivKind kind) {
    const std::size_t n = x.size();
    if (n < 3) throw ConfigError("derivative_matrix needs at least 3 nodes");
    for (std::size_t k = 1; k < n; ++k)
        if (!(x[k] > x[k - 1])) throw ConfigError("derivative_matrix needs increasing nodes");

    auto h = [&](std::size_t k) { return x[k + 1] - x[k]; };
    BandedMatrix m;
    switch (kind) {
        case DerivKind::F:
            m = BandedMatrix(n, 0, 1);
            for (std::size_t k = 0; k + 1 < n; ++k) {
                m(k, k) = -1.0 / h(k);
                m(k, k + 1) = 1.0 / h(k);
            }
            break;
        case DerivKind::B:
            m = BandedMatrix(n, 1, 0);
            for (std::size_t k = 1; k < n; ++k) {
                m(k, k) = 1.0 / h(k - 1);
                m(k, k - 1) = -1.0 / h(k - 1);
            }
            break;
        case DerivKind::C:
            m = BandedMatrix(n, 1, 1);
            m(0, 0) = -1.0 / h(0);
            m(0, 1) = 1.0 / h(0);
            for (std::size_t k = 1; k + 1 < n; ++k) {
                const double hm = h(k - 1), hp = h(k);
                m(k, k - 1) = -hp / (hm * (hm + hp));
                m(k, k) = (hp - hm) / (hm * hp);
                m(k, k + 1) = hm / (hp * (hm + hp));
            }
            m(n - 1, n - 2) = -1.0 / h(n - 2);
            m(n - 1, n - 1) = 1.0 / h(n - 2);
            break;
        case DerivKind::F2:
            m = BandedMatrix(n, 0, 2);
            for (std::size_t k = 0; k + 2 < n; ++k) {
                const double h1 = h(k), h2 = h(k + 1);
                m(k, k) = -(2.0 * h1 + h2) / (h1 * (h1 + h2));
                m(k, k + 1) = (h1 + h2) / (h1 * h2);
                m(k, k + 2) = -h1 / (h2 * (h1 + h2));
            }
            m(n - 2, n - 2) = -1.0 / h(n - 2);
            m(n - 2, n - 1) = 1.0 / h(n - 2);
            break;
        case DerivKind::B2:
            m = BandedMatrix(n, 2, 0);
            m(1, 1) = 1.0 / h(0);
            m(1, 0) = -1.0 / h(0);
            for (std::size_t k = 2; k < n; ++k) {
                const double h1 = h(k - 1), h2 = h(k - 2);
                m(k, k) = (2.0 * h1 + h2) / (h1 * (h1 + h2));
                m(k, k - 1) = -(h1 + h2) / (h1 * h2);
                m(k, k - 2) = h1 / (h2 * (h1 + h2));
            }
            break;
        case DerivKind::C2:
            m = BandedMatrix(n, 1, 1);
            for (std::size_t k = 1; k + 1 < n; ++k) {
                const double hm = h(k - 1), hp = h(k);
                const double mid = 0.5 * (hm + hp);
                m(k, k - 1) = 1.0 / (hm * mid);
                m(k, k) = -(1.0 / hm + 1.0 / hp) / mid;
                m(k, k + 1) = 1.0 / (hp * mid);
            }
            break;
        default:
            throw ConfigError("derivative_matrix: invalid kind");
    }
    m.kind = kind;
    return m;
}

/// In-place LU of a banded matrix without pivoting; reusable for many
/// right-hand sides.
class BandedLU {
public:
    BandedLU() = default;
    explicit BandedLU(const BandedMatrix& m) : lu_(m) {
        const std::size_t n = lu_.size(), kl = lu_.lower(), ku = lu_.upper();
        for (std::size_t k = 0; k < n; ++k) {
            const double piv = lu_(k, k);
            if (!(std::abs(piv) > 1e-300) || !std::isfinite(piv))
                throw NumericalError("banded solve: zero pivot at row " + std::to_string(k));
            for (std::size_t i = k + 1; i <= std::min(n - 1, k + kl); ++i) {
                const double f = lu_(i, k) / piv;
                lu_(i, k) = f;
                for (std::size_t j = k + 1; j <= std::min(n - 1, k + ku); ++j) lu_(i, j) -= f * lu_(k, j);
            }
        }
    }

    std::size_t size() const { return lu_.size(); }

    /// Solves in place on a strided vector.
    void solve(double* b, std::size_t stride = 1) const {
        const std::size_t n = lu_.size(), kl = lu_.lower(), ku = lu_.upper();
        if (kl > 0) {
            for (std::size_t i = 1; i < n; ++i) {
                double s = b[i * stride];
                for (std::size_t j = i >= kl ? i - kl : 0; j < i; ++j) s -= lu_(i, j) * b[j * stride];
                b[i * stride] = s;
            }
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = b[ii * stride];
            for (std::size_t j = ii + 1; j <= std::min(n - 1, ii + ku); ++j) s -= lu_(ii, j) * b[j * stride];
            b[ii * stride] = s / lu_(ii, ii);
        }
    }

    std::vector<double> solve(std::vector<double> b) const {
        if (b.size() != lu_.size()) throw DomainError("banded solve: size mismatch");
        solve(b.data());
        return b;
    }

private:
    BandedMatrix lu_;
};

inline std::vector<double> solve_banded(const BandedMatrix& m, const std::vector<double>& rhs) {
    return BandedLU(m).solve(rhs);
}

}  // namespace ldl
