#pragma once

// Dense row-major values on a tensor-product grid of dimension 1 to 3.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "ldl/errors.hpp"

namespace ldl {

using Index3 = std::array<std::size_t, 3>;

class NdField {
public:
    NdField() = default;
    explicit NdField(std::vector<std::size_t> dims, double fill = 0.0) : dims_(std::move(dims)) {
        if (dims_.empty() || dims_.size() > 3) throw DomainError("field dimension must be 1, 2 or 3");
        strides_.assign(dims_.size(), 1);
        for (std::size_t a = dims_.size() - 1; a > 0; --a) strides_[a - 1] = strides_[a] * dims_[a];
        std::size_t total = 1;
        for (auto d : dims_) total *= d;
        data_.assign(total, fill);
    }

    std::size_t rank() const { return dims_.size(); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t dim(std::size_t a) const { return dims_[a]; }
    std::size_t stride(std::size_t a) const { return strides_[a]; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    std::size_t offset(const Index3& idx) const {
        std::size_t o = 0;
        for (std::size_t a = 0; a < dims_.size(); ++a) o += idx[a] * strides_[a];
        return o;
    }
    Index3 unravel(std::size_t k) const {
        Index3 idx{0, 0, 0};
        for (std::size_t a = 0; a < dims_.size(); ++a) {
            idx[a] = k / strides_[a];
            k %= strides_[a];
        }
        return idx;
    }

    double& at(const Index3& idx) { return data_[offset(idx)]; }
    double at(const Index3& idx) const { return data_[offset(idx)]; }

    /// Calls fn(start offset, other index) for every line along `axis`.
    void for_each_line(std::size_t axis, const std::function<void(std::size_t, const Index3&)>& fn) const {
        Index3 idx{0, 0, 0};
        const std::size_t r = dims_.size();
        std::size_t total = 1;
        for (std::size_t a = 0; a < r; ++a)
            if (a != axis) total *= dims_[a];
        for (std::size_t t = 0; t < total; ++t) {
            std::size_t rem = t;
            for (std::size_t a = r; a-- > 0;) {
                if (a == axis) {
                    idx[a] = 0;
                    continue;
                }
                idx[a] = rem % dims_[a];
                rem /= dims_[a];
            }
            fn(offset(idx), idx);
        }
    }

    double min() const { return *std::min_element(data_.begin(), data_.end()); }
    double max() const { return *std::max_element(data_.begin(), data_.end()); }

    bool same_shape(const NdField& o) const { return dims_ == o.dims_; }

private:
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> strides_;
    std::vector<double> data_;
};

inline double max_abs_diff(const NdField& a, const NdField& b) {
    if (!a.same_shape(b)) throw DomainError("field shape mismatch");
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

/// Copy of the sub-box [lo[a], hi[a]] (inclusive) of `f`.
inline NdField extract_box(const NdField& f, const Index3& lo, const Index3& hi) {
    std::vector<std::size_t> d(f.rank());
    for (std::size_t a = 0; a < f.rank(); ++a) d[a] = hi[a] - lo[a] + 1;
    NdField out(d);
    for (std::size_t k = 0; k < out.size(); ++k) {
        Index3 i = out.unravel(k);
        for (std::size_t a = 0; a < f.rank(); ++a) i[a] += lo[a];
        out[k] = f.at(i);
    }
    return out;
}

inline void insert_box(NdField& f, const NdField& box, const Index3& lo) {
    for (std::size_t k = 0; k < box.size(); ++k) {
        Index3 i = box.unravel(k);
        for (std::size_t a = 0; a < f.rank(); ++a) i[a] += lo[a];
        f.at(i) = box[k];
    }
}

}  // namespace ldl
