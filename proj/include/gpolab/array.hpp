#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gpolab/common.hpp"

namespace gpolab {

// Dense row-major float32 array. Reductions accumulate in float64 (see
// kernels.hpp) so the storage precision never leaks into gradient checks.
struct Array {
    std::vector<size_t> shape;
    std::vector<float> data;

    Array() = default;
    explicit Array(std::vector<size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0f);
    }
    Array(std::vector<size_t> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size()) {
            throw UsageError("Array: shape/data size mismatch");
        }
    }

    static size_t numel_of(const std::vector<size_t>& s) {
        size_t n = 1;
        for (size_t d : s) n *= d;
        return n;
    }

    size_t numel() const { return data.size(); }
    bool same_shape(const Array& o) const { return shape == o.shape; }

    // 2-D accessors; rank checked only by the caller.
    size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    float& at(size_t i, size_t j) { return data[i * cols() + j]; }
    float at(size_t i, size_t j) const { return data[i * cols() + j]; }

    bool is_scalar() const { return numel() == 1; }
    float scalar() const {
        if (!is_scalar()) throw UsageError("Array: scalar() on non-scalar");
        return data[0];
    }
};

inline std::string shape_string(const std::vector<size_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline bool all_finite(const Array& a) {
    for (float v : a.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

inline void check_finite(const Array& a, const std::string& context) {
    if (!all_finite(a)) {
        throw NumericError("non-finite values in " + context);
    }
}

}  // namespace gpolab
