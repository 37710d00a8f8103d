#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace voxrl::nn {

inline std::int64_t numel_of(std::span<const int> shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one axis");
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 1) throw std::invalid_argument("tensor dims must be positive, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

// Dense row-major tensor (last axis fastest). The grad buffer is allocated
// lazily; an empty grad means the tensor does not participate in
// differentiation.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;

    TensorT() = default;

    explicit TensorT(std::vector<int> s)
        : shape(std::move(s)), data(static_cast<std::size_t>(numel_of(shape)), T(0)) {}

    TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != numel_of(shape))
            throw std::invalid_argument("tensor data length does not match shape");
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    bool has_grad() const { return !grad.empty(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const TensorT& other) const { return shape == other.shape; }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

void set_num_threads(int n);
int num_threads();

// Splits [0, n) over the worker threads in contiguous chunks; every index is
// handled by exactly one thread, so results are identical for any thread
// count.
template <typename F>
void parallel_for(std::int64_t n, F&& fn) {
#if defined(_OPENMP)
    if (n >= 2 && num_threads() > 1) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
#endif
    for (std::int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace voxrl::nn
