#pragma once

#include <cmath>
#include <stdexcept>

#include "voxrl/tensor.hpp"

namespace voxrl::nn {

template <typename T>
struct MaskedMseResult {
    T loss;
    TensorT<T> grad;  // dL/dq, nonzero only at the taken action
};

// L = (q[action] - target)^2. Gradient flows only into the selected output.
template <typename T>
MaskedMseResult<T> masked_mse_loss(const TensorT<T>& q, int action, T target) {
    if (q.numel() != 2) throw std::invalid_argument("masked_mse_loss: q must have 2 entries");
    if (action != 0 && action != 1) throw std::invalid_argument("masked_mse_loss: action must be 0 or 1");
    const T diff = q.data[static_cast<std::size_t>(action)] - target;
    MaskedMseResult<T> r{diff * diff, TensorT<T>(q.shape)};
    r.grad.data[static_cast<std::size_t>(action)] = T(2) * diff;
    return r;
}

template <typename T>
struct BceResult {
    T loss;
    T grad;  // dL/dp at the clamped point
};

inline constexpr double kBceClamp = 1e-7;

// -[y ln p + (1-y) ln(1-p)], with p clamped into [1e-7, 1 - 1e-7].
template <typename T>
BceResult<T> bce_loss(T p, int label) {
    if (label != 0 && label != 1) throw std::invalid_argument("bce_loss: label must be 0 or 1");
    const double pc = std::min(std::max(double(p), kBceClamp), 1.0 - kBceClamp);
    const double y = double(label);
    const double loss = -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    const double grad = (pc - y) / (pc * (1.0 - pc));
    return {T(loss), T(grad)};
}

}  // namespace voxrl::nn
