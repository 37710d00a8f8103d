#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxrl/rng.hpp"
#include "voxrl/tensor.hpp"

namespace voxrl::nn {

enum class Activation { identity, relu, elu, sigmoid };

template <typename T>
T activate(Activation act, T x) {
    switch (act) {
        case Activation::identity: return x;
        case Activation::relu: return x > T(0) ? x : T(0);
        case Activation::elu: return x > T(0) ? x : T(std::expm1(double(x)));  // alpha = 1
        case Activation::sigmoid: return T(1) / (T(1) + T(std::exp(-double(x))));
    }
    return x;
}

// Derivative given pre-activation x and output y = act(x).
template <typename T>
T activate_grad(Activation act, T x, T y) {
    switch (act) {
        case Activation::identity: return T(1);
        case Activation::relu: return x > T(0) ? T(1) : T(0);
        case Activation::elu: return x > T(0) ? T(1) : y + T(1);
        case Activation::sigmoid: return y * (T(1) - y);
    }
    return T(1);
}

// Uniform samples on [-L, +L] with L = sqrt(6 / (fan_in + fan_out)).
template <typename T>
TensorT<T> glorot_init(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    if (fan_in < 1 || fan_out < 1)
        throw std::invalid_argument("glorot_init: fan sizes must be >= 1");
    TensorT<T> t(std::move(shape));
    const double bound = std::sqrt(6.0 / (double(fan_in) + double(fan_out)));
    for (auto& v : t.data) v = T(rng.uniform(-bound, bound));
    return t;
}

struct Conv3dSpec {
    int in_channels = 1;
    int out_channels = 1;
    std::array<int, 3> kernel{5, 5, 5};   // (d, h, w)
    std::array<int, 3> stride{2, 2, 2};
    std::array<int, 3> padding{1, 1, 1};

    void validate() const;
    // floor((n + 2p - k) / s) + 1 per axis; throws if any axis collapses below 1.
    std::array<int, 3> output_dims(const std::array<int, 3>& in_dhw) const;
};

// 3D cross-correlation with zero padding, layout [C, D, H, W].
template <typename T>
class Conv3d {
public:
    Conv3d(const Conv3dSpec& spec, Rng& rng);

    const TensorT<T>& forward(const TensorT<T>& input);
    // Accumulates weight/bias gradients; returns grad w.r.t. input (empty
    // tensor when input gradients are disabled).
    const TensorT<T>& backward(const TensorT<T>& grad_out);

    const Conv3dSpec& spec() const { return spec_; }
    TensorT<T>& weight() { return weight_; }
    TensorT<T>& bias() { return bias_; }
    const TensorT<T>& output() const { return output_; }
    void set_needs_input_grad(bool v) { needs_input_grad_ = v; }

private:
    Conv3dSpec spec_;
    TensorT<T> weight_;  // [out, in, kd, kh, kw]
    TensorT<T> bias_;    // [out]
    TensorT<T> input_;
    TensorT<T> output_;
    TensorT<T> col_;   // im2col workspace, [spatial_out, in*kd*kh*kw]
    TensorT<T> dcol_;
    TensorT<T> grad_input_;
    bool needs_input_grad_ = true;
};

// y = act(W x + b), W stored row-major [out, in]. Accepts any input shape
// whose element count equals `in` (flattening is implicit).
template <typename T>
class Dense {
public:
    Dense(int in, int out, Activation act, Rng& rng);

    const TensorT<T>& forward(const TensorT<T>& input);
    const TensorT<T>& backward(const TensorT<T>& grad_out);

    int in_features() const { return in_; }
    int out_features() const { return out_; }
    Activation activation() const { return act_; }
    TensorT<T>& weight() { return weight_; }
    TensorT<T>& bias() { return bias_; }
    const TensorT<T>& output() const { return output_; }
    void set_needs_input_grad(bool v) { needs_input_grad_ = v; }

private:
    int in_, out_;
    Activation act_;
    TensorT<T> weight_;   // [out, in]
    TensorT<T> bias_;     // [out]
    TensorT<T> input_;
    TensorT<T> preact_;
    TensorT<T> output_;
    TensorT<T> grad_input_;
    bool needs_input_grad_ = true;
};

// Elementwise activation as a standalone layer (used after conv stages).
template <typename T>
class Elementwise {
public:
    explicit Elementwise(Activation act) : act_(act) {}

    const TensorT<T>& forward(const TensorT<T>& input);
    const TensorT<T>& backward(const TensorT<T>& grad_out);

private:
    Activation act_;
    TensorT<T> input_;
    TensorT<T> output_;
    TensorT<T> grad_input_;
};

extern template class Conv3d<float>;
extern template class Conv3d<double>;
extern template class Dense<float>;
extern template class Dense<double>;
extern template class Elementwise<float>;
extern template class Elementwise<double>;

}  // namespace voxrl::nn
