#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "voxrl/layers.hpp"
#include "voxrl/tensor.hpp"

namespace voxrl {

struct ConvShapeChain {
    std::array<int, 3> conv1_xyz{};
    std::array<int, 3> conv2_xyz{};
    std::int64_t flatten = 0;  // conv2 spatial volume * out channels
};

// Shape chain for the two-stage conv trunk, dims given and returned in
// (x, y, z) order.
ConvShapeChain derive_conv_shapes(const std::array<int, 3>& input_xyz,
                                  const nn::Conv3dSpec& conv1, const nn::Conv3dSpec& conv2);

// Two-input action-value network: conv trunk over the volume
// (1->32->64 channels, ReLU), flattened into a 512-256-64 chain; the
// pred_corr scalar feeds a parallel 64-node layer; both 64-vectors are
// concatenated and mapped to the two action values.
class DqnNetwork {
public:
    DqnNetwork(const std::array<int, 3>& input_dims_xyz, std::uint64_t seed);

    // Convenience single-shot forward (trunk + head).
    std::array<double, 2> forward(const nn::Tensor& volume, int pred_corr);

    // Split forward: one trunk pass can serve several head passes with
    // different pred_corr values on the same volume.
    void forward_trunk(const nn::Tensor& volume);
    std::array<double, 2> forward_head(int pred_corr);

    // Backward from dL/dQ[action] through the most recent head and trunk
    // passes. Gradients accumulate in the parameter tensors.
    void backward(int action, double dloss_dq);

    void zero_grad();
    std::vector<std::pair<std::string, nn::Tensor*>> parameters();
    std::vector<std::pair<std::string, const nn::Tensor*>> parameters() const;

    const ConvShapeChain& shapes() const { return chain_; }
    const std::array<int, 3>& input_dims() const { return dims_; }
    std::int64_t parameter_count() const;

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    std::array<int, 3> dims_;
    ConvShapeChain chain_;
    nn::Conv3d<float> conv1_;
    nn::Elementwise<float> act1_;
    nn::Conv3d<float> conv2_;
    nn::Elementwise<float> act2_;
    nn::Dense<float> fc1_, fc2_, fc3_;
    nn::Dense<float> branch_;  // pred_corr scalar -> 64
    nn::Dense<float> head_;    // concat 128 -> 2, identity
    nn::Tensor branch_in_;
    nn::Tensor concat_;
    bool trunk_ready_ = false;
};

// Supervised variant: same conv trunk and fully connected chain with ELU
// activations, single sigmoid output.
class SdlNetwork {
public:
    SdlNetwork(const std::array<int, 3>& input_dims_xyz, std::uint64_t seed);

    double forward(const nn::Tensor& volume);  // probability in (0,1)
    void backward(double dloss_dp);

    void zero_grad();
    std::vector<std::pair<std::string, nn::Tensor*>> parameters();
    std::vector<std::pair<std::string, const nn::Tensor*>> parameters() const;

    const ConvShapeChain& shapes() const { return chain_; }
    const std::array<int, 3>& input_dims() const { return dims_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

    // p >= 0.5 predicts tumor; the tie at exactly 0.5 goes to class 1.
    static int decide(double p) { return p >= 0.5 ? 1 : 0; }

private:
    std::array<int, 3> dims_;
    ConvShapeChain chain_;
    nn::Conv3d<float> conv1_;
    nn::Elementwise<float> act1_;
    nn::Conv3d<float> conv2_;
    nn::Elementwise<float> act2_;
    nn::Dense<float> fc1_, fc2_, fc3_;
    nn::Dense<float> out_;  // 64 -> 1, identity; sigmoid applied in double
    double last_z_ = 0.0;
    double last_p_ = 0.5;
};

}  // namespace voxrl
