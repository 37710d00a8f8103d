#include "voxrl/network.hpp"

#include <cmath>
#include <stdexcept>

#include "voxrl/checkpoint.hpp"
#include "voxrl/rng.hpp"

namespace voxrl {

namespace {

// Volumes are (x,y,z); conv tensors are [C,D,H,W] = [c,z,y,x].
std::array<int, 3> xyz_to_dhw(const std::array<int, 3>& xyz) {
    return {xyz[2], xyz[1], xyz[0]};
}

std::array<int, 3> dhw_to_xyz(const std::array<int, 3>& dhw) {
    return {dhw[2], dhw[1], dhw[0]};
}

constexpr char kDqnMagic[4] = {'D', 'Q', 'N', 'W'};
constexpr char kSdlMagic[4] = {'S', 'D', 'L', 'W'};

nn::Conv3dSpec conv1_spec() { return nn::Conv3dSpec{1, 32}; }
nn::Conv3dSpec conv2_spec() { return nn::Conv3dSpec{32, 64}; }

nn::Conv3d<float> make_conv(const nn::Conv3dSpec& spec, Rng rng) {
    return nn::Conv3d<float>(spec, rng);
}

nn::Dense<float> make_dense(int in, int out, nn::Activation act, Rng rng) {
    return nn::Dense<float>(in, out, act, rng);
}

template <typename Net>
std::vector<std::pair<std::string, const nn::Tensor*>> const_params(Net& net) {
    std::vector<std::pair<std::string, const nn::Tensor*>> out;
    for (auto& [name, t] : const_cast<std::remove_const_t<Net>&>(net).parameters())
        out.emplace_back(name, t);
    return out;
}

}  // namespace

ConvShapeChain derive_conv_shapes(const std::array<int, 3>& input_xyz,
                                  const nn::Conv3dSpec& conv1, const nn::Conv3dSpec& conv2) {
    ConvShapeChain chain;
    const auto o1 = conv1.output_dims(xyz_to_dhw(input_xyz));
    const auto o2 = conv2.output_dims(o1);
    chain.conv1_xyz = dhw_to_xyz(o1);
    chain.conv2_xyz = dhw_to_xyz(o2);
    chain.flatten = std::int64_t(o2[0]) * o2[1] * o2[2] * conv2.out_channels;
    return chain;
}

DqnNetwork::DqnNetwork(const std::array<int, 3>& input_dims_xyz, std::uint64_t seed)
    : dims_(input_dims_xyz),
      chain_(derive_conv_shapes(input_dims_xyz, conv1_spec(), conv2_spec())),
      conv1_(make_conv(conv1_spec(), Rng(seed).fork("conv1"))),
      act1_(nn::Activation::relu),
      conv2_(make_conv(conv2_spec(), Rng(seed).fork("conv2"))),
      act2_(nn::Activation::relu),
      fc1_(make_dense(int(chain_.flatten), 512, nn::Activation::relu, Rng(seed).fork("fc1"))),
      fc2_(make_dense(512, 256, nn::Activation::relu, Rng(seed).fork("fc2"))),
      fc3_(make_dense(256, 64, nn::Activation::relu, Rng(seed).fork("fc3"))),
      branch_(make_dense(1, 64, nn::Activation::relu, Rng(seed).fork("branch"))),
      head_(make_dense(128, 2, nn::Activation::identity, Rng(seed).fork("head"))),
      branch_in_({1}),
      concat_({128}) {
    conv1_.set_needs_input_grad(false);
    branch_.set_needs_input_grad(false);
}

void DqnNetwork::forward_trunk(const nn::Tensor& volume) {
    const std::vector<int> want{1, dims_[2], dims_[1], dims_[0]};
    if (volume.shape != want)
        throw std::invalid_argument("dqn_forward: volume dims do not match network build dims");
    const auto& a1 = act1_.forward(conv1_.forward(volume));
    const auto& a2 = act2_.forward(conv2_.forward(a1));
    fc3_.forward(fc2_.forward(fc1_.forward(a2)));
    trunk_ready_ = true;
}

std::array<double, 2> DqnNetwork::forward_head(int pred_corr) {
    if (!trunk_ready_) throw std::logic_error("forward_head called before forward_trunk");
    if (pred_corr != 0 && pred_corr != 1)
        throw std::invalid_argument("pred_corr must be 0 or 1");
    branch_in_.data[0] = float(pred_corr);
    const auto& b = branch_.forward(branch_in_);
    const auto& v = fc3_.output();
    for (int i = 0; i < 64; ++i) {
        concat_.data[std::size_t(i)] = v.data[std::size_t(i)];
        concat_.data[std::size_t(64 + i)] = b.data[std::size_t(i)];
    }
    const auto& q = head_.forward(concat_);
    return {double(q.data[0]), double(q.data[1])};
}

std::array<double, 2> DqnNetwork::forward(const nn::Tensor& volume, int pred_corr) {
    forward_trunk(volume);
    return forward_head(pred_corr);
}

void DqnNetwork::backward(int action, double dloss_dq) {
    if (action != 0 && action != 1) throw std::invalid_argument("action must be 0 or 1");
    nn::Tensor g({2});
    g.data[std::size_t(action)] = float(dloss_dq);
    const auto& gc = head_.backward(g);
    nn::Tensor gv({64}), gb({64});
    for (int i = 0; i < 64; ++i) {
        gv.data[std::size_t(i)] = gc.data[std::size_t(i)];
        gb.data[std::size_t(i)] = gc.data[std::size_t(64 + i)];
    }
    branch_.backward(gb);
    const auto& g3 = fc3_.backward(gv);
    const auto& g2 = fc2_.backward(g3);
    const auto& g1 = fc1_.backward(g2);
    const auto& ga2 = act2_.backward(g1);
    const auto& gcv2 = conv2_.backward(ga2);
    conv1_.backward(act1_.backward(gcv2));
}

void DqnNetwork::zero_grad() {
    for (auto& [name, t] : parameters()) t->zero_grad();
}

std::vector<std::pair<std::string, nn::Tensor*>> DqnNetwork::parameters() {
    return {{"conv1.weight", &conv1_.weight()}, {"conv1.bias", &conv1_.bias()},
            {"conv2.weight", &conv2_.weight()}, {"conv2.bias", &conv2_.bias()},
            {"fc1.weight", &fc1_.weight()},     {"fc1.bias", &fc1_.bias()},
            {"fc2.weight", &fc2_.weight()},     {"fc2.bias", &fc2_.bias()},
            {"fc3.weight", &fc3_.weight()},     {"fc3.bias", &fc3_.bias()},
            {"predcorr.weight", &branch_.weight()}, {"predcorr.bias", &branch_.bias()},
            {"head.weight", &head_.weight()},   {"head.bias", &head_.bias()}};
}

std::vector<std::pair<std::string, const nn::Tensor*>> DqnNetwork::parameters() const {
    return const_params(*this);
}

std::int64_t DqnNetwork::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : parameters()) n += t->numel();
    return n;
}

void DqnNetwork::save(const std::string& path) const {
    save_checkpoint(path, kDqnMagic, parameters());
}

void DqnNetwork::load(const std::string& path) {
    std::vector<std::pair<std::string, nn::Tensor*>> groups = parameters();
    load_checkpoint(path, kDqnMagic, groups);
}

SdlNetwork::SdlNetwork(const std::array<int, 3>& input_dims_xyz, std::uint64_t seed)
    : dims_(input_dims_xyz),
      chain_(derive_conv_shapes(input_dims_xyz, conv1_spec(), conv2_spec())),
      conv1_(make_conv(conv1_spec(), Rng(seed).fork("conv1"))),
      act1_(nn::Activation::elu),
      conv2_(make_conv(conv2_spec(), Rng(seed).fork("conv2"))),
      act2_(nn::Activation::elu),
      fc1_(make_dense(int(chain_.flatten), 512, nn::Activation::elu, Rng(seed).fork("fc1"))),
      fc2_(make_dense(512, 256, nn::Activation::elu, Rng(seed).fork("fc2"))),
      fc3_(make_dense(256, 64, nn::Activation::elu, Rng(seed).fork("fc3"))),
      out_(make_dense(64, 1, nn::Activation::identity, Rng(seed).fork("out"))) {
    conv1_.set_needs_input_grad(false);
}

double SdlNetwork::forward(const nn::Tensor& volume) {
    const std::vector<int> want{1, dims_[2], dims_[1], dims_[0]};
    if (volume.shape != want)
        throw std::invalid_argument("sdl_forward: volume dims do not match network build dims");
    const auto& a1 = act1_.forward(conv1_.forward(volume));
    const auto& a2 = act2_.forward(conv2_.forward(a1));
    const auto& z = out_.forward(fc3_.forward(fc2_.forward(fc1_.forward(a2))));
    last_z_ = double(z.data[0]);
    last_p_ = 1.0 / (1.0 + std::exp(-last_z_));
    return last_p_;
}

void SdlNetwork::backward(double dloss_dp) {
    nn::Tensor g({1});
    g.data[0] = float(dloss_dp * last_p_ * (1.0 - last_p_));  // through the sigmoid
    const auto& go = out_.backward(g);
    const auto& g3 = fc3_.backward(go);
    const auto& g2 = fc2_.backward(g3);
    const auto& g1 = fc1_.backward(g2);
    const auto& ga2 = act2_.backward(g1);
    conv1_.backward(act1_.backward(conv2_.backward(ga2)));
}

void SdlNetwork::zero_grad() {
    for (auto& [name, t] : parameters()) t->zero_grad();
}

std::vector<std::pair<std::string, nn::Tensor*>> SdlNetwork::parameters() {
    return {{"conv1.weight", &conv1_.weight()}, {"conv1.bias", &conv1_.bias()},
            {"conv2.weight", &conv2_.weight()}, {"conv2.bias", &conv2_.bias()},
            {"fc1.weight", &fc1_.weight()},     {"fc1.bias", &fc1_.bias()},
            {"fc2.weight", &fc2_.weight()},     {"fc2.bias", &fc2_.bias()},
            {"fc3.weight", &fc3_.weight()},     {"fc3.bias", &fc3_.bias()},
            {"out.weight", &out_.weight()},     {"out.bias", &out_.bias()}};
}

std::vector<std::pair<std::string, const nn::Tensor*>> SdlNetwork::parameters() const {
    return const_params(*this);
}

void SdlNetwork::save(const std::string& path) const {
    save_checkpoint(path, kSdlMagic, parameters());
}

void SdlNetwork::load(const std::string& path) {
    std::vector<std::pair<std::string, nn::Tensor*>> groups = parameters();
    load_checkpoint(path, kSdlMagic, groups);
}

}  // namespace voxrl
