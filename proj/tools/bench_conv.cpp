// Micro-benchmark for the conv/dense kernels at the two volume presets.
#include <chrono>
#include <cstdio>

#include "voxrl/layers.hpp"

using namespace voxrl;
using namespace voxrl::nn;

template <typename F>
double time_ms(int iters, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

int main(int argc, char** argv) {
    const int threads = argc > 1 ? std::atoi(argv[1]) : 0;
    if (threads > 0) set_num_threads(threads);
    std::printf("threads=%d\n", num_threads());

    Rng rng(42);
    // Desk preset: volume (x,y,z) = (32,32,16) -> tensor [1,16,32,32]
    Conv3dSpec s1{1, 32};
    Conv3dSpec s2{32, 64};
    Conv3d<float> conv1(s1, rng), conv2(s2, rng);
    Elementwise<float> act1(Activation::relu), act2(Activation::relu);
    Dense<float> fc1(9408, 512, Activation::relu, rng);
    Dense<float> fc2(512, 256, Activation::relu, rng);
    Dense<float> fc3(256, 64, Activation::relu, rng);
    conv1.set_needs_input_grad(false);

    Tensor vol({1, 16, 32, 32});
    for (auto& v : vol.data) v = float(rng.uniform01());

    auto fwd = [&]() -> const Tensor& {
        const auto& a = act1.forward(conv1.forward(vol));
        const auto& b = act2.forward(conv2.forward(a));
        return fc3.forward(fc2.forward(fc1.forward(b)));
    };

    Tensor g64({64});
    for (auto& v : g64.data) v = 0.01f;
    auto bwd = [&]() {
        const auto& g3 = fc3.backward(g64);
        const auto& g2 = fc2.backward(g3);
        const auto& g1 = fc1.backward(g2);
        const auto& gc2 = act2.backward(g1);
        const auto& gcv = conv2.backward(gc2);
        conv1.backward(act1.backward(gcv));
    };

    fwd();
    bwd();

    const double f_ms = time_ms(50, [&]() { fwd(); });
    const double b_ms = time_ms(50, [&]() { bwd(); });
    std::printf("desk trunk forward : %8.3f ms\n", f_ms);
    std::printf("desk trunk backward: %8.3f ms\n", b_ms);
    // One RL step = 24 transitions x (1 fwd + 1 bwd); 725 steps per run.
    const double step_ms = 24 * (f_ms + b_ms);
    std::printf("est. RL step: %.1f ms, full 145-episode run: %.1f s\n", step_ms,
                step_ms * 725 / 1000.0);
    return 0;
}
