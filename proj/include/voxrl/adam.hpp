#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "voxrl/errors.hpp"
#include "voxrl/tensor.hpp"

namespace voxrl::nn {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a set of attached parameter tensors. Gradients are
// read from each tensor's grad buffer; callers accumulate them and call
// step() once per batch.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void attach(TensorT<T>& param, std::string name) {
        param.ensure_grad();
        slots_.push_back(Slot{&param, std::move(name),
                              std::vector<T>(param.data.size(), T(0)),
                              std::vector<T>(param.data.size(), T(0))});
    }

    void zero_grad() {
        for (auto& s : slots_) s.param->zero_grad();
    }

    // Throws DivergenceError naming the tensor if any gradient is non-finite.
    void step() {
        ++step_count_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_count_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_count_));
        for (auto& s : slots_) {
            T* p = s.param->data.data();
            const T* g = s.param->grad.data();
            const std::size_t n = s.param->data.size();
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = double(g[i]);
                if (!std::isfinite(gi))
                    throw DivergenceError("non-finite gradient in " + s.name +
                                          " at step " + std::to_string(step_count_));
                const double m = cfg_.beta1 * double(s.m[i]) + (1.0 - cfg_.beta1) * gi;
                const double v = cfg_.beta2 * double(s.v[i]) + (1.0 - cfg_.beta2) * gi * gi;
                s.m[i] = T(m);
                s.v[i] = T(v);
                const double m_hat = m / bc1;
                const double v_hat = v / bc2;
                p[i] = T(double(p[i]) - cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
            }
        }
    }

    std::int64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Slot {
        TensorT<T>* param;
        std::string name;
        std::vector<T> m, v;
    };

    AdamConfig cfg_;
    std::vector<Slot> slots_;
    std::int64_t step_count_ = 0;
};

}  // namespace voxrl::nn
