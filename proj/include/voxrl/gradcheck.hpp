#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "voxrl/tensor.hpp"

namespace voxrl::nn {

struct GradCheckParam {
    std::string name;
    TensorD* tensor;  // analytic gradient must already sit in tensor->grad
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_name;
    std::int64_t worst_index = -1;
    std::int64_t params_checked = 0;
};

// Central finite differences (double precision) against the analytic
// gradients accumulated in the given tensors. loss_fn must run a pure forward
// pass at the current parameter values. Relative error is
// |a - f| / max(|a|, |f|, 1).
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           std::span<const GradCheckParam> params,
                           double h = 1e-4,
                           std::int64_t max_params = 20000);

}  // namespace voxrl::nn
