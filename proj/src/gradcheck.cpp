#include "voxrl/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace voxrl::nn {

GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           std::span<const GradCheckParam> params,
                           double h,
                           std::int64_t max_params) {
    std::int64_t total = 0;
    for (const auto& p : params) total += p.tensor->numel();
    if (total > max_params)
        throw std::invalid_argument("grad_check: fragment has " + std::to_string(total) +
                                    " parameters, limit is " + std::to_string(max_params));

    GradCheckReport report;
    for (const auto& p : params) {
        if (!p.tensor->has_grad())
            throw std::invalid_argument("grad_check: tensor '" + p.name + "' has no gradient");
        for (std::int64_t i = 0; i < p.tensor->numel(); ++i) {
            double& v = p.tensor->data[std::size_t(i)];
            const double saved = v;
            v = saved + h;
            const double up = loss_fn();
            v = saved - h;
            const double down = loss_fn();
            v = saved;
            const double fd = (up - down) / (2.0 * h);
            const double analytic = p.tensor->grad[std::size_t(i)];
            const double denom = std::max({std::fabs(fd), std::fabs(analytic), 1.0});
            const double rel = std::fabs(fd - analytic) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_name = p.name;
                report.worst_index = i;
            }
            ++report.params_checked;
        }
    }
    return report;
}

}  // namespace voxrl::nn
