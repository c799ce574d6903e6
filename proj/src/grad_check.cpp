#include "lstc/grad_check.hpp"

#include <cmath>

namespace lstc {

GradReport grad_check(const std::string& op_name, const std::function<double()>& loss,
                      const NamedParams& params, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
    }
    const double base = loss();
    if (!std::isfinite(base)) {
        throw NumericError("grad_check(" + op_name + "): non-finite loss at base point");
    }
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, p] : params) analytic.push_back(p->grad);

    GradReport report;
    report.op_name = op_name;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& name = params[pi].first;
        Param& p = *params[pi].second;
        double worst = 0.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value.data()[i];
            p.value.data()[i] = saved + eps;
            const double up = loss();
            p.value.data()[i] = saved - eps;
            const double down = loss();
            p.value.data()[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("grad_check(" + op_name + "): non-finite loss while perturbing " +
                                   name);
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[pi].data()[i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
            worst = std::max(worst, rel);
        }
        report.per_param_err.emplace_back(name, worst);
        report.max_rel_err = std::max(report.max_rel_err, worst);
    }
    // Restore analytic gradients for the caller.
    loss();
    return report;
}

} // namespace lstc
