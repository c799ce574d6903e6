#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lstc/ops.hpp"

namespace lstc {

struct GradReport {
    std::string op_name;
    double max_rel_err = 0.0;
    std::vector<std::pair<std::string, double>> per_param_err;
};

using NamedParams = std::vector<std::pair<std::string, Param*>>;

// Central-difference check of analytic gradients. `loss` must zero the
// gradients, run forward and backward, and leave the analytic gradient in
// each Param; it is re-invoked at perturbed parameter values. Relative
// error per entry is |a - n| / max(|a|, |n|, 1e-12). A non-finite loss
// raises NumericError naming the parameter being perturbed.
GradReport grad_check(const std::string& op_name, const std::function<double()>& loss,
                      const NamedParams& params, double eps);

} // namespace lstc
