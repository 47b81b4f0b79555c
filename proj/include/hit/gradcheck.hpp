#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hit/tensor.hpp"

namespace hit {

// Central finite differences (h = 1e-5) against tape gradients. Denominator
// floored at 1e-4: FD noise at 64-bit sits near 1e-11 * |loss|, four orders
// below the 1e-5 gate, while any wrong gradient rule lands at O(1).
constexpr double kGradCheckTol = 1e-5;

struct GradCheck {
    std::string name;
    std::function<double(std::uint64_t seed)> run;  // returns max relative error
};

// One named check per differentiable op plus the end-to-end HIT-micro pass.
const std::vector<GradCheck>& gradcheck_suite();

// Generic checker: loss_fn must be pure in the leaves.
double fd_max_rel_err(const std::function<Tensor(const std::vector<Tensor>&)>& loss_fn,
                      std::vector<Tensor> leaves, double h = 1e-5);

}  // namespace hit
