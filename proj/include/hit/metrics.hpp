#pragma once

#include <functional>

#include "hit/tensor.hpp"

namespace hit {

Tensor clamp01(const Tensor& img);

// 10*log10(peak^2 / MSE); +infinity when MSE == 0.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean local SSIM over valid window positions, 11x11 Gaussian sigma 1.5,
// K1=0.01 K2=0.03, peak 1. Rank-2 inputs or per-channel-averaged rank-3.
double ssim(const Tensor& a, const Tensor& b);

// ITU-R BT.601 studio-swing luma: Y = (65.481R + 128.553G + 24.966B + 16)/255.
Tensor rgb_to_y(const Tensor& img);

// Right-Riemann integrated gradients along the straight path from the
// baseline. target must build its value with tape ops of the given input.
Tensor integrated_gradients(const std::function<Tensor(const Tensor&)>& target, const Tensor& input,
                            const Tensor& baseline, int steps);

}  // namespace hit
