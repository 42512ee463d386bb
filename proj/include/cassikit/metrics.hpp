#pragma once

#include "cassikit/tensor.hpp"

namespace cassikit {

/// 10*log10(peak^2 / MSE) over all voxels; +infinity when MSE is zero.
double psnr(const HsiCube& ref, const HsiCube& test, double peak = 1.0);

/// Single-scale SSIM per channel (11x11 Gaussian window, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range = peak), averaged over channels.
/// Requires both spatial dimensions >= 11.
double ssim(const HsiCube& ref, const HsiCube& test, double peak = 1.0);

} // namespace cassikit
