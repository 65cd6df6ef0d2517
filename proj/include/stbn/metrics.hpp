#pragma once

#include "stbn/tensor.hpp"
#include "stbn/videodata.hpp"

namespace stbn {

/// Reported when the inputs are identical.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE) over all pixels and channels, capped at kPsnrCap.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
double psnr(const VideoSequence& a, const VideoSequence& b, double peak = 1.0);
double psnr_from_mse(double mse, double peak = 1.0);

/// Mean SSIM over all fully-contained 11x11 Gaussian (sigma 1.5) windows, k1 = 0.01,
/// k2 = 0.03, data range 1, population statistics. Multi-channel inputs are reduced to
/// their channel mean first. Inputs are (1, C, H, W); throws if smaller than the window.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace stbn
