#pragma once

#include "metainv/tensor.hpp"

namespace metainv {

/// 10 log10(peak^2 / MSE); +infinity when the images are identical.
/// peak <= 0 means "use the dynamic range of y" (1.0 for flat images).
double psnr(const Tensor& x, const Tensor& y, double peak = 0.0);

/// Single-scale structural similarity, 11x11 Gaussian window (sigma 1.5),
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2 with peak the larger dynamic
/// range of the two inputs (keeps the metric symmetric). The window shrinks
/// to the largest odd size that fits images below 11 pixels.
double ssim(const Tensor& x, const Tensor& y);

struct MsSsimResult {
    double value = 0.0;
    std::size_t levels = 0;  // levels actually used
};

/// Multi-scale SSIM, up to 5 dyadic levels (2x2 mean-pool downsampling)
/// with the standard exponents 0.0448/0.2856/0.3001/0.2363/0.1333. Images
/// too small for all requested levels fall back to the largest feasible
/// count with renormalized exponents; the result reports the level count.
MsSsimResult ms_ssim(const Tensor& x, const Tensor& y, std::size_t levels = 5);

} // namespace metainv
