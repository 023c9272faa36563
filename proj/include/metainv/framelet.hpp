#pragma once

#include <array>
#include <optional>

#include "metainv/geometry.hpp"
#include "metainv/tensor.hpp"

namespace metainv {

/// Piecewise-linear tight frame, one undecimated 2D level built from the
/// 1D masks h0 = [1,2,1]/4, h1 = (sqrt2/4)[1,0,-1], h2 = [-1,2,-1]/4.
/// Channel (i,j) applies h_i along rows and h_j along columns; (0,0) is
/// the lowpass, the remaining 8 channels are the highpass part W.
///
/// Boundaries use half-sample symmetric (edge) extension. With that
/// extension the discrete unitary extension sum L0^T L0 + W^T W = I holds
/// exactly, which the whole-sample reflection variant does not.
namespace framelet {

inline constexpr std::size_t kHighpassChannels = 8;

std::array<std::array<double, 3>, 3> masks_1d();

/// [n,n] -> [8,n,n] highpass analysis coefficients.
Tensor highpass(const Tensor& u);

/// Exact adjoint of highpass, [8,n,n] -> [n,n].
Tensor highpass_adjoint(const Tensor& c);

/// Lowpass channel L0 and its adjoint, [n,n] -> [n,n].
Tensor lowpass(const Tensor& u);
Tensor lowpass_adjoint(const Tensor& u);

} // namespace framelet

/// Multichannel frame coefficient stack: 8 highpass channels, plus the
/// lowpass when produced by a full decomposition.
struct FrameCoeffs {
    Tensor channels;                // [8, n, n]
    std::optional<Tensor> lowpass;  // [n, n]
};

/// Full 1-level decomposition (lowpass + 8 highpass channels).
FrameCoeffs analyze(const Image& img);

/// Highpass-only transform W and its exact adjoint.
FrameCoeffs w_apply(const Image& img);
Image w_adjoint(const FrameCoeffs& c, double pixel_size = 1.0);

} // namespace metainv
