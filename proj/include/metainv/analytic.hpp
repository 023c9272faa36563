#pragma once

#include "metainv/geometry.hpp"

namespace metainv {

/// Band-limited ramp ("Ram-Lak") filtering of each view along the detector
/// axis. The filter is realized by its closed-form spatial kernel
///   h[0] = 1/(4 d^2),  h[k] = -1/(pi^2 k^2 d^2) for odd k,  0 for even k,
/// transformed to the frequency domain after zero-padding to the next power
/// of two >= 2*n_det. Output is the discrete convolution sum (no detector
/// pitch factor); fbp applies the quadrature scaling.
Sinogram ramlak_filter(const Sinogram& s, const ScanGeometry& g);

/// Filtered backprojection used as u^0 and as a standalone reconstructor.
/// Parallel beam: ramp filter then the exact-adjoint backprojector, scaled
/// by pi/n_views times the discretization factor det_pitch^2/pixel_size^2.
/// Fan beam: cosine pre-weighting, ramp filtering in virtual-detector
/// coordinates, then distance-weighted pixel-driven backprojection
/// (standard flat equispaced-detector fan FBP).
Image fbp(const Sinogram& s, const ScanGeometry& g);

} // namespace metainv
