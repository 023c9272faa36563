#pragma once

#include <cstdint>
#include <vector>

#include "metainv/geometry.hpp"

namespace metainv {

struct Ellipse {
    double cx, cy;     // center, in [-1,1] image coordinates
    double a, b;       // semi-axes
    double rot;        // rotation, radians
    double intensity;  // additive
};

/// Renders by point-in-ellipse tests at pixel centers; intensities are
/// clipped to >= 0.
Image render_ellipses(const std::vector<Ellipse>& ellipses, std::size_t n, double pixel_size = 1.0);

const std::vector<Ellipse>& shepp_logan_ellipses();

/// Classic 10-ellipse Shepp-Logan head phantom (contrast-boosted
/// intensities so values lie in [0,1]). Requires n >= 16.
Image shepp_logan(std::size_t n, double pixel_size = 1.0);

/// Deterministic random phantom of 3-8 ellipses.
Image random_phantom(std::size_t n, std::uint64_t seed, double pixel_size = 1.0);

struct NoiseSpec {
    double i0 = 5e6;       // incident photon intensity per detector bin
    double sigma_e = 0.0;  // electronic noise std (counts)
    std::uint64_t seed = 0;
    bool noiseless = false;  // the I0 -> infinity limit

    void validate() const;
};

/// Photon-statistics simulation: counts N = Poisson(I0 exp(-y)) + electronic
/// noise, then the corrected log transform Y = ln(I0 / max(N, 1)).
/// Deterministic per (seed, bin). Throws when more than half the bins clip
/// below one count (nonphysical I0).
Sinogram simulate_sinogram(const Image& img, const ScanGeometry& g, const NoiseSpec& ns);

} // namespace metainv
