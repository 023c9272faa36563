#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "metainv/tensor.hpp"

namespace metainv {

enum class Beam { Parallel, Fan };

struct ImageSpec {
    std::size_t n = 0;        // side length in pixels, square grid
    double pixel_size = 1.0;  // length units per pixel
};

/// 2D attenuation map on a square pixel grid. Row 0 is the top of the
/// image; pixel (r,c) is centered at x=(c-(n-1)/2)*h, y=((n-1)/2-r)*h.
struct Image {
    std::size_t n = 0;
    double pixel_size = 1.0;
    Tensor data;  // [n, n]

    Image() = default;
    Image(std::size_t n_, double pixel_size_);
    Image(std::size_t n_, double pixel_size_, Tensor data_);
};

/// views x detectors array of line integrals (post-log data).
struct Sinogram {
    std::size_t n_views = 0;
    std::size_t n_det = 0;
    Tensor data;  // [n_views, n_det]

    Sinogram() = default;
    Sinogram(std::size_t n_views_, std::size_t n_det_);
    Sinogram(std::size_t n_views_, std::size_t n_det_, Tensor data_);
};

struct FanDistances {
    std::optional<double> src_to_center;
    std::optional<double> det_to_center;
};

struct ScanGeometry {
    Beam beam = Beam::Parallel;
    std::vector<double> angles;  // strictly increasing in [0, 2pi)
    std::size_t n_det = 0;
    double det_pitch = 1.0;
    double src_to_center = 0.0;  // fan only
    double det_to_center = 0.0;  // fan only
    std::size_t n = 0;           // image grid side
    double pixel_size = 1.0;

    std::size_t n_views() const { return angles.size(); }
};

/// Builds a geometry with angles 2*pi*k/n_views. Fan distances default to
/// twice the image physical half-width; detector pitch defaults so the
/// detector covers the circumscribed circle of the image.
ScanGeometry make_geometry(Beam beam, std::size_t n_views, std::size_t n_det, ImageSpec image,
                           FanDistances distances = {}, std::optional<double> det_pitch = {});

/// Ray-driven line integrals, bilinear interpolation, sampling step
/// pixel_size/2 along each ray. Linear in the image.
Sinogram forward_project(const Image& img, const ScanGeometry& g);

/// Exact adjoint of forward_project under the same discretization: the
/// interpolation weights are transposed, never re-derived pixel-driven.
Image back_project(const Sinogram& s, const ScanGeometry& g);

/// Explicit system matrix, rows = rays (view-major), cols = pixels
/// (row-major). Test oracle; guarded to n*n <= 4096.
Tensor as_dense_matrix(const ScanGeometry& g);

void require_image_matches(const Image& img, const ScanGeometry& g, const char* where);
void require_sino_matches(const Sinogram& s, const ScanGeometry& g, const char* where);

} // namespace metainv
