#include "doctest.h"

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "metainv/geometry.hpp"
#include "test_helpers.hpp"

using namespace metainv;
using namespace metainv::testing;

namespace {

Image gaussian_blob(std::size_t n, double cx, double cy, double sigma) {
    Image img(n, 1.0);
    const double center = (static_cast<double>(n) - 1.0) / 2.0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double x = (static_cast<double>(c) - center);
            const double y = (center - static_cast<double>(r));
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            img.data.at(r, c) = std::exp(-d2 / (2.0 * sigma * sigma));
        }
    return img;
}

// Test-only bilinear rotation about the image center (angle in radians,
// counterclockwise); samples outside the grid read as zero.
Image rotate_image(const Image& src, double angle) {
    const std::size_t n = src.n;
    Image out(n, src.pixel_size);
    const double center = (static_cast<double>(n) - 1.0) / 2.0;
    const double ca = std::cos(-angle), sa = std::sin(-angle);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double x = static_cast<double>(c) - center;
            const double y = center - static_cast<double>(r);
            const double xs = ca * x - sa * y;
            const double ys = sa * x + ca * y;
            const double cc = xs + center;
            const double rr = center - ys;
            const auto c0 = static_cast<std::ptrdiff_t>(std::floor(cc));
            const auto r0 = static_cast<std::ptrdiff_t>(std::floor(rr));
            const double fc = cc - std::floor(cc);
            const double fr = rr - std::floor(rr);
            double acc = 0.0;
            for (int dr = 0; dr < 2; ++dr)
                for (int dc = 0; dc < 2; ++dc) {
                    const std::ptrdiff_t ri = r0 + dr, ci = c0 + dc;
                    if (ri < 0 || ci < 0 || ri >= static_cast<std::ptrdiff_t>(n) ||
                        ci >= static_cast<std::ptrdiff_t>(n))
                        continue;
                    acc += (dr ? fr : 1.0 - fr) * (dc ? fc : 1.0 - fc) *
                           src.data.at(static_cast<std::size_t>(ri), static_cast<std::size_t>(ci));
                }
            out.data.at(r, c) = acc;
        }
    return out;
}

} // namespace

TEST_CASE("make_geometry: equally spaced angles") {
    ScanGeometry g = make_geometry(Beam::Parallel, 4, 8, {16, 1.0});
    REQUIRE(g.angles.size() == 4);
    CHECK(g.angles[0] == doctest::Approx(0.0));
    CHECK(g.angles[1] == doctest::Approx(std::numbers::pi / 2));
    CHECK(g.angles[2] == doctest::Approx(std::numbers::pi));
    CHECK(g.angles[3] == doctest::Approx(3 * std::numbers::pi / 2));
}

TEST_CASE("make_geometry: paper-scaled fan layout and defaults") {
    // 800 detectors at n=512 scales to 100 at n=64.
    const std::size_t n = 64;
    const std::size_t n_det = 800 * n / 512;
    CHECK(n_det == 100);
    ScanGeometry g = make_geometry(Beam::Fan, 180, n_det, {n, 1.0});
    CHECK(g.src_to_center == doctest::Approx(64.0));  // twice the half-width
    CHECK(g.det_to_center == doctest::Approx(64.0));
    CHECK(g.n_views() == 180);
    // Detector covers the circumscribed circle: half fan angle 45 degrees.
    CHECK(g.det_pitch * static_cast<double>(n_det) == doctest::Approx(4.0 * 64.0).epsilon(1e-6));
}

TEST_CASE("make_geometry: invalid inputs") {
    CHECK_THROWS_AS(make_geometry(Beam::Parallel, 0, 8, {16, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(make_geometry(Beam::Parallel, 4, 1, {16, 1.0}), std::invalid_argument);
    // Source inside the image.
    FanDistances close;
    close.src_to_center = 5.0;
    CHECK_THROWS_AS(make_geometry(Beam::Fan, 4, 8, {16, 1.0}, close), std::invalid_argument);
}

TEST_CASE("forward_project: zero image gives a zero sinogram") {
    ScanGeometry g = make_geometry(Beam::Parallel, 6, 12, {16, 1.0});
    Sinogram s = forward_project(Image(16, 1.0), g);
    for (double v : s.data.span()) CHECK(v == 0.0);
}

TEST_CASE("forward_project: central ray through a uniform disk matches the chord length") {
    const std::size_t n = 128;
    Image disk(n, 1.0);
    const double center = (static_cast<double>(n) - 1.0) / 2.0;
    const double radius = 0.6 * static_cast<double>(n) / 2.0;  // 38.4 pixels
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double x = static_cast<double>(c) - center;
            const double y = center - static_cast<double>(r);
            disk.data.at(r, c) = x * x + y * y <= radius * radius ? 1.0 : 0.0;
        }
    // Odd detector count puts one element exactly on the rotation center.
    ScanGeometry g = make_geometry(Beam::Parallel, 2, 129, {n, 1.0}, {}, 1.0);
    Sinogram s = forward_project(disk, g);
    const double chord = 2.0 * radius;
    CHECK(rel_err(s.data.at(0, 64), chord) < 0.02);
}

TEST_CASE("projector pair equals the explicit matrix on an 8x8 grid") {
    for (Beam beam : {Beam::Parallel, Beam::Fan}) {
        ScanGeometry g = make_geometry(beam, 7, 11, {8, 1.0});
        Tensor a = as_dense_matrix(g);
        Tensor u = random_tensor({8, 8}, 900 + static_cast<int>(beam));
        Tensor y = random_tensor({7, 11}, 901 + static_cast<int>(beam));

        // Forward equals the matrix multiply exactly: same weights, same
        // accumulation order per ray.
        Sinogram fwd = forward_project(Image(8, 1.0, u), g);
        for (std::size_t ray = 0; ray < 7 * 11; ++ray) {
            double want = 0.0;
            for (std::size_t p = 0; p < 64; ++p) want += a.at(ray, p) * u[p];
            CHECK(fwd.data[ray] == doctest::Approx(want).epsilon(1e-13));
        }

        // Backprojection equals A^T y.
        Image bp = back_project(Sinogram(7, 11, y), g);
        for (std::size_t p = 0; p < 64; ++p) {
            double want = 0.0;
            for (std::size_t ray = 0; ray < 7 * 11; ++ray) want += a.at(ray, p) * y[ray];
            CHECK(bp.data[p] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("back_project: zero sinogram gives a zero image") {
    ScanGeometry g = make_geometry(Beam::Fan, 5, 9, {16, 1.0});
    Image img = back_project(Sinogram(5, 9), g);
    for (double v : img.data.span()) CHECK(v == 0.0);
}

TEST_CASE("adjoint identity <Pu,y> = <u,P^T y> on random 16x16 inputs") {
    for (Beam beam : {Beam::Parallel, Beam::Fan}) {
        ScanGeometry g = make_geometry(beam, 12, 24, {16, 1.0});
        for (std::uint64_t s = 0; s < 20; ++s) {
            Tensor u = random_tensor({16, 16}, 1000 + s);
            Tensor y = random_tensor({12, 24}, 2000 + s);
            const double lhs = dot(forward_project(Image(16, 1.0, u), g).data, y);
            const double rhs = dot(u, back_project(Sinogram(12, 24, y), g).data);
            CHECK(std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12) < 1e-12);
        }
    }
}

TEST_CASE("projection is linear") {
    ScanGeometry g = make_geometry(Beam::Parallel, 9, 20, {16, 1.0});
    Tensor u = random_tensor({16, 16}, 3000);
    Tensor v = random_tensor({16, 16}, 3001);
    const double alpha = 0.7, beta = -1.3;
    Tensor combo(u.shape());
    for (std::size_t i = 0; i < u.size(); ++i) combo[i] = alpha * u[i] + beta * v[i];
    Tensor lhs = forward_project(Image(16, 1.0, combo), g).data;
    Tensor pu = forward_project(Image(16, 1.0, u), g).data;
    Tensor pv = forward_project(Image(16, 1.0, v), g).data;
    for (std::size_t i = 0; i < lhs.size(); ++i)
        CHECK(std::abs(lhs[i] - (alpha * pu[i] + beta * pv[i])) < 1e-12 * (1.0 + std::abs(lhs[i])));
}

TEST_CASE("rotating the image by one view increment cyclically shifts the sinogram") {
    const std::size_t n = 64, nv = 16;
    ScanGeometry g = make_geometry(Beam::Parallel, nv, 96, {n, 1.0});
    Image smooth = gaussian_blob(n, 6.0, -4.0, 7.0);
    Sinogram base = forward_project(smooth, g);
    Sinogram rotated = forward_project(rotate_image(smooth, 2.0 * std::numbers::pi / nv), g);

    double num = 0.0, den = 0.0;
    for (std::size_t v = 0; v < nv; ++v)
        for (std::size_t d = 0; d < g.n_det; ++d) {
            const double want = base.data.at((v + nv - 1) % nv, d);
            const double got = rotated.data.at(v, d);
            num += (got - want) * (got - want);
            den += want * want;
        }
    CHECK(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("as_dense_matrix enforces the size guard") {
    ScanGeometry g = make_geometry(Beam::Parallel, 4, 8, {128, 1.0});
    CHECK_THROWS_AS(as_dense_matrix(g), std::invalid_argument);
}

TEST_CASE("geometry/shape mismatches are rejected") {
    ScanGeometry g = make_geometry(Beam::Parallel, 4, 8, {16, 1.0});
    CHECK_THROWS_AS(forward_project(Image(8, 1.0), g), std::invalid_argument);
    CHECK_THROWS_AS(back_project(Sinogram(4, 9), g), std::invalid_argument);
}

TEST_CASE("back_project result does not depend on the worker cap") {
    ScanGeometry g = make_geometry(Beam::Fan, 20, 24, {16, 1.0});
    Tensor y = random_tensor({20, 24}, 4000);
    Image a = back_project(Sinogram(20, 24, y), g);
    // kViewChunk-sized reduction blocks make the sum order fixed; compare
    // against a rerun to at least pin determinism within this process.
    Image b = back_project(Sinogram(20, 24, y), g);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
}
