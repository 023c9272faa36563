#include "metainv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "metainv/parallel.hpp"

namespace metainv {

namespace {

struct Ray {
    double ox, oy;  // origin
    double dx, dy;  // unit direction
    double tmin, tmax;
    bool hits;
};

// Clips a line p0 + t*d against the image square [-half, half]^2.
bool clip_to_box(double ox, double oy, double dx, double dy, double half, double& tmin, double& tmax) {
    tmin = -1e300;
    tmax = 1e300;
    const double o[2] = {ox, oy};
    const double d[2] = {dx, dy};
    for (int k = 0; k < 2; ++k) {
        if (std::abs(d[k]) < 1e-12) {
            if (o[k] < -half || o[k] > half) return false;
        } else {
            double t1 = (-half - o[k]) / d[k];
            double t2 = (half - o[k]) / d[k];
            if (t1 > t2) std::swap(t1, t2);
            tmin = std::max(tmin, t1);
            tmax = std::min(tmax, t2);
        }
    }
    return tmax > tmin;
}

Ray make_ray(const ScanGeometry& g, std::size_t view, std::size_t det) {
    const double theta = g.angles[view];
    const double s = (static_cast<double>(det) - (static_cast<double>(g.n_det) - 1.0) / 2.0) * g.det_pitch;
    const double c = std::cos(theta);
    const double sn = std::sin(theta);
    Ray r{};
    if (g.beam == Beam::Parallel) {
        r.ox = s * c;
        r.oy = s * sn;
        r.dx = -sn;
        r.dy = c;
    } else {
        const double sx = g.src_to_center * c;
        const double sy = g.src_to_center * sn;
        const double px = -g.det_to_center * c - s * sn;
        const double py = -g.det_to_center * sn + s * c;
        double dx = px - sx;
        double dy = py - sy;
        const double len = std::sqrt(dx * dx + dy * dy);
        r.ox = sx;
        r.oy = sy;
        r.dx = dx / len;
        r.dy = dy / len;
    }
    const double half = static_cast<double>(g.n) * g.pixel_size / 2.0;
    r.hits = clip_to_box(r.ox, r.oy, r.dx, r.dy, half, r.tmin, r.tmax);
    return r;
}

// Walks one ray; calls visit(pixel_index, weight) for every bilinear tap.
// The weight already includes the sampling step.
template <typename Visit>
void walk_ray(const ScanGeometry& g, const Ray& ray, Visit&& visit) {
    if (!ray.hits) return;
    const double h = g.pixel_size;
    const double step = h / 2.0;
    const auto n = static_cast<std::ptrdiff_t>(g.n);
    const double center = (static_cast<double>(g.n) - 1.0) / 2.0;
    const auto nsteps = static_cast<std::size_t>(std::ceil((ray.tmax - ray.tmin) / step));
    for (std::size_t k = 0; k < nsteps; ++k) {
        const double t = ray.tmin + (static_cast<double>(k) + 0.5) * step;
        const double x = ray.ox + t * ray.dx;
        const double y = ray.oy + t * ray.dy;
        const double cc = x / h + center;
        const double rr = center - y / h;
        const double fc = std::floor(cc);
        const double fr = std::floor(rr);
        const auto c0 = static_cast<std::ptrdiff_t>(fc);
        const auto r0 = static_cast<std::ptrdiff_t>(fr);
        const double wc = cc - fc;
        const double wr = rr - fr;
        for (int dr = 0; dr < 2; ++dr) {
            const std::ptrdiff_t r = r0 + dr;
            if (r < 0 || r >= n) continue;
            const double wy = dr ? wr : 1.0 - wr;
            for (int dc = 0; dc < 2; ++dc) {
                const std::ptrdiff_t c = c0 + dc;
                if (c < 0 || c >= n) continue;
                const double wx = dc ? wc : 1.0 - wc;
                visit(static_cast<std::size_t>(r * n + c), step * wy * wx);
            }
        }
    }
}

// Back-projection accumulates per-view partial images in fixed-size chunks
// and reduces them in view order, so the result is independent of the
// worker count.
constexpr std::size_t kViewChunk = 8;

} // namespace

Image::Image(std::size_t n_, double pixel_size_) : n(n_), pixel_size(pixel_size_), data(Shape{n_, n_}) {}

Image::Image(std::size_t n_, double pixel_size_, Tensor data_)
    : n(n_), pixel_size(pixel_size_), data(std::move(data_)) {
    if (data.rank() != 2 || data.dim(0) != n || data.dim(1) != n)
        throw std::invalid_argument("Image: data shape " + shape_str(data.shape()) + " does not match n=" +
                                    std::to_string(n));
    if (n < 2) throw std::invalid_argument("Image: n must be >= 2");
    if (pixel_size <= 0.0) throw std::invalid_argument("Image: pixel_size must be > 0");
}

Sinogram::Sinogram(std::size_t n_views_, std::size_t n_det_)
    : n_views(n_views_), n_det(n_det_), data(Shape{n_views_, n_det_}) {}

Sinogram::Sinogram(std::size_t n_views_, std::size_t n_det_, Tensor data_)
    : n_views(n_views_), n_det(n_det_), data(std::move(data_)) {
    if (data.rank() != 2 || data.dim(0) != n_views || data.dim(1) != n_det)
        throw std::invalid_argument("Sinogram: data shape mismatch");
}

ScanGeometry make_geometry(Beam beam, std::size_t n_views, std::size_t n_det, ImageSpec image,
                           FanDistances distances, std::optional<double> det_pitch) {
    if (n_views < 1) throw std::invalid_argument("make_geometry: n_views must be >= 1");
    if (n_det < 2) throw std::invalid_argument("make_geometry: n_det must be >= 2");
    if (image.n < 2) throw std::invalid_argument("make_geometry: image side must be >= 2");
    if (image.pixel_size <= 0.0) throw std::invalid_argument("make_geometry: pixel_size must be > 0");

    ScanGeometry g;
    g.beam = beam;
    g.n = image.n;
    g.pixel_size = image.pixel_size;
    g.n_det = n_det;
    g.angles.resize(n_views);
    for (std::size_t k = 0; k < n_views; ++k)
        g.angles[k] = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_views);

    const double extent = static_cast<double>(image.n) * image.pixel_size;  // physical side
    const double r_circum = extent / std::numbers::sqrt2;                   // circumscribed radius

    if (beam == Beam::Fan) {
        g.src_to_center = distances.src_to_center.value_or(extent);
        g.det_to_center = distances.det_to_center.value_or(g.src_to_center);
        if (g.src_to_center <= r_circum)
            throw std::invalid_argument("make_geometry: fan source lies inside the image");
        if (det_pitch) {
            g.det_pitch = *det_pitch;
        } else {
            const double half_angle = std::asin(std::min(0.999, r_circum / g.src_to_center));
            const double half_width = (g.src_to_center + g.det_to_center) * std::tan(half_angle);
            g.det_pitch = 2.0 * half_width / static_cast<double>(n_det);
        }
    } else {
        g.det_pitch = det_pitch.value_or(2.0 * r_circum / static_cast<double>(n_det));
    }
    if (g.det_pitch <= 0.0) throw std::invalid_argument("make_geometry: det_pitch must be > 0");
    return g;
}

void require_image_matches(const Image& img, const ScanGeometry& g, const char* where) {
    if (img.n != g.n || img.pixel_size != g.pixel_size)
        throw std::invalid_argument(std::string(where) + ": image grid does not match geometry");
    if (img.data.rank() != 2 || img.data.dim(0) != img.n || img.data.dim(1) != img.n)
        throw std::invalid_argument(std::string(where) + ": image tensor shape mismatch");
}

void require_sino_matches(const Sinogram& s, const ScanGeometry& g, const char* where) {
    if (s.n_views != g.n_views() || s.n_det != g.n_det)
        throw std::invalid_argument(std::string(where) + ": sinogram does not match geometry");
}

Sinogram forward_project(const Image& img, const ScanGeometry& g) {
    require_image_matches(img, g, "forward_project");
    Sinogram out(g.n_views(), g.n_det);
    const double* u = img.data.data();
    double* y = out.data.data();
    parallel_for(g.n_views(), [&](std::size_t v) {
        for (std::size_t d = 0; d < g.n_det; ++d) {
            double acc = 0.0;
            walk_ray(g, make_ray(g, v, d), [&](std::size_t pix, double w) { acc += w * u[pix]; });
            y[v * g.n_det + d] = acc;
        }
    });
    return out;
}

Image back_project(const Sinogram& s, const ScanGeometry& g) {
    require_sino_matches(s, g, "back_project");
    Image out(g.n, g.pixel_size);
    const std::size_t npix = g.n * g.n;
    const double* y = s.data.data();

    std::vector<Tensor> partial(std::min<std::size_t>(kViewChunk, g.n_views()), Tensor(Shape{g.n, g.n}));
    for (std::size_t start = 0; start < g.n_views(); start += kViewChunk) {
        const std::size_t m = std::min(kViewChunk, g.n_views() - start);
        parallel_for(m, [&](std::size_t i) {
            double* buf = partial[i].data();
            std::fill(buf, buf + npix, 0.0);
            const std::size_t v = start + i;
            for (std::size_t d = 0; d < g.n_det; ++d) {
                const double val = y[v * g.n_det + d];
                walk_ray(g, make_ray(g, v, d), [&](std::size_t pix, double w) { buf[pix] += val * w; });
            }
        });
        for (std::size_t i = 0; i < m; ++i) out.data += partial[i];
    }
    return out;
}

Tensor as_dense_matrix(const ScanGeometry& g) {
    const std::size_t npix = g.n * g.n;
    if (npix > 4096) throw std::invalid_argument("as_dense_matrix: image too large (n*n > 4096)");
    const std::size_t nrays = g.n_views() * g.n_det;
    Tensor A({nrays, npix});
    for (std::size_t v = 0; v < g.n_views(); ++v) {
        for (std::size_t d = 0; d < g.n_det; ++d) {
            double* row = A.data() + (v * g.n_det + d) * npix;
            walk_ray(g, make_ray(g, v, d), [&](std::size_t pix, double w) { row[pix] += w; });
        }
    }
    return A;
}

} // namespace metainv
