#include "metainv/simulate.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "metainv/parallel.hpp"
#include "metainv/rng.hpp"

namespace metainv {

double CounterRng::poisson(double mean) {
    if (mean <= 0.0) return 0.0;
    if (mean > 1000.0) {
        const double v = std::round(mean + std::sqrt(mean) * normal());
        return v < 0.0 ? 0.0 : v;
    }
    double total = 0.0;
    double remaining = mean;
    while (remaining > 0.0) {
        const double chunk = remaining > 60.0 ? 60.0 : remaining;
        remaining -= chunk;
        const double limit = std::exp(-chunk);
        double prod = 1.0;
        double k = -1.0;
        do {
            k += 1.0;
            prod *= uniform_pos();
        } while (prod > limit);
        total += k;
    }
    return total;
}

Image render_ellipses(const std::vector<Ellipse>& ellipses, std::size_t n, double pixel_size) {
    if (n < 16) throw std::invalid_argument("render_ellipses: n must be >= 16");
    Image img(n, pixel_size);
    for (std::size_t r = 0; r < n; ++r) {
        const double y = 1.0 - (static_cast<double>(r) + 0.5) * 2.0 / static_cast<double>(n);
        for (std::size_t c = 0; c < n; ++c) {
            const double x = (static_cast<double>(c) + 0.5) * 2.0 / static_cast<double>(n) - 1.0;
            double v = 0.0;
            for (const Ellipse& e : ellipses) {
                const double cr = std::cos(e.rot);
                const double sr = std::sin(e.rot);
                const double dx = x - e.cx;
                const double dy = y - e.cy;
                const double xr = dx * cr + dy * sr;
                const double yr = -dx * sr + dy * cr;
                if ((xr / e.a) * (xr / e.a) + (yr / e.b) * (yr / e.b) <= 1.0) v += e.intensity;
            }
            img.data.at(r, c) = v < 0.0 ? 0.0 : v;
        }
    }
    return img;
}

const std::vector<Ellipse>& shepp_logan_ellipses() {
    static const double deg = std::numbers::pi / 180.0;
    static const std::vector<Ellipse> ellipses = {
        {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
        {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8},
        {0.22, 0.0, 0.11, 0.31, -18.0 * deg, -0.2},
        {-0.22, 0.0, 0.16, 0.41, 18.0 * deg, -0.2},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.1},
        {0.0, 0.1, 0.046, 0.046, 0.0, 0.1},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.1},
        {-0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
        {0.0, -0.605, 0.023, 0.023, 0.0, 0.1},
        {0.06, -0.605, 0.023, 0.046, 0.0, 0.1},
    };
    return ellipses;
}

Image shepp_logan(std::size_t n, double pixel_size) {
    return render_ellipses(shepp_logan_ellipses(), n, pixel_size);
}

Image random_phantom(std::size_t n, std::uint64_t seed, double pixel_size) {
    CounterRng rng(seed, 0x7068616e746f6dull);  // fixed stream per phantom
    const std::size_t count = 3 + static_cast<std::size_t>(rng.next_u64() % 6);
    std::vector<Ellipse> ellipses;
    ellipses.reserve(count);
    // A large body ellipse, then smaller features inside. Intensities are
    // tissue-like so line integrals stay in a few mean-free-path units and
    // photon counts never starve at the I0 levels used in the experiments.
    ellipses.push_back({rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(0.6, 0.88),
                        rng.uniform(0.6, 0.88), rng.uniform(0.0, std::numbers::pi), rng.uniform(0.10, 0.16)});
    for (std::size_t i = 1; i < count; ++i) {
        const double sign = rng.uniform() < 0.4 ? -1.0 : 1.0;
        ellipses.push_back({rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45), rng.uniform(0.06, 0.35),
                            rng.uniform(0.06, 0.35), rng.uniform(0.0, std::numbers::pi),
                            sign * rng.uniform(0.03, 0.09)});
    }
    return render_ellipses(ellipses, n, pixel_size);
}

void NoiseSpec::validate() const {
    if (!noiseless && i0 <= 0.0) throw std::invalid_argument("NoiseSpec: I0 must be > 0");
    if (sigma_e < 0.0) throw std::invalid_argument("NoiseSpec: sigma_e must be >= 0");
}

Sinogram simulate_sinogram(const Image& img, const ScanGeometry& g, const NoiseSpec& ns) {
    ns.validate();
    for (double v : img.data.span())
        if (v < 0.0) throw std::invalid_argument("simulate_sinogram: image must be nonnegative");
    Sinogram clean = forward_project(img, g);
    if (ns.noiseless) return clean;

    Sinogram out(clean.n_views, clean.n_det);
    std::atomic<std::size_t> clipped{0};
    const std::size_t nd = clean.n_det;
    parallel_for(clean.n_views, [&](std::size_t v) {
        std::size_t clipped_local = 0;
        for (std::size_t d = 0; d < nd; ++d) {
            const std::size_t bin = v * nd + d;
            CounterRng rng(ns.seed, bin);
            const double mean = ns.i0 * std::exp(-clean.data[bin]);
            double counts = rng.poisson(mean);
            if (ns.sigma_e > 0.0) counts += ns.sigma_e * rng.normal();
            if (counts < 1.0) {
                counts = 1.0;
                ++clipped_local;
            }
            out.data[bin] = std::log(ns.i0 / counts);
        }
        clipped += clipped_local;
    });
    const std::size_t total = clean.n_views * clean.n_det;
    if (clipped * 2 > total)
        throw std::runtime_error("simulate_sinogram: more than half the bins clipped below one count; I0=" +
                                 std::to_string(ns.i0) + " is nonphysical for this object");
    return out;
}

} // namespace metainv
