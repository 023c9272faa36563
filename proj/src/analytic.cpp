#include "metainv/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "metainv/parallel.hpp"

namespace metainv {

namespace {

// FFTW planning mutates global state; executions on distinct buffers are safe.
std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

std::vector<double> ramp_kernel(std::size_t n_det, double pitch) {
    // Spatial taps for lags -(n_det-1) .. (n_det-1); the kernel is even.
    std::vector<double> h(2 * n_det - 1, 0.0);
    const double d2 = pitch * pitch;
    h[n_det - 1] = 1.0 / (4.0 * d2);
    for (std::size_t k = 1; k < n_det; ++k) {
        if (k % 2 == 1) {
            const double v = -1.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(k * k) * d2);
            h[n_det - 1 + k] = v;
            h[n_det - 1 - k] = v;
        }
    }
    return h;
}

struct RampFilterPlan {
    std::size_t n_det;
    std::size_t nfft;
    std::vector<std::complex<double>> kernel_f;  // nfft/2+1 bins
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
    double* real_buf = nullptr;
    fftw_complex* cplx_buf = nullptr;

    RampFilterPlan(std::size_t n_det_, double pitch) : n_det(n_det_), nfft(next_pow2(2 * n_det_)) {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        real_buf = fftw_alloc_real(nfft);
        cplx_buf = fftw_alloc_complex(nfft / 2 + 1);
        fwd = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), real_buf, cplx_buf, FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_1d(static_cast<int>(nfft), cplx_buf, real_buf, FFTW_ESTIMATE);

        // Embed the even spatial kernel circularly and transform it once.
        const std::vector<double> h = ramp_kernel(n_det, pitch);
        std::fill(real_buf, real_buf + nfft, 0.0);
        real_buf[0] = h[n_det - 1];
        for (std::size_t k = 1; k < n_det; ++k) {
            real_buf[k] = h[n_det - 1 + k];
            real_buf[nfft - k] = h[n_det - 1 - k];
        }
        fftw_execute(fwd);
        kernel_f.resize(nfft / 2 + 1);
        for (std::size_t i = 0; i < kernel_f.size(); ++i)
            kernel_f[i] = {cplx_buf[i][0], cplx_buf[i][1]};
    }

    ~RampFilterPlan() {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
        fftw_free(real_buf);
        fftw_free(cplx_buf);
    }

    RampFilterPlan(const RampFilterPlan&) = delete;
    RampFilterPlan& operator=(const RampFilterPlan&) = delete;

    // In-place filtering of one detector row: raw convolution sum with the
    // spatial ramp taps (caller applies any pitch scaling).
    void filter_row(double* row) {
        std::copy(row, row + n_det, real_buf);
        std::fill(real_buf + n_det, real_buf + nfft, 0.0);
        fftw_execute(fwd);
        const double inv_n = 1.0 / static_cast<double>(nfft);
        for (std::size_t i = 0; i <= nfft / 2; ++i) {
            const std::complex<double> v{cplx_buf[i][0], cplx_buf[i][1]};
            const std::complex<double> w = v * kernel_f[i] * inv_n;
            cplx_buf[i][0] = w.real();
            cplx_buf[i][1] = w.imag();
        }
        fftw_execute(inv);
        std::copy(real_buf, real_buf + n_det, row);
    }
};

Tensor filter_rows(const Tensor& rows, std::size_t n_det, double pitch) {
    Tensor out = rows;
    RampFilterPlan plan(n_det, pitch);
    const std::size_t n_views = rows.dim(0);
    for (std::size_t v = 0; v < n_views; ++v) plan.filter_row(out.data() + v * n_det);
    return out;
}

Image fbp_parallel(const Sinogram& s, const ScanGeometry& g) {
    Sinogram q(s.n_views, s.n_det, filter_rows(s.data, g.n_det, g.det_pitch));
    Image u = back_project(q, g);
    const double scale = std::numbers::pi / static_cast<double>(g.n_views()) * (g.det_pitch * g.det_pitch) /
                         (g.pixel_size * g.pixel_size);
    u.data *= scale;
    return u;
}

Image fbp_fan(const Sinogram& s, const ScanGeometry& g) {
    const std::size_t nd = g.n_det;
    const double mag = g.src_to_center / (g.src_to_center + g.det_to_center);
    const double vpitch = g.det_pitch * mag;  // pitch of the virtual detector through the isocenter

    // Cosine pre-weighting in virtual coordinates, then ramp filtering.
    Tensor weighted = s.data;
    std::vector<double> sv(nd);
    for (std::size_t d = 0; d < nd; ++d) {
        sv[d] = (static_cast<double>(d) - (static_cast<double>(nd) - 1.0) / 2.0) * vpitch;
        const double w = g.src_to_center / std::sqrt(g.src_to_center * g.src_to_center + sv[d] * sv[d]);
        for (std::size_t v = 0; v < s.n_views; ++v) weighted.at(v, d) *= w;
    }
    Tensor q = filter_rows(weighted, nd, vpitch);
    q *= vpitch;  // discrete convolution -> continuous filtering units

    Image out(g.n, g.pixel_size);
    const double dso = g.src_to_center;
    const double dbeta = 2.0 * std::numbers::pi / static_cast<double>(g.n_views());
    const double center = (static_cast<double>(g.n) - 1.0) / 2.0;
    const std::size_t n = g.n;

    parallel_for(n, [&](std::size_t r) {
        const double y = (center - static_cast<double>(r)) * g.pixel_size;
        double* orow = out.data.data() + r * n;
        for (std::size_t c = 0; c < n; ++c) {
            const double x = (static_cast<double>(c) - center) * g.pixel_size;
            double acc = 0.0;
            for (std::size_t v = 0; v < g.n_views(); ++v) {
                const double cb = std::cos(g.angles[v]);
                const double sb = std::sin(g.angles[v]);
                const double dot_src = x * cb + y * sb;
                const double dot_s = -x * sb + y * cb;
                const double U = (dso - dot_src) / dso;
                if (U <= 0.0) continue;  // behind the source
                const double st = dot_s / U;
                const double pos = st / vpitch + (static_cast<double>(nd) - 1.0) / 2.0;
                const double fp = std::floor(pos);
                const auto i0 = static_cast<std::ptrdiff_t>(fp);
                if (i0 < 0 || i0 + 1 >= static_cast<std::ptrdiff_t>(nd)) continue;
                const double f = pos - fp;
                const double val = q[v * nd + static_cast<std::size_t>(i0)] * (1.0 - f) +
                                   q[v * nd + static_cast<std::size_t>(i0) + 1] * f;
                acc += val / (U * U);
            }
            // Half the 2pi integral: every line is measured twice per turn.
            orow[c] = 0.5 * dbeta * acc;
        }
    });
    return out;
}

} // namespace

Sinogram ramlak_filter(const Sinogram& s, const ScanGeometry& g) {
    require_sino_matches(s, g, "ramlak_filter");
    return Sinogram(s.n_views, s.n_det, filter_rows(s.data, g.n_det, g.det_pitch));
}

Image fbp(const Sinogram& s, const ScanGeometry& g) {
    require_sino_matches(s, g, "fbp");
    return g.beam == Beam::Parallel ? fbp_parallel(s, g) : fbp_fan(s, g);
}

} // namespace metainv
