#include "metainv/framelet.hpp"

#include <cmath>
#include <stdexcept>

namespace metainv {
namespace framelet {

namespace {

constexpr double kS2_4 = 0.35355339059327373;  // sqrt(2)/4

constexpr std::array<std::array<double, 3>, 3> kMasks = {{
    {0.25, 0.5, 0.25},
    {kS2_4, 0.0, -kS2_4},
    {-0.25, 0.5, -0.25},
}};

inline std::size_t clampi(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) return 0;
    if (i >= static_cast<std::ptrdiff_t>(n)) return n - 1;
    return static_cast<std::size_t>(i);
}

// Correlation along axis 0 with edge extension: out[r] = sum_m h[m] x[r+m-1].
void filt_rows(const double* x, double* out, std::size_t nr, std::size_t nc, const std::array<double, 3>& h) {
    for (std::size_t r = 0; r < nr; ++r) {
        const double* xm = x + clampi(static_cast<std::ptrdiff_t>(r) - 1, nr) * nc;
        const double* x0 = x + r * nc;
        const double* xp = x + clampi(static_cast<std::ptrdiff_t>(r) + 1, nr) * nc;
        double* o = out + r * nc;
        for (std::size_t c = 0; c < nc; ++c) o[c] = h[0] * xm[c] + h[1] * x0[c] + h[2] * xp[c];
    }
}

void filt_cols(const double* x, double* out, std::size_t nr, std::size_t nc, const std::array<double, 3>& h) {
    for (std::size_t r = 0; r < nr; ++r) {
        const double* xr = x + r * nc;
        double* o = out + r * nc;
        for (std::size_t c = 0; c < nc; ++c) {
            const std::size_t cm = clampi(static_cast<std::ptrdiff_t>(c) - 1, nc);
            const std::size_t cp = clampi(static_cast<std::ptrdiff_t>(c) + 1, nc);
            o[c] = h[0] * xr[cm] + h[1] * xr[c] + h[2] * xr[cp];
        }
    }
}

// Adjoints scatter through the same index clamping.
void filt_rows_adj(const double* x, double* out, std::size_t nr, std::size_t nc, const std::array<double, 3>& h) {
    std::fill(out, out + nr * nc, 0.0);
    for (std::size_t r = 0; r < nr; ++r) {
        const double* xr = x + r * nc;
        double* om = out + clampi(static_cast<std::ptrdiff_t>(r) - 1, nr) * nc;
        double* o0 = out + r * nc;
        double* op = out + clampi(static_cast<std::ptrdiff_t>(r) + 1, nr) * nc;
        for (std::size_t c = 0; c < nc; ++c) {
            om[c] += h[0] * xr[c];
            o0[c] += h[1] * xr[c];
            op[c] += h[2] * xr[c];
        }
    }
}

void filt_cols_adj(const double* x, double* out, std::size_t nr, std::size_t nc, const std::array<double, 3>& h) {
    std::fill(out, out + nr * nc, 0.0);
    for (std::size_t r = 0; r < nr; ++r) {
        const double* xr = x + r * nc;
        double* o = out + r * nc;
        for (std::size_t c = 0; c < nc; ++c) {
            o[clampi(static_cast<std::ptrdiff_t>(c) - 1, nc)] += h[0] * xr[c];
            o[c] += h[1] * xr[c];
            o[clampi(static_cast<std::ptrdiff_t>(c) + 1, nc)] += h[2] * xr[c];
        }
    }
}

void require_square2d(const Tensor& u, const char* where) {
    if (u.rank() != 2) throw std::invalid_argument(std::string(where) + ": expected a 2-D tensor");
}

} // namespace

std::array<std::array<double, 3>, 3> masks_1d() { return {kMasks[0], kMasks[1], kMasks[2]}; }

Tensor highpass(const Tensor& u) {
    require_square2d(u, "framelet::highpass");
    const std::size_t nr = u.dim(0), nc = u.dim(1);
    Tensor out({kHighpassChannels, nr, nc});
    Tensor rowpass({nr, nc});
    std::size_t ch = 0;
    for (int i = 0; i < 3; ++i) {
        filt_rows(u.data(), rowpass.data(), nr, nc, kMasks[i]);
        for (int j = 0; j < 3; ++j) {
            if (i == 0 && j == 0) continue;
            filt_cols(rowpass.data(), out.data() + ch * nr * nc, nr, nc, kMasks[j]);
            ++ch;
        }
    }
    return out;
}

Tensor highpass_adjoint(const Tensor& c) {
    if (c.rank() != 3 || c.dim(0) != kHighpassChannels)
        throw std::invalid_argument("framelet::highpass_adjoint: expected [8,n,n] coefficients");
    const std::size_t nr = c.dim(1), nc = c.dim(2);
    Tensor out({nr, nc});
    Tensor colacc({nr, nc});
    Tensor tmp({nr, nc});
    Tensor rowadj({nr, nc});
    std::size_t ch = 0;
    for (int i = 0; i < 3; ++i) {
        bool any = false;
        for (int j = 0; j < 3; ++j) {
            if (i == 0 && j == 0) continue;
            filt_cols_adj(c.data() + ch * nr * nc, tmp.data(), nr, nc, kMasks[j]);
            if (!any) {
                colacc = tmp;
                any = true;
            } else {
                colacc += tmp;
            }
            ++ch;
        }
        if (any) {
            filt_rows_adj(colacc.data(), rowadj.data(), nr, nc, kMasks[i]);
            out += rowadj;
        }
    }
    return out;
}

Tensor lowpass(const Tensor& u) {
    require_square2d(u, "framelet::lowpass");
    const std::size_t nr = u.dim(0), nc = u.dim(1);
    Tensor t({nr, nc});
    Tensor out({nr, nc});
    filt_rows(u.data(), t.data(), nr, nc, kMasks[0]);
    filt_cols(t.data(), out.data(), nr, nc, kMasks[0]);
    return out;
}

Tensor lowpass_adjoint(const Tensor& u) {
    require_square2d(u, "framelet::lowpass_adjoint");
    const std::size_t nr = u.dim(0), nc = u.dim(1);
    Tensor t({nr, nc});
    Tensor out({nr, nc});
    filt_cols_adj(u.data(), t.data(), nr, nc, kMasks[0]);
    filt_rows_adj(t.data(), out.data(), nr, nc, kMasks[0]);
    return out;
}

} // namespace framelet

FrameCoeffs analyze(const Image& img) {
    FrameCoeffs c;
    c.channels = framelet::highpass(img.data);
    c.lowpass = framelet::lowpass(img.data);
    return c;
}

FrameCoeffs w_apply(const Image& img) {
    FrameCoeffs c;
    c.channels = framelet::highpass(img.data);
    return c;
}

Image w_adjoint(const FrameCoeffs& c, double pixel_size) {
    Tensor u = framelet::highpass_adjoint(c.channels);
    const std::size_t n = u.dim(0);
    return Image(n, pixel_size, std::move(u));
}

} // namespace metainv
