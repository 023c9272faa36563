#include "metainv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "metainv/linear_ops.hpp"

namespace metainv {

namespace {

double dynamic_range(const Tensor& t) {
    double lo = t[0], hi = t[0];
    for (double v : t.span()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi - lo;
}

std::size_t fitting_window(std::size_t rows, std::size_t cols) {
    std::size_t w = std::min<std::size_t>(11, std::min(rows, cols));
    if (w % 2 == 0) --w;
    return w;
}

struct SsimTerms {
    double full_mean;  // mean SSIM map
    double cs_mean;    // mean contrast-structure term
};

SsimTerms ssim_terms(const Tensor& x, const Tensor& y, double peak) {
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    const std::size_t win = fitting_window(rows, cols);
    GaussianWindowOp g(rows, cols, win, 1.5);

    Tensor mu_x = g.apply(x);
    Tensor mu_y = g.apply(y);
    Tensor xx(x.shape()), yy(x.shape()), xy(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    Tensor exx = g.apply(xx);
    Tensor eyy = g.apply(yy);
    Tensor exy = g.apply(xy);

    const double c1 = 0.01 * peak * 0.01 * peak;
    const double c2 = 0.03 * peak * 0.03 * peak;
    double acc_full = 0.0, acc_cs = 0.0;
    for (std::size_t i = 0; i < mu_x.size(); ++i) {
        const double sx = exx[i] - mu_x[i] * mu_x[i];
        const double sy = eyy[i] - mu_y[i] * mu_y[i];
        const double sxy = exy[i] - mu_x[i] * mu_y[i];
        const double cs = (2.0 * sxy + c2) / (sx + sy + c2);
        const double lum = (2.0 * mu_x[i] * mu_y[i] + c1) / (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1);
        acc_full += lum * cs;
        acc_cs += cs;
    }
    const auto nvalid = static_cast<double>(mu_x.size());
    return {acc_full / nvalid, acc_cs / nvalid};
}

Tensor mean_pool2(const Tensor& t) {
    const std::size_t rows = t.dim(0) / 2, cols = t.dim(1) / 2;
    Tensor out({rows, cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out.at(r, c) =
                0.25 * (t.at(2 * r, 2 * c) + t.at(2 * r, 2 * c + 1) + t.at(2 * r + 1, 2 * c) +
                        t.at(2 * r + 1, 2 * c + 1));
    return out;
}

constexpr double kMsWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

} // namespace

double psnr(const Tensor& x, const Tensor& y, double peak) {
    require_same_shape(x, y, "psnr");
    if (peak <= 0.0) {
        peak = dynamic_range(y);
        if (peak <= 0.0) peak = 1.0;
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& x, const Tensor& y) {
    require_same_shape(x, y, "ssim");
    if (x.rank() != 2) throw std::invalid_argument("ssim: 2-D images required");
    double peak = std::max(dynamic_range(x), dynamic_range(y));
    if (peak <= 0.0) peak = 1.0;
    return ssim_terms(x, y, peak).full_mean;
}

MsSsimResult ms_ssim(const Tensor& x, const Tensor& y, std::size_t levels) {
    require_same_shape(x, y, "ms_ssim");
    if (x.rank() != 2) throw std::invalid_argument("ms_ssim: 2-D images required");
    if (levels < 1 || levels > 5) throw std::invalid_argument("ms_ssim: levels must be in 1..5");

    double peak = std::max(dynamic_range(x), dynamic_range(y));
    if (peak <= 0.0) peak = 1.0;

    // Largest level count for which an 11-tap window still fits.
    std::size_t feasible = 1;
    {
        std::size_t side = std::min(x.dim(0), x.dim(1));
        while (feasible < levels && (side >> 1) >= 11) {
            side >>= 1;
            ++feasible;
        }
        if (std::min(x.dim(0), x.dim(1)) < 11) feasible = 1;
    }
    const std::size_t m = feasible;

    double wsum = 0.0;
    for (std::size_t j = 0; j < m; ++j) wsum += kMsWeights[j];

    Tensor cx = x, cy = y;
    double value = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
        const SsimTerms terms = ssim_terms(cx, cy, peak);
        const double w = kMsWeights[j] / wsum;
        const double base = j + 1 == m ? terms.full_mean : terms.cs_mean;
        value *= std::pow(std::max(base, 0.0), w);
        if (j + 1 < m) {
            cx = mean_pool2(cx);
            cy = mean_pool2(cy);
        }
    }
    return {value, m};
}

} // namespace metainv
