#include "metainv/linear_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace metainv {

MatrixOp::MatrixOp(Tensor mat) : mat_(std::move(mat)) {
    if (mat_.rank() != 2) throw std::invalid_argument("MatrixOp: matrix must be 2-D");
    rows_ = mat_.dim(0);
    cols_ = mat_.dim(1);
}

Tensor MatrixOp::apply(const Tensor& x) const {
    Tensor y({rows_});
    for (std::size_t r = 0; r < rows_; ++r)
        y[r] = kernels::dot_seq(mat_.data() + r * cols_, x.data(), cols_);
    return y;
}

Tensor MatrixOp::adjoint(const Tensor& y) const {
    Tensor x({cols_});
    for (std::size_t r = 0; r < rows_; ++r) {
        const double v = y[r];
        const double* row = mat_.data() + r * cols_;
        for (std::size_t c = 0; c < cols_; ++c) x[c] += v * row[c];
    }
    return x;
}

Tensor ProjectorOp::apply(const Tensor& x) const {
    Image img(g_.n, g_.pixel_size, x);
    return forward_project(img, g_).data;
}

Tensor ProjectorOp::adjoint(const Tensor& y) const {
    Sinogram s(g_.n_views(), g_.n_det, y);
    return back_project(s, g_).data;
}

NormalOp::NormalOp(ScanGeometry g, Tensor channel_gammas) : g_(std::move(g)), gammas_(std::move(channel_gammas)) {
    if (gammas_.size() == 1) gammas_ = Tensor::full({framelet::kHighpassChannels}, gammas_[0]);
    if (gammas_.size() != framelet::kHighpassChannels)
        throw std::invalid_argument("NormalOp: gammas must be scalar or one per highpass channel");
}

Tensor NormalOp::apply(const Tensor& x) const {
    Image img(g_.n, g_.pixel_size, x);
    Tensor out = back_project(forward_project(img, g_), g_).data;
    Tensor c = framelet::highpass(x);
    const std::size_t per = g_.n * g_.n;
    for (std::size_t ch = 0; ch < framelet::kHighpassChannels; ++ch) {
        double* p = c.data() + ch * per;
        const double gamma = gammas_[ch];
        for (std::size_t i = 0; i < per; ++i) p[i] *= gamma;
    }
    out += framelet::highpass_adjoint(c);
    return out;
}

GaussianWindowOp::GaussianWindowOp(std::size_t rows, std::size_t cols, std::size_t window, double sigma)
    : rows_(rows), cols_(cols), win_(window), taps_(window) {
    if (window % 2 == 0 || window < 1) throw std::invalid_argument("GaussianWindowOp: window must be odd");
    if (window > rows || window > cols)
        throw std::invalid_argument("GaussianWindowOp: window exceeds image size");
    const double c = (static_cast<double>(window) - 1.0) / 2.0;
    double s = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        const double d = static_cast<double>(i) - c;
        taps_[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        s += taps_[i];
    }
    for (double& t : taps_) t /= s;
}

Tensor GaussianWindowOp::apply(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(0) != rows_ || x.dim(1) != cols_)
        throw std::invalid_argument("GaussianWindowOp: input shape mismatch");
    const std::size_t orows = rows_ - win_ + 1, ocols = cols_ - win_ + 1;
    // Separable: filter rows into a strip, then columns.
    Tensor strip({orows, cols_});
    for (std::size_t r = 0; r < orows; ++r)
        for (std::size_t c = 0; c < cols_; ++c) {
            double acc = 0.0;
            for (std::size_t t = 0; t < win_; ++t) acc += taps_[t] * x.at(r + t, c);
            strip.at(r, c) = acc;
        }
    Tensor out({orows, ocols});
    for (std::size_t r = 0; r < orows; ++r)
        for (std::size_t c = 0; c < ocols; ++c) {
            double acc = 0.0;
            for (std::size_t t = 0; t < win_; ++t) acc += taps_[t] * strip.at(r, c + t);
            out.at(r, c) = acc;
        }
    return out;
}

Tensor GaussianWindowOp::adjoint(const Tensor& y) const {
    const std::size_t orows = rows_ - win_ + 1, ocols = cols_ - win_ + 1;
    if (y.rank() != 2 || y.dim(0) != orows || y.dim(1) != ocols)
        throw std::invalid_argument("GaussianWindowOp: adjoint input shape mismatch");
    Tensor strip({orows, cols_});
    for (std::size_t r = 0; r < orows; ++r)
        for (std::size_t c = 0; c < ocols; ++c) {
            const double v = y.at(r, c);
            for (std::size_t t = 0; t < win_; ++t) strip.at(r, c + t) += taps_[t] * v;
        }
    Tensor out({rows_, cols_});
    for (std::size_t r = 0; r < orows; ++r)
        for (std::size_t c = 0; c < cols_; ++c) {
            const double v = strip.at(r, c);
            for (std::size_t t = 0; t < win_; ++t) out.at(r + t, c) += taps_[t] * v;
        }
    return out;
}

} // namespace metainv
