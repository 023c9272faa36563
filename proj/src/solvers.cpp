#include "metainv/solvers.hpp"

#include <cmath>
#include <stdexcept>

#include "metainv/analytic.hpp"
#include "metainv/linear_ops.hpp"
#include "metainv/tape.hpp"

namespace metainv {

void HqsParams::validate() const {
    if (lambda0 <= 0.0) throw std::invalid_argument("HqsParams: lambda0 must be > 0");
    if (gamma0 <= 0.0) throw std::invalid_argument("HqsParams: gamma0 must be > 0");
    if (K < 1) throw std::invalid_argument("HqsParams: K must be >= 1");
    // L = 0 is allowed as a degenerate setting: the CG solve collapses to
    // its warm start, which the unrolled network uses in one edge case.
    if (gamma_floor <= 0.0) throw std::invalid_argument("HqsParams: gamma_floor must be > 0");
}

std::pair<double, double> schedule(const HqsParams& p, std::size_t k) {
    const double lambda = std::max(p.lambda0 - static_cast<double>(k) * p.d_lambda, p.lambda_floor);
    const double gamma = std::max(p.gamma0 - static_cast<double>(k) * p.d_gamma, p.gamma_floor);
    return {lambda, gamma};
}

Tensor layer_thresholds(const HqsParams& p, std::size_t k) {
    const auto [lambda, gamma] = schedule(p, k);
    const double t = p.threshold_mode == HqsParams::ThresholdMode::Ratio ? lambda / gamma : lambda;
    return Tensor::full({framelet::kHighpassChannels}, t);
}

Tensor soft_threshold_channels(const Tensor& channels, const Tensor& thresholds) {
    if (channels.rank() != 3) throw std::invalid_argument("soft_threshold: expected [C,n,n] channels");
    const std::size_t C = channels.dim(0);
    if (thresholds.size() != 1 && thresholds.size() != C)
        throw std::invalid_argument("soft_threshold: thresholds must be scalar or per-channel");
    for (double t : thresholds.span())
        if (t < 0.0) throw std::invalid_argument("soft_threshold: negative threshold");
    const std::size_t per = channels.dim(1) * channels.dim(2);
    Tensor out(channels.shape());
    for (std::size_t c = 0; c < C; ++c) {
        const double t = thresholds.size() == 1 ? thresholds[0] : thresholds[c];
        const double* x = channels.data() + c * per;
        double* o = out.data() + c * per;
        for (std::size_t i = 0; i < per; ++i) o[i] = kernels::soft_threshold_value(x[i], t);
    }
    return out;
}

FrameCoeffs soft_threshold(const FrameCoeffs& c, const Tensor& thresholds) {
    FrameCoeffs out;
    out.channels = soft_threshold_channels(c.channels, thresholds);
    out.lowpass = c.lowpass;
    return out;
}

CgResult cg_solve(const std::function<Tensor(const Tensor&)>& apply_a, const Tensor& b, const Tensor& x0,
                  std::size_t max_iters, double tol, bool early_stop) {
    require_same_shape(b, x0, "cg_solve");
    CgResult res;
    res.x = x0;
    Tensor r = b - apply_a(res.x);
    Tensor p = r;
    Tensor ap(b.shape());
    double rs = kernels::dot_seq(r.data(), r.data(), r.size());
    const double bnorm = std::sqrt(kernels::dot_seq(b.data(), b.data(), b.size()));
    for (std::size_t it = 0; it < max_iters; ++it) {
        if (!std::isfinite(rs)) throw std::runtime_error("cg_solve: non-finite residual (broken operator?)");
        if (early_stop && std::sqrt(rs) <= tol * bnorm) break;
        res.residual_norms.push_back(std::sqrt(rs));
        ap = apply_a(p);
        const double p_ap = kernels::dot_seq(p.data(), ap.data(), p.size());
        const double alpha = kernels::guarded_div(rs, p_ap);
        kernels::axpy_seq(res.x.data(), res.x.data(), alpha, p.data(), res.x.size());
        kernels::axpy_seq(r.data(), r.data(), -alpha, ap.data(), r.size());
        const double rs_new = kernels::dot_seq(r.data(), r.data(), r.size());
        const double beta = kernels::guarded_div(rs_new, rs);
        kernels::axpy_seq(p.data(), r.data(), beta, p.data(), p.size());
        rs = rs_new;
        ++res.iterations;
    }
    return res;
}

Tensor scale_channels(const Tensor& channels, const Tensor& gammas) {
    Tensor out = channels;
    const std::size_t C = channels.dim(0);
    const std::size_t per = channels.size() / C;
    for (std::size_t c = 0; c < C; ++c) {
        const double gamma = gammas.size() == 1 ? gammas[0] : gammas[c];
        double* p = out.data() + c * per;
        for (std::size_t i = 0; i < per; ++i) p[i] *= gamma;
    }
    return out;
}

Tensor hqs_rhs(const Tensor& proj_adjoint_y, const Tensor& z, const Tensor& gammas) {
    return proj_adjoint_y + framelet::highpass_adjoint(scale_channels(z, gammas));
}

double hqs_objective(const Sinogram& y, const ScanGeometry& g, const Tensor& u, const Tensor& z, double lambda,
                     const Tensor& gammas) {
    Image img(g.n, g.pixel_size, u);
    Tensor residual = forward_project(img, g).data - y.data;
    double obj = 0.5 * dot(residual, residual);
    for (double v : z.span()) obj += lambda * std::abs(v);
    Tensor wu = framelet::highpass(u);
    const std::size_t per = g.n * g.n;
    for (std::size_t c = 0; c < framelet::kHighpassChannels; ++c) {
        const double gamma = gammas.size() == 1 ? gammas[0] : gammas[c];
        const double* wc = wu.data() + c * per;
        const double* zc = z.data() + c * per;
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = wc[i] - zc[i];
            acc += d * d;
        }
        obj += 0.5 * gamma * acc;
    }
    return obj;
}

Image hqs_cg(const Sinogram& y, const ScanGeometry& g, const HqsParams& p, const HqsCallback& callback) {
    p.validate();
    require_sino_matches(y, g, "hqs_cg");

    Image u = fbp(y, g);
    Tensor z = framelet::highpass(u.data);
    const Tensor pt_y = back_project(y, g).data;

    for (std::size_t k = 0; k < p.K; ++k) {
        const auto [lambda, gamma] = schedule(p, k);
        (void)lambda;
        const Tensor gammas = Tensor::full({framelet::kHighpassChannels}, gamma);
        const NormalOp a(g, gammas);
        const Tensor rhs = hqs_rhs(pt_y, z, gammas);
        CgResult cg = cg_solve([&a](const Tensor& x) { return a.apply(x); }, rhs, u.data, p.L, p.cg_tol,
                               /*early_stop=*/p.cg_tol > 0.0);
        z = soft_threshold_channels(framelet::highpass(cg.x), layer_thresholds(p, k));

        Tensor diff = cg.x - u.data;
        const double rel = norm2(diff) / std::max(norm2(cg.x), 1e-300);
        u.data = std::move(cg.x);
        if (callback) callback(k, u.data, z);
        if (p.rel_tol > 0.0 && rel <= p.rel_tol) break;
    }
    return u;
}

} // namespace metainv
