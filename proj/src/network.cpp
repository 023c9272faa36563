#include "metainv/network.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "metainv/analytic.hpp"
#include "metainv/linear_ops.hpp"
#include "metainv/rng.hpp"

namespace metainv {

namespace {

std::size_t conv_in_channels(std::size_t s, std::size_t S, std::size_t width) {
    (void)S;
    return s == 0 ? 1 : width;
}

std::size_t conv_out_channels(std::size_t s, std::size_t S, std::size_t width) {
    return s + 1 == S ? 1 : width;
}

std::size_t fitting_window(std::size_t rows, std::size_t cols) {
    std::size_t w = std::min<std::size_t>(11, std::min(rows, cols));
    if (w % 2 == 0) --w;
    return w;
}

double tensor_range(const Tensor& t) {
    double lo = t[0], hi = t[0];
    for (double v : t.span()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi - lo;
}

// Differentiable single-scale SSIM mean over the valid window region.
NodeId ssim_on_tape(Tape& t, NodeId x, NodeId y, double peak) {
    const Shape sh = t.value(x).shape();
    const std::size_t rows = sh[0], cols = sh[1];
    auto g = std::make_shared<GaussianWindowOp>(rows, cols, fitting_window(rows, cols), 1.5);
    const double c1 = 0.01 * peak * 0.01 * peak;
    const double c2 = 0.03 * peak * 0.03 * peak;

    NodeId mx = t.record_linear(g, x);
    NodeId my = t.record_linear(g, y);
    NodeId exx = t.record_linear(g, t.mul(x, x));
    NodeId eyy = t.record_linear(g, t.mul(y, y));
    NodeId exy = t.record_linear(g, t.mul(x, y));

    NodeId mx2 = t.mul(mx, mx);
    NodeId my2 = t.mul(my, my);
    NodeId sx = t.sub(exx, mx2);
    NodeId sy = t.sub(eyy, my2);
    NodeId sxy = t.sub(exy, t.mul(mx, my));

    NodeId num = t.mul(t.add_scalar(t.scale(t.mul(mx, my), 2.0), c1), t.add_scalar(t.scale(sxy, 2.0), c2));
    NodeId den = t.mul(t.add_scalar(t.add(mx2, my2), c1), t.add_scalar(t.add(sx, sy), c2));
    return t.mean(t.div(num, den));
}

// Unrolled CG with a static graph: exactly max_iters iterations with the
// vanished-direction guard, mirroring cg_solve without early stop.
NodeId cg_on_tape(Tape& t, const std::shared_ptr<const LinearOperator>& a, NodeId b, NodeId x0,
                  std::size_t max_iters) {
    NodeId x = x0;
    NodeId r = t.sub(b, t.record_linear(a, x));
    NodeId p = r;
    NodeId rs = t.dot(r, r);
    for (std::size_t it = 0; it < max_iters; ++it) {
        NodeId ap = t.record_linear(a, p);
        NodeId p_ap = t.dot(p, ap);
        NodeId alpha = t.scalar_div(rs, p_ap);
        x = t.axpy(alpha, p, x);
        r = t.axpy(t.scale(alpha, -1.0), ap, r);
        NodeId rs_new = t.dot(r, r);
        NodeId beta = t.scalar_div(rs_new, rs);
        p = t.axpy(beta, p, r);
        rs = rs_new;
    }
    return x;
}

std::vector<ConvBlock> make_blocks(std::size_t depth_s, std::size_t width) {
    std::vector<ConvBlock> blocks(depth_s);
    for (std::size_t s = 0; s < depth_s; ++s) {
        const std::size_t cin = conv_in_channels(s, depth_s, width);
        const std::size_t cout = conv_out_channels(s, depth_s, width);
        blocks[s].kernel = Tensor({cout, cin, 3, 3});
        blocks[s].bias = Tensor({cout});
        if (s + 1 < depth_s) blocks[s].slopes = Tensor({cout});
    }
    return blocks;
}

} // namespace

InitializerWeights InitializerWeights::zeros(std::size_t k_layers, std::size_t depth_s, std::size_t width,
                                             bool shared) {
    if (depth_s < 1) throw std::invalid_argument("InitializerWeights: depth S must be >= 1");
    InitializerWeights w;
    w.depth_s = depth_s;
    w.width = width;
    w.shared = shared;
    w.layers.assign(shared ? 1 : k_layers, make_blocks(depth_s, width));
    return w;
}

InitializerWeights InitializerWeights::random(std::size_t k_layers, std::size_t depth_s, std::size_t width,
                                              std::uint64_t seed, bool shared) {
    InitializerWeights w = zeros(k_layers, depth_s, width, shared);
    std::uint64_t stream = 0;
    for (auto& layer : w.layers) {
        for (std::size_t s = 0; s < layer.size(); ++s) {
            ConvBlock& blk = layer[s];
            if (s + 1 < layer.size()) {
                CounterRng rng(seed, stream);
                const double bound = 1.0 / std::sqrt(static_cast<double>(blk.kernel.dim(1) * 9));
                for (double& v : blk.kernel.span()) v = rng.uniform(-bound, bound);
                for (double& v : blk.slopes.span()) v = 0.25;
            }
            // biases stay zero; the final conv stays fully zero so the
            // untrained network reproduces the plain reconstructor.
            ++stream;
        }
    }
    return w;
}

std::size_t InitializerWeights::parameter_count() const {
    std::size_t count = 0;
    for (const auto& layer : layers)
        for (const ConvBlock& blk : layer)
            count += blk.kernel.size() + blk.bias.size() + blk.slopes.size();
    return count;
}

std::vector<Tensor*> InitializerWeights::params() {
    std::vector<Tensor*> out;
    for (auto& layer : layers)
        for (ConvBlock& blk : layer) {
            out.push_back(&blk.kernel);
            out.push_back(&blk.bias);
            if (blk.slopes.size() > 0) out.push_back(&blk.slopes);
        }
    return out;
}

std::vector<const Tensor*> InitializerWeights::params() const {
    std::vector<const Tensor*> out;
    for (const auto& layer : layers)
        for (const ConvBlock& blk : layer) {
            out.push_back(&blk.kernel);
            out.push_back(&blk.bias);
            if (blk.slopes.size() > 0) out.push_back(&blk.slopes);
        }
    return out;
}

void InitializerWeights::validate(std::size_t k_layers) const {
    const std::size_t expect = shared ? 1 : k_layers;
    if (layers.size() != expect)
        throw std::invalid_argument("InitializerWeights: expected " + std::to_string(expect) + " layer blocks, got " +
                                    std::to_string(layers.size()));
    for (const auto& layer : layers) {
        if (layer.size() != depth_s) throw std::invalid_argument("InitializerWeights: conv count != S");
        for (std::size_t s = 0; s < layer.size(); ++s) {
            const std::size_t cin = conv_in_channels(s, depth_s, width);
            const std::size_t cout = conv_out_channels(s, depth_s, width);
            const ConvBlock& blk = layer[s];
            if (blk.kernel.rank() != 4 || blk.kernel.dim(0) != cout || blk.kernel.dim(1) != cin ||
                blk.kernel.dim(2) != 3 || blk.kernel.dim(3) != 3)
                throw std::invalid_argument("InitializerWeights: bad kernel shape at conv " + std::to_string(s));
            if (blk.bias.size() != cout) throw std::invalid_argument("InitializerWeights: bad bias shape");
            const std::size_t want_slopes = s + 1 < layer.size() ? cout : 0;
            if (blk.slopes.size() != want_slopes)
                throw std::invalid_argument("InitializerWeights: bad PReLU slope shape");
        }
    }
}

void MetaInvConfig::validate() const {
    hqs.validate();
    if (mu1 < 0.0 || mu2 < 0.0) throw std::invalid_argument("MetaInvConfig: mu1, mu2 must be >= 0");
    if (depth_s < 1) throw std::invalid_argument("MetaInvConfig: S must be >= 1");
    if (width < 1) throw std::invalid_argument("MetaInvConfig: width must be >= 1");
}

NodeId cg_init_forward(Tape& tape, NodeId u, const std::vector<std::vector<NodeId>>& block_params) {
    const Shape sh = tape.value(u).shape();
    NodeId x = tape.reshape(u, {1, sh[0], sh[1]});
    for (std::size_t s = 0; s < block_params.size(); ++s) {
        const auto& ids = block_params[s];
        x = tape.conv2d(x, ids[0], ids[1]);
        if (ids.size() > 2) x = tape.prelu(x, ids[2]);
    }
    x = tape.reshape(x, sh);
    return tape.add(u, x);
}

ForwardPass metainv_forward(Tape& tape, const Sinogram& y, const ScanGeometry& g, const MetaInvConfig& cfg,
                            const InitializerWeights& weights) {
    cfg.validate();
    weights.validate(cfg.hqs.K);
    require_sino_matches(y, g, "metainv_forward");

    ForwardPass pass;

    // Register every trainable tensor once; shared layers reuse the ids so
    // gradients accumulate across the unrolled depth.
    std::vector<std::vector<std::vector<NodeId>>> layer_ids(weights.layers.size());
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        for (const ConvBlock& blk : weights.layers[l]) {
            std::vector<NodeId> ids;
            ids.push_back(tape.param(blk.kernel));
            pass.param_ids.push_back(ids.back());
            ids.push_back(tape.param(blk.bias));
            pass.param_ids.push_back(ids.back());
            if (blk.slopes.size() > 0) {
                ids.push_back(tape.param(blk.slopes));
                pass.param_ids.push_back(ids.back());
            }
            layer_ids[l].push_back(std::move(ids));
        }
    }

    const Image u0 = fbp(y, g);
    NodeId u = tape.constant(u0.data);
    NodeId z = tape.constant(framelet::highpass(u0.data));
    NodeId pt_y = tape.constant(back_project(y, g).data);
    auto w_op = std::make_shared<FrameOp>(g.n);
    auto wt_op = std::make_shared<AdjointOp>(w_op);
    const std::size_t npix = g.n * g.n;

    for (std::size_t k = 0; k < cfg.hqs.K; ++k) {
        const auto [lambda, gamma] = schedule(cfg.hqs, k);
        (void)lambda;
        const Tensor gammas = Tensor::full({framelet::kHighpassChannels}, gamma);
        Tensor gamma_planes({framelet::kHighpassChannels, g.n, g.n});
        for (std::size_t c = 0; c < framelet::kHighpassChannels; ++c)
            for (std::size_t i = 0; i < npix; ++i) gamma_planes[c * npix + i] = gammas[c];

        NodeId x0 = cg_init_forward(tape, u, layer_ids[weights.shared ? 0 : k]);
        NodeId rhs = tape.add(pt_y, tape.record_linear(wt_op, tape.mul(z, tape.constant(gamma_planes))));
        auto a_op = std::make_shared<NormalOp>(g, gammas);
        u = cg_on_tape(tape, a_op, rhs, x0, cfg.hqs.L);
        z = tape.soft_threshold(tape.record_linear(w_op, u), layer_thresholds(cfg.hqs, k));

        if (!tape.value(u).all_finite())
            throw std::runtime_error("metainv_forward: non-finite reconstruction at layer " + std::to_string(k + 1));
        pass.layer_outputs.push_back(u);
    }
    return pass;
}

NodeId metainv_loss(Tape& tape, const std::vector<NodeId>& outputs, NodeId ground_truth, double mu1, double mu2) {
    if (outputs.empty()) throw std::invalid_argument("metainv_loss: no layer outputs");
    double peak = tensor_range(tape.value(ground_truth));
    if (peak <= 0.0) peak = 1.0;

    NodeId loss = -1;
    NodeId one = tape.constant(Tensor::scalar(1.0));
    for (NodeId u : outputs) {
        NodeId l2 = tape.sqrt(tape.sum(tape.square(tape.sub(u, ground_truth))));
        NodeId term = tape.scale(l2, mu1);
        if (mu2 != 0.0) {
            NodeId ssim_loss = tape.sub(one, ssim_on_tape(tape, u, ground_truth, peak));
            term = tape.add(term, tape.scale(ssim_loss, mu2));
        }
        loss = loss < 0 ? term : tape.add(loss, term);
    }
    return loss;
}

std::vector<Image> metainv_reconstruct(const Sinogram& y, const ScanGeometry& g, const MetaInvConfig& cfg,
                                       const InitializerWeights& weights) {
    Tape tape;
    ForwardPass pass = metainv_forward(tape, y, g, cfg, weights);
    std::vector<Image> out;
    out.reserve(pass.layer_outputs.size());
    for (NodeId id : pass.layer_outputs) out.emplace_back(g.n, g.pixel_size, tape.value(id));
    return out;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads size mismatch");
    if (state.m.empty()) {
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const Tensor* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = *params[i];
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

void TrainConfig::validate() const {
    if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
}

TrainResult train(const std::vector<DatasetItem>& dataset, const MetaInvConfig& cfg, const TrainConfig& tc,
                  InitializerWeights initial) {
    cfg.validate();
    tc.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    initial.validate(cfg.hqs.K);

    // Sinograms are deterministic per noise seed; simulate once.
    std::vector<Sinogram> sinograms;
    sinograms.reserve(dataset.size());
    for (const DatasetItem& item : dataset) sinograms.push_back(simulate_sinogram(item.phantom, item.geom, item.noise));

    TrainResult result;
    result.weights = std::move(initial);
    std::vector<Tensor*> params = result.weights.params();
    AdamState adam;
    AdamConfig adam_cfg{tc.learning_rate, tc.beta1, tc.beta2, tc.eps};

    std::vector<Tensor> batch_grads;
    batch_grads.reserve(params.size());
    for (Tensor* p : params) batch_grads.emplace_back(p->shape());
    std::size_t in_batch = 0;

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t s = 0; s < dataset.size(); ++s) {
            Tape tape;
            ForwardPass pass = metainv_forward(tape, sinograms[s], dataset[s].geom, cfg, result.weights);
            NodeId gt = tape.constant(dataset[s].phantom.data);
            NodeId loss = metainv_loss(tape, pass.layer_outputs, gt, cfg.mu1, cfg.mu2);
            const double loss_value = tape.value(loss)[0];
            if (!std::isfinite(loss_value))
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                         std::to_string(s));
            epoch_loss += loss_value;
            tape.backward(loss);
            for (std::size_t i = 0; i < params.size(); ++i) batch_grads[i] += tape.grad(pass.param_ids[i]);
            ++in_batch;
            if (in_batch == tc.batch_size || s + 1 == dataset.size()) {
                adam_step(params, batch_grads, adam, adam_cfg);
                for (Tensor& g : batch_grads) g = Tensor(g.shape());
                in_batch = 0;
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    return result;
}

} // namespace metainv
