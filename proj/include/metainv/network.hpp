#pragma once

#include <cstdint>
#include <vector>

#include "metainv/simulate.hpp"
#include "metainv/solvers.hpp"
#include "metainv/tape.hpp"

namespace metainv {

/// One conv block of the CG initializer: 3x3 kernel, per-channel bias, and
/// (except after the last conv) per-channel PReLU slopes.
struct ConvBlock {
    Tensor kernel;  // [c_out, c_in, 3, 3]
    Tensor bias;    // [c_out]
    Tensor slopes;  // [c_out]; empty for the final conv
};

/// Weights of the per-layer vanilla-CNN CG initializers. The channel plan
/// is 1 -> c -> ... -> c -> 1 over S convolutions. Layers are unshared by
/// default; with shared=true a single block set serves every layer.
struct InitializerWeights {
    std::size_t depth_s = 6;
    std::size_t width = 8;
    bool shared = false;
    std::vector<std::vector<ConvBlock>> layers;  // K entries (1 if shared)

    static InitializerWeights zeros(std::size_t k_layers, std::size_t depth_s, std::size_t width,
                                    bool shared = false);
    /// Fan-in-scaled uniform kernels, zero biases, 0.25 PReLU slopes; the
    /// final conv of every layer is zero so training starts at the plain
    /// reconstructor.
    static InitializerWeights random(std::size_t k_layers, std::size_t depth_s, std::size_t width,
                                     std::uint64_t seed, bool shared = false);

    std::size_t parameter_count() const;
    /// All trainable tensors in serialization order.
    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;

    void validate(std::size_t k_layers) const;
};

struct MetaInvConfig {
    HqsParams hqs;  // hqs.K is the unrolled depth
    std::size_t depth_s = 6;
    std::size_t width = 8;
    bool shared = false;
    double mu1 = 1.1;  // l2 loss discount
    double mu2 = 1.0;  // ssim loss discount

    void validate() const;
};

/// Residual CNN warm start u + CNN(u) recorded on the tape.
/// blocks_params: tape ids of (kernel, bias, slopes) per conv, in
/// InitializerWeights order.
NodeId cg_init_forward(Tape& tape, NodeId u, const std::vector<std::vector<NodeId>>& block_params);

struct ForwardPass {
    std::vector<NodeId> layer_outputs;  // K image nodes u^{1,L}..u^{K,L}
    std::vector<NodeId> param_ids;      // aligned with InitializerWeights::params()
};

/// Unrolled reconstruction: FBP start, then per layer the CNN warm start,
/// exactly L tape-recorded CG iterations (no early stop, static graph) and
/// the per-channel soft threshold. Throws on non-finite layer values.
ForwardPass metainv_forward(Tape& tape, const Sinogram& y, const ScanGeometry& g, const MetaInvConfig& cfg,
                            const InitializerWeights& weights);

/// Training objective sum_k mu1 ||u_k - gt||_2 + mu2 (1 - SSIM(u_k, gt)).
NodeId metainv_loss(Tape& tape, const std::vector<NodeId>& outputs, NodeId ground_truth, double mu1, double mu2);

/// Inference convenience: values of all K layer outputs.
std::vector<Image> metainv_reconstruct(const Sinogram& y, const ScanGeometry& g, const MetaInvConfig& cfg,
                                       const InitializerWeights& weights);

// ---- optimizer ----

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
};

/// Standard bias-corrected update; params and grads are index-aligned.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

// ---- training ----

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 1;
    std::size_t batch_size = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DatasetItem {
    Image phantom;
    ScanGeometry geom;
    NoiseSpec noise;
};

struct TrainResult {
    InitializerWeights weights;
    std::vector<double> epoch_loss;  // mean per-sample loss per epoch
};

/// End-to-end training: per sample simulate the sinogram, run the unrolled
/// forward pass, backpropagate, ADAM-update (gradients summed over the
/// batch in sample order). Deterministic given the seed.
TrainResult train(const std::vector<DatasetItem>& dataset, const MetaInvConfig& cfg, const TrainConfig& tc,
                  InitializerWeights initial);

} // namespace metainv
