#include "doctest.h"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "metainv/analytic.hpp"
#include "metainv/network.hpp"
#include "metainv/simulate.hpp"
#include "test_helpers.hpp"

using namespace metainv;
using namespace metainv::testing;

namespace {

MetaInvConfig tiny_config(std::size_t k_layers, std::size_t cg_iters) {
    MetaInvConfig cfg;
    cfg.hqs.K = k_layers;
    cfg.hqs.L = cg_iters;
    cfg.hqs.rel_tol = 0.0;
    cfg.depth_s = 3;
    cfg.width = 4;
    return cfg;
}

} // namespace

TEST_CASE("initializer weights: shapes, parameter count, validation") {
    InitializerWeights w = InitializerWeights::zeros(6, 6, 8);
    // conv(1->8) + 4x conv(8->8) + conv(8->1), PReLU after all but the last:
    // (80+8) + 4*(584+8) + 73 = 2529 per layer, unshared over 6 layers.
    CHECK(w.parameter_count() == 15174);
    InitializerWeights shared = InitializerWeights::zeros(6, 6, 8, true);
    CHECK(shared.parameter_count() == 2529);

    CHECK_NOTHROW(w.validate(6));
    CHECK_THROWS_AS(w.validate(5), std::invalid_argument);
    InitializerWeights broken = InitializerWeights::zeros(2, 4, 4);
    broken.layers[0][1].kernel = Tensor({4, 4, 5, 5});
    CHECK_THROWS_AS(broken.validate(2), std::invalid_argument);
}

TEST_CASE("initializer weights: random init is deterministic with a zero final conv") {
    InitializerWeights a = InitializerWeights::random(3, 4, 6, 42);
    InitializerWeights b = InitializerWeights::random(3, 4, 6, 42);
    auto pa = a.params();
    auto pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::memcmp(pa[i]->data(), pb[i]->data(), sizeof(double) * pa[i]->size()) == 0);
    for (const auto& layer : a.layers) {
        for (double v : layer.back().kernel.span()) CHECK(v == 0.0);
        for (double v : layer.back().bias.span()) CHECK(v == 0.0);
    }
    InitializerWeights c = InitializerWeights::random(3, 4, 6, 43);
    CHECK(max_abs_diff(a.layers[0][0].kernel, c.layers[0][0].kernel) > 0.0);
}

TEST_CASE("cg_init_forward: zero weights act as the identity") {
    Tape tape;
    Tensor u = random_tensor({12, 12}, 60);
    NodeId un = tape.constant(u);
    InitializerWeights w = InitializerWeights::zeros(1, 3, 4);
    std::vector<std::vector<NodeId>> ids;
    for (const ConvBlock& blk : w.layers[0]) {
        std::vector<NodeId> v{tape.param(blk.kernel), tape.param(blk.bias)};
        if (blk.slopes.size() > 0) v.push_back(tape.param(blk.slopes));
        ids.push_back(std::move(v));
    }
    NodeId out = cg_init_forward(tape, un, ids);
    CHECK(max_abs_diff(tape.value(out), u) == 0.0);
}

TEST_CASE("cg_init_forward: zero input propagates biases to a finite output") {
    Tape tape;
    NodeId un = tape.constant(Tensor({10, 10}));
    InitializerWeights w = InitializerWeights::random(1, 3, 4, 7);
    for (auto& blk : w.layers[0])
        for (double& v : blk.bias.span()) v = 0.05;
    std::vector<std::vector<NodeId>> ids;
    for (const ConvBlock& blk : w.layers[0]) {
        std::vector<NodeId> v{tape.param(blk.kernel), tape.param(blk.bias)};
        if (blk.slopes.size() > 0) v.push_back(tape.param(blk.slopes));
        ids.push_back(std::move(v));
    }
    NodeId out = cg_init_forward(tape, un, ids);
    CHECK(tape.value(out).all_finite());
    // The residual branch output is CNN(0), which the bias makes nonzero.
    double maxabs = 0.0;
    for (double v : tape.value(out).span()) maxabs = std::max(maxabs, std::abs(v));
    CHECK(maxabs > 0.0);
}

TEST_CASE("cg_init_forward: kernel gradients match finite differences") {
    Tensor u = random_tensor({8, 8}, 61);
    InitializerWeights w = InitializerWeights::random(1, 3, 4, 8);
    // Perturb the final conv away from zero so every path is active.
    for (double& v : w.layers[0].back().kernel.span()) v = 0.01;

    auto run = [&](bool as_params, std::vector<NodeId>* param_ids, Tape& tape) {
        std::vector<std::vector<NodeId>> ids;
        for (const ConvBlock& blk : w.layers[0]) {
            std::vector<NodeId> v;
            v.push_back(as_params ? tape.param(blk.kernel) : tape.constant(blk.kernel));
            v.push_back(as_params ? tape.param(blk.bias) : tape.constant(blk.bias));
            if (blk.slopes.size() > 0)
                v.push_back(as_params ? tape.param(blk.slopes) : tape.constant(blk.slopes));
            if (param_ids)
                for (NodeId id : v) param_ids->push_back(id);
            ids.push_back(std::move(v));
        }
        NodeId out = cg_init_forward(tape, tape.constant(u), ids);
        return tape.sum(tape.square(out));
    };

    Tape tape;
    std::vector<NodeId> param_ids;
    NodeId loss = run(true, &param_ids, tape);
    tape.backward(loss);

    auto eval = [&]() {
        Tape t;
        return t.value(run(false, nullptr, t))[0];
    };

    std::vector<Tensor*> tensors;
    for (ConvBlock& blk : w.layers[0]) {
        tensors.push_back(&blk.kernel);
        tensors.push_back(&blk.bias);
        if (blk.slopes.size() > 0) tensors.push_back(&blk.slopes);
    }
    REQUIRE(tensors.size() == param_ids.size());
    for (std::size_t p = 0; p < tensors.size(); ++p) {
        const Tensor& grad = tape.grad(param_ids[p]);
        for (std::size_t i = 0; i < tensors[p]->size(); ++i) {
            const double fd = central_diff(eval, (*tensors[p])[i]);
            if (std::abs(fd) < 1e-9 && std::abs(grad[i]) < 1e-9) continue;
            CHECK(rel_err(grad[i], fd) < 1e-4);
        }
    }
}

TEST_CASE("metainv_forward: zero weights reproduce truncated HQS bitwise") {
    const std::size_t n = 16;
    Image ph = random_phantom(n, 2);
    ScanGeometry g = make_geometry(Beam::Parallel, 10, 24, {n, 1.0});
    NoiseSpec ns;
    ns.i0 = 1e6;
    ns.seed = 3;
    Sinogram y = simulate_sinogram(ph, g, ns);

    MetaInvConfig cfg = tiny_config(3, 2);
    InitializerWeights zeros = InitializerWeights::zeros(3, cfg.depth_s, cfg.width);
    std::vector<Image> net = metainv_reconstruct(y, g, cfg, zeros);

    std::vector<Tensor> iterates;
    hqs_cg(y, g, cfg.hqs, [&](std::size_t, const Tensor& u, const Tensor&) { iterates.push_back(u); });
    REQUIRE(net.size() == iterates.size());
    for (std::size_t k = 0; k < net.size(); ++k)
        CHECK(std::memcmp(net[k].data.data(), iterates[k].data(), sizeof(double) * iterates[k].size()) == 0);
}

TEST_CASE("metainv_forward: zero sinogram and zero weights stay at zero") {
    const std::size_t n = 16;
    ScanGeometry g = make_geometry(Beam::Parallel, 8, 24, {n, 1.0});
    MetaInvConfig cfg = tiny_config(2, 2);
    std::vector<Image> out =
        metainv_reconstruct(Sinogram(8, 24), g, cfg, InitializerWeights::zeros(2, cfg.depth_s, cfg.width));
    for (const Image& img : out)
        for (double v : img.data.span()) CHECK(v == 0.0);
}

TEST_CASE("metainv_forward: K=1, L=0 collapses to the CNN warm start of the FBP image") {
    const std::size_t n = 16;
    Image ph = random_phantom(n, 6);
    ScanGeometry g = make_geometry(Beam::Fan, 12, 24, {n, 1.0});
    Sinogram y = forward_project(ph, g);

    MetaInvConfig cfg = tiny_config(1, 0);
    InitializerWeights w = InitializerWeights::random(1, cfg.depth_s, cfg.width, 11);
    for (double& v : w.layers[0].back().kernel.span()) v = 0.02;
    std::vector<Image> out = metainv_reconstruct(y, g, cfg, w);

    // Oracle: run the initializer alone on the FBP image.
    Tape tape;
    std::vector<std::vector<NodeId>> ids;
    for (const ConvBlock& blk : w.layers[0]) {
        std::vector<NodeId> v{tape.constant(blk.kernel), tape.constant(blk.bias)};
        if (blk.slopes.size() > 0) v.push_back(tape.constant(blk.slopes));
        ids.push_back(std::move(v));
    }
    NodeId want = cg_init_forward(tape, tape.constant(fbp(y, g).data), ids);
    CHECK(std::memcmp(out[0].data.data(), tape.value(want).data(), sizeof(double) * out[0].data.size()) == 0);
}

TEST_CASE("loss: perfect outputs give zero, unit-norm error gives mu1") {
    const std::size_t n = 16;
    Tensor gt = random_phantom(n, 12).data;

    Tape tape;
    NodeId gt_node = tape.constant(gt);
    NodeId perfect = tape.constant(gt);
    NodeId loss = metainv_loss(tape, {perfect, perfect}, gt_node, 1.1, 1.0);
    CHECK(tape.value(loss)[0] == doctest::Approx(0.0).epsilon(1e-12));

    // Unit-norm perturbation, mu2 = 0: loss is exactly mu1.
    Tensor direction = random_tensor({n, n}, 70);
    const double scale = 1.0 / norm2(direction);
    Tensor perturbed = gt;
    for (std::size_t i = 0; i < perturbed.size(); ++i) perturbed[i] += scale * direction[i];
    Tape tape2;
    NodeId loss2 = metainv_loss(tape2, {tape2.constant(perturbed)}, tape2.constant(gt), 1.1, 0.0);
    CHECK(tape2.value(loss2)[0] == doctest::Approx(1.1).epsilon(1e-9));
}

TEST_CASE("loss: nonnegative, zero only at ground truth") {
    const std::size_t n = 16;
    Tensor gt = random_phantom(n, 13).data;
    Tensor off = gt;
    off[5] += 0.05;
    Tape tape;
    NodeId loss = metainv_loss(tape, {tape.constant(off)}, tape.constant(gt), 1.1, 1.0);
    CHECK(tape.value(loss)[0] > 0.0);
}

TEST_CASE("loss gradient matches finite differences on 8x8 inputs") {
    const std::size_t n = 8;
    Tensor gt = random_tensor({n, n}, 71, 0.0, 1.0);
    Tensor x = random_tensor({n, n}, 72, 0.0, 1.0);

    Tape tape;
    NodeId xn = tape.param(x);
    NodeId loss = metainv_loss(tape, {xn}, tape.constant(gt), 1.1, 1.0);
    tape.backward(loss);

    auto eval = [&]() {
        Tape t;
        return t.value(metainv_loss(t, {t.constant(x)}, t.constant(gt), 1.1, 1.0))[0];
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double fd = central_diff(eval, x[i]);
        CHECK(rel_err(tape.grad(xn)[i], fd) < 1e-4);
    }
}

TEST_CASE("adam: zero gradients from a fresh state leave weights unchanged") {
    Tensor w0({3}, {1.0, -2.0, 0.5});
    Tensor w = w0;
    AdamState st;
    std::vector<Tensor*> params{&w};
    std::vector<Tensor> grads{Tensor({3})};
    adam_step(params, grads, st, AdamConfig{});
    CHECK(max_abs_diff(w, w0) == 0.0);

    // Accumulated moments decay by their beta factors under zero gradients.
    st.m[0] = Tensor({3}, {0.4, 0.4, 0.4});
    st.v[0] = Tensor({3}, {0.2, 0.2, 0.2});
    adam_step(params, grads, st, AdamConfig{});
    CHECK(st.m[0][0] == doctest::Approx(0.36));    // 0.9 * 0.4
    CHECK(st.v[0][0] == doctest::Approx(0.1998));  // 0.999 * 0.2
}

TEST_CASE("adam: first step matches the closed-form update") {
    const double g = 0.37, lr = 1e-3;
    Tensor w({1}, {2.0});
    AdamState st;
    std::vector<Tensor*> params{&w};
    std::vector<Tensor> grads{Tensor({1}, {g})};
    AdamConfig cfg;
    cfg.lr = lr;
    adam_step(params, grads, st, cfg);
    // Bias correction makes mhat = g, vhat = g^2 on step one.
    const double want = 2.0 - lr * g / (std::abs(g) + cfg.eps);
    CHECK(w[0] == doctest::Approx(want).epsilon(1e-12));
    CHECK(st.t == 1);
}

TEST_CASE("train: lr=0 leaves weights fixed and the loss log flat") {
    const std::size_t n = 16;
    ScanGeometry g = make_geometry(Beam::Parallel, 8, 24, {n, 1.0});
    std::vector<DatasetItem> data;
    for (std::uint64_t s = 0; s < 2; ++s) {
        NoiseSpec ns;
        ns.i0 = 1e6;
        ns.seed = s;
        data.push_back({random_phantom(n, s), g, ns});
    }
    MetaInvConfig cfg = tiny_config(2, 1);
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.epochs = 2;
    InitializerWeights w0 = InitializerWeights::random(2, cfg.depth_s, cfg.width, 5);
    TrainResult res = train(data, cfg, tc, w0);

    auto pa = res.weights.params();
    auto pb = w0.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::memcmp(pa[i]->data(), pb[i]->data(), sizeof(double) * pa[i]->size()) == 0);
    REQUIRE(res.epoch_loss.size() == 2);
    CHECK(res.epoch_loss[0] == res.epoch_loss[1]);
}

TEST_CASE("train: empty dataset is rejected") {
    MetaInvConfig cfg = tiny_config(1, 1);
    CHECK_THROWS_AS(train({}, cfg, TrainConfig{}, InitializerWeights::zeros(1, cfg.depth_s, cfg.width)),
                    std::invalid_argument);
}

TEST_CASE("train: bit-identical loss logs under a fixed seed") {
    const std::size_t n = 16;
    ScanGeometry g = make_geometry(Beam::Fan, 8, 24, {n, 1.0});
    std::vector<DatasetItem> data;
    NoiseSpec ns;
    ns.i0 = 1e6;
    ns.seed = 9;
    data.push_back({random_phantom(n, 1), g, ns});
    MetaInvConfig cfg = tiny_config(2, 1);
    TrainConfig tc;
    tc.epochs = 3;
    auto run = [&]() { return train(data, cfg, tc, InitializerWeights::random(2, cfg.depth_s, cfg.width, 1)); };
    TrainResult a = run();
    TrainResult b = run();
    REQUIRE(a.epoch_loss.size() == b.epoch_loss.size());
    for (std::size_t i = 0; i < a.epoch_loss.size(); ++i)
        CHECK(std::memcmp(&a.epoch_loss[i], &b.epoch_loss[i], sizeof(double)) == 0);
    auto pa = a.weights.params();
    auto pb = b.weights.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::memcmp(pa[i]->data(), pb[i]->data(), sizeof(double) * pa[i]->size()) == 0);
}

TEST_CASE("train: a few steps reduce the loss on a tiny problem") {
    const std::size_t n = 16;
    ScanGeometry g = make_geometry(Beam::Parallel, 10, 24, {n, 1.0});
    std::vector<DatasetItem> data;
    NoiseSpec ns;
    ns.i0 = 5e5;
    ns.seed = 4;
    data.push_back({random_phantom(n, 3), g, ns});
    MetaInvConfig cfg = tiny_config(2, 2);
    TrainConfig tc;
    tc.epochs = 8;
    tc.learning_rate = 2e-3;
    TrainResult res = train(data, cfg, tc, InitializerWeights::random(2, cfg.depth_s, cfg.width, 2));
    CHECK(res.epoch_loss.back() < res.epoch_loss.front());
}
