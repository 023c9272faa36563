#include "metainv/settings.hpp"

#include <algorithm>

namespace metainv {

ScanGeometry geometry_from_config(const Config& cfg) {
    const std::string beam_str = cfg.get_string("geom.beam", "parallel");
    Beam beam;
    if (beam_str == "parallel")
        beam = Beam::Parallel;
    else if (beam_str == "fan")
        beam = Beam::Fan;
    else
        throw ConfigError("geom.beam must be 'parallel' or 'fan', got '" + beam_str + "'");

    ImageSpec spec;
    spec.n = cfg.get_size("geom.n", 64);
    spec.pixel_size = cfg.get_double("geom.pixel_size", 1.0);
    const std::size_t n_views = cfg.get_size("geom.n_views", 60);
    const std::size_t default_det = std::max<std::size_t>(2, (800 * spec.n) / 512);
    const std::size_t n_det = cfg.get_size("geom.n_det", default_det);

    FanDistances dist;
    if (auto v = cfg.get_optional_double("geom.src_to_center")) dist.src_to_center = *v;
    if (auto v = cfg.get_optional_double("geom.det_to_center")) dist.det_to_center = *v;
    std::optional<double> pitch;
    if (auto v = cfg.get_optional_double("geom.det_pitch")) pitch = *v;

    return make_geometry(beam, n_views, n_det, spec, dist, pitch);
}

HqsParams hqs_from_config(const Config& cfg) {
    HqsParams p;
    p.lambda0 = cfg.get_double("hqs.lambda0", p.lambda0);
    p.d_lambda = cfg.get_double("hqs.d_lambda", p.d_lambda);
    p.gamma0 = cfg.get_double("hqs.gamma0", p.gamma0);
    p.d_gamma = cfg.get_double("hqs.d_gamma", p.d_gamma);
    p.gamma_floor = cfg.get_double("hqs.gamma_floor", p.gamma_floor);
    p.lambda_floor = cfg.get_double("hqs.lambda_floor", p.lambda_floor);
    p.K = cfg.get_size("hqs.K", p.K);
    p.L = cfg.get_size("hqs.L", p.L);
    p.rel_tol = cfg.get_double("hqs.rel_tol", p.rel_tol);
    p.cg_tol = cfg.get_double("hqs.cg_tol", p.cg_tol);
    const std::string mode = cfg.get_string("hqs.threshold_mode", "ratio");
    if (mode == "ratio")
        p.threshold_mode = HqsParams::ThresholdMode::Ratio;
    else if (mode == "direct")
        p.threshold_mode = HqsParams::ThresholdMode::Direct;
    else
        throw ConfigError("hqs.threshold_mode must be 'ratio' or 'direct', got '" + mode + "'");
    p.validate();
    return p;
}

MetaInvConfig metainv_config_from_config(const Config& cfg) {
    MetaInvConfig mc;
    mc.hqs = hqs_from_config(cfg);
    mc.hqs.K = cfg.get_size("net.K", 6);
    mc.hqs.rel_tol = 0.0;  // the unrolled network has a fixed depth
    mc.depth_s = cfg.get_size("net.S", mc.depth_s);
    mc.width = cfg.get_size("net.c", mc.width);
    mc.shared = cfg.get_bool("net.shared", mc.shared);
    mc.mu1 = cfg.get_double("loss.mu1", mc.mu1);
    mc.mu2 = cfg.get_double("loss.mu2", mc.mu2);
    mc.validate();
    return mc;
}

TrainConfig train_config_from_config(const Config& cfg) {
    TrainConfig tc;
    tc.learning_rate = cfg.get_double("train.lr", tc.learning_rate);
    tc.epochs = cfg.get_size("train.epochs", tc.epochs);
    tc.batch_size = cfg.get_size("train.batch_size", tc.batch_size);
    tc.beta1 = cfg.get_double("train.beta1", tc.beta1);
    tc.beta2 = cfg.get_double("train.beta2", tc.beta2);
    tc.eps = cfg.get_double("train.eps", tc.eps);
    tc.seed = cfg.get_u64("train.seed", tc.seed);
    tc.validate();
    return tc;
}

NoiseSpec noise_from_config(const Config& cfg) {
    NoiseSpec ns;
    ns.i0 = cfg.get_double("noise.i0", ns.i0);
    ns.sigma_e = cfg.get_double("noise.sigma_e", ns.sigma_e);
    ns.seed = cfg.get_u64("noise.seed", ns.seed);
    ns.noiseless = cfg.get_bool("noise.noiseless", ns.noiseless);
    ns.validate();
    return ns;
}

} // namespace metainv
