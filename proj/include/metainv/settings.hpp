#pragma once

#include "metainv/config.hpp"
#include "metainv/geometry.hpp"
#include "metainv/network.hpp"
#include "metainv/simulate.hpp"
#include "metainv/solvers.hpp"

namespace metainv {

/// geom.* keys: beam (parallel|fan), n, pixel_size, n_views, n_det,
/// det_pitch, src_to_center, det_to_center. n_det defaults to the paper
/// ratio 800*(n/512), clamped to at least 2.
ScanGeometry geometry_from_config(const Config& cfg);

/// hqs.* keys: lambda0, d_lambda, gamma0, d_gamma, gamma_floor,
/// lambda_floor, K, L, rel_tol, cg_tol, threshold_mode (ratio|direct).
HqsParams hqs_from_config(const Config& cfg);

/// net.* and loss.* keys on top of hqs.*: net.K (depth, default 6), net.S,
/// net.c, net.shared, loss.mu1, loss.mu2.
MetaInvConfig metainv_config_from_config(const Config& cfg);

/// train.* keys: lr, epochs, batch_size, beta1, beta2, eps, seed.
TrainConfig train_config_from_config(const Config& cfg);

/// noise.* keys: i0, sigma_e, seed, noiseless.
NoiseSpec noise_from_config(const Config& cfg);

} // namespace metainv
