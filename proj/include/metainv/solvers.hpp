#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "metainv/framelet.hpp"
#include "metainv/geometry.hpp"
#include "metainv/tensor.hpp"

namespace metainv {

/// Hyperparameter schedule and iteration controls shared by the plain
/// reconstructor and the unrolled network.
struct HqsParams {
    double lambda0 = 0.005;
    double d_lambda = 0.0008;
    double gamma0 = 0.01;
    double d_gamma = 0.02;
    std::size_t K = 200;  // outer iterations (network depth when unrolled)
    std::size_t L = 5;    // inner CG iterations per layer
    double rel_tol = 3e-4;      // outer relative-error stop; <= 0 disables
    double gamma_floor = 1e-4;  // the linear schedule goes nonpositive at k=1
    double lambda_floor = 1e-6;
    double cg_tol = 0.0;  // inner residual tolerance; 0 runs exactly L iterations

    // The soft threshold per layer: Ratio uses lambda_k/gamma_k, Direct
    // uses lambda_k itself.
    enum class ThresholdMode { Ratio, Direct };
    ThresholdMode threshold_mode = ThresholdMode::Ratio;

    void validate() const;
};

/// (lambda_k, gamma_k) with the floors applied.
std::pair<double, double> schedule(const HqsParams& p, std::size_t k);

/// Per-channel soft thresholds for layer k, broadcast to the 8 channels.
Tensor layer_thresholds(const HqsParams& p, std::size_t k);

/// Anisotropic soft threshold T_t(x) = sign(x) max(|x|-t, 0), per channel.
/// thresholds: [8] or scalar; all entries must be >= 0.
FrameCoeffs soft_threshold(const FrameCoeffs& c, const Tensor& thresholds);
Tensor soft_threshold_channels(const Tensor& channels, const Tensor& thresholds);

struct CgResult {
    Tensor x;
    std::vector<double> residual_norms;  // ||r|| before each executed iteration
    std::size_t iterations = 0;          // productive iterations executed
};

/// Conjugate gradient on a symmetric positive (semi)definite map. Stops
/// after max_iters iterations, or earlier when ||r|| <= tol*||b|| and
/// early_stop is set. With early_stop off it runs every iteration with the
/// vanished-direction guard, matching the unrolled tape arithmetic
/// bit for bit. Throws on non-finite scalars (broken operator).
CgResult cg_solve(const std::function<Tensor(const Tensor&)>& apply_a, const Tensor& b, const Tensor& x0,
                  std::size_t max_iters, double tol, bool early_stop = true);

/// Right-hand side P^T Y + W^T (gamma . z) of the image subproblem.
Tensor hqs_rhs(const Tensor& proj_adjoint_y, const Tensor& z, const Tensor& gammas);

/// Multiplies each of the 8 channels by its gamma.
Tensor scale_channels(const Tensor& channels, const Tensor& gammas);

/// Split objective value
///   1/2 ||Pu-Y||^2 + lambda ||z||_1 + 1/2 sum_i gamma_i ||W_i u - z_i||^2.
double hqs_objective(const Sinogram& y, const ScanGeometry& g, const Tensor& u, const Tensor& z, double lambda,
                     const Tensor& gammas);

using HqsCallback = std::function<void(std::size_t k, const Tensor& u, const Tensor& z)>;

/// Plain half-quadratic-splitting reconstruction: FBP initialization, then
/// alternating CG image solves (warm-started from the previous iterate) and
/// per-channel soft thresholding, until the relative change drops below
/// rel_tol or K outer iterations ran.
Image hqs_cg(const Sinogram& y, const ScanGeometry& g, const HqsParams& p, const HqsCallback& callback = {});

} // namespace metainv
