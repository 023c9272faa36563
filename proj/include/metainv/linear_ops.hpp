#pragma once

#include <memory>
#include <utility>

#include "metainv/framelet.hpp"
#include "metainv/geometry.hpp"
#include "metainv/tape.hpp"

namespace metainv {

class IdentityOp final : public LinearOperator {
  public:
    explicit IdentityOp(Shape shape) : shape_(std::move(shape)) {}
    Shape domain_shape() const override { return shape_; }
    Shape range_shape() const override { return shape_; }
    Tensor apply(const Tensor& x) const override { return x; }
    Tensor adjoint(const Tensor& y) const override { return y; }

  private:
    Shape shape_;
};

/// Dense matrix as a LinearOperator (tests and oracles).
class MatrixOp final : public LinearOperator {
  public:
    /// mat: [rows, cols]; maps [cols] -> [rows].
    explicit MatrixOp(Tensor mat);
    Shape domain_shape() const override { return {cols_}; }
    Shape range_shape() const override { return {rows_}; }
    Tensor apply(const Tensor& x) const override;
    Tensor adjoint(const Tensor& y) const override;
    const Tensor& matrix() const { return mat_; }

  private:
    Tensor mat_;
    std::size_t rows_, cols_;
};

/// Forward projector P: [n,n] image tensor -> [n_views,n_det] sinogram
/// tensor; adjoint is the matched backprojector.
class ProjectorOp final : public LinearOperator {
  public:
    explicit ProjectorOp(ScanGeometry g) : g_(std::move(g)) {}
    Shape domain_shape() const override { return {g_.n, g_.n}; }
    Shape range_shape() const override { return {g_.n_views(), g_.n_det}; }
    Tensor apply(const Tensor& x) const override;
    Tensor adjoint(const Tensor& y) const override;
    const ScanGeometry& geometry() const { return g_; }

  private:
    ScanGeometry g_;
};

/// Highpass frame transform W: [n,n] -> [8,n,n].
class FrameOp final : public LinearOperator {
  public:
    explicit FrameOp(std::size_t n) : n_(n) {}
    Shape domain_shape() const override { return {n_, n_}; }
    Shape range_shape() const override { return {framelet::kHighpassChannels, n_, n_}; }
    Tensor apply(const Tensor& x) const override { return framelet::highpass(x); }
    Tensor adjoint(const Tensor& y) const override { return framelet::highpass_adjoint(y); }

  private:
    std::size_t n_;
};

/// Swaps apply/adjoint of a base operator (e.g. W^T on the tape).
class AdjointOp final : public LinearOperator {
  public:
    explicit AdjointOp(std::shared_ptr<const LinearOperator> base) : base_(std::move(base)) {}
    Shape domain_shape() const override { return base_->range_shape(); }
    Shape range_shape() const override { return base_->domain_shape(); }
    Tensor apply(const Tensor& x) const override { return base_->adjoint(x); }
    Tensor adjoint(const Tensor& y) const override { return base_->apply(y); }

  private:
    std::shared_ptr<const LinearOperator> base_;
};

/// Self-adjoint system operator of the quadratic subproblem,
///   A u = P^T P u + sum_i gamma_i W_i^T W_i u.
/// Both the unrolled network and the plain solver apply exactly this code
/// path, which keeps the two bit-identical.
class NormalOp final : public LinearOperator {
  public:
    NormalOp(ScanGeometry g, Tensor channel_gammas);
    Shape domain_shape() const override { return {g_.n, g_.n}; }
    Shape range_shape() const override { return {g_.n, g_.n}; }
    Tensor apply(const Tensor& x) const override;
    Tensor adjoint(const Tensor& y) const override { return apply(y); }

  private:
    ScanGeometry g_;
    Tensor gammas_;  // [8]
};

/// Valid-region Gaussian window used by the structural-similarity loss:
/// [H,W] -> [H-w+1, W-w+1] correlation with a normalized Gaussian.
class GaussianWindowOp final : public LinearOperator {
  public:
    GaussianWindowOp(std::size_t rows, std::size_t cols, std::size_t window, double sigma);
    Shape domain_shape() const override { return {rows_, cols_}; }
    Shape range_shape() const override { return {rows_ - win_ + 1, cols_ - win_ + 1}; }
    Tensor apply(const Tensor& x) const override;
    Tensor adjoint(const Tensor& y) const override;
    const std::vector<double>& taps() const { return taps_; }

  private:
    std::size_t rows_, cols_, win_;
    std::vector<double> taps_;  // separable 1-D profile, sums to 1 jointly
};

} // namespace metainv
