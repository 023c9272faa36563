#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "metainv/tensor.hpp"

namespace metainv {

/// Abstract linear map with a matched adjoint. Registered on the tape as a
/// differentiable primitive whose VJP is the adjoint.
class LinearOperator {
  public:
    virtual ~LinearOperator() = default;
    virtual Shape domain_shape() const = 0;
    virtual Shape range_shape() const = 0;
    virtual Tensor apply(const Tensor& x) const = 0;
    virtual Tensor adjoint(const Tensor& y) const = 0;
};

namespace kernels {

// Elementary kernels shared between the tape and the tape-free solvers so
// both paths run the same floating-point sequence.

inline double soft_threshold_value(double x, double t) {
    const double m = std::abs(x) - t;
    if (m <= 0.0) return 0.0;
    return x > 0.0 ? m : -m;
}

inline double dot_seq(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// out[i] = y[i] + alpha * x[i]; out may alias y.
inline void axpy_seq(double* out, const double* y, double alpha, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = y[i] + alpha * x[i];
}

// alpha = num/den with the CG convention that a vanished denominator means
// a vanished search direction, so no update.
inline double guarded_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

} // namespace kernels

using NodeId = std::int32_t;

/// Reverse-mode differentiation tape over the fixed op set the unrolled
/// network composes. Append-only; rebuilt for every forward pass. Nodes
/// only ever reference earlier nodes, so the graph is acyclic by
/// construction. Single-writer: confine each Tape to one thread.
class Tape {
  public:
    /// Leaf that never receives a gradient.
    NodeId constant(Tensor v);
    /// Trainable leaf; after backward() its gradient has the value's shape.
    NodeId param(Tensor v);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    /// Gradient accumulated by the last backward(); zero tensor if the node
    /// was not reached.
    const Tensor& grad(NodeId id);
    bool requires_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    NodeId record_linear(std::shared_ptr<const LinearOperator> op, NodeId x);
    NodeId conv2d(NodeId x, NodeId kernel, NodeId bias);
    NodeId prelu(NodeId x, NodeId slopes);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId scale(NodeId x, double c);
    NodeId add_scalar(NodeId x, double c);
    NodeId square(NodeId x);
    NodeId sqrt(NodeId x);
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);
    NodeId reshape(NodeId x, Shape shape);

    /// Scalar nodes ([1]-shaped) for the unrolled CG arithmetic.
    NodeId dot(NodeId a, NodeId b);
    NodeId axpy(NodeId alpha, NodeId x, NodeId y);  // y + alpha*x
    NodeId scalar_div(NodeId num, NodeId den);      // guarded_div semantics

    /// Per-channel soft threshold on a [C,...] tensor; thresholds is [C] or
    /// a scalar broadcast over channels. Subgradient 0 inside the dead zone.
    NodeId soft_threshold(NodeId x, Tensor thresholds);

    /// Reverse accumulation from a scalar loss node.
    void backward(NodeId loss);

  private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        // Accumulates into parent gradients; null for leaves.
        std::function<void(Tape&)> vjp;
    };

    NodeId push(Tensor value, bool needs_grad, std::function<void(Tape&)> vjp);
    Tensor& grad_buf(NodeId id);
    void add_grad(NodeId id, const Tensor& g);

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

namespace detail {

// Convolution kernels used by Tape::conv2d; exposed for direct testing.
// x: [Cin,H,W], k: [Cout,Cin,kh,kw] (odd kh/kw), b: [Cout]; zero padding
// keeps the spatial size.
Tensor conv2d_forward(const Tensor& x, const Tensor& k, const Tensor& b);
Tensor conv2d_vjp_input(const Tensor& g, const Tensor& k, const Shape& x_shape);
Tensor conv2d_vjp_kernel(const Tensor& g, const Tensor& x, const Shape& k_shape);
Tensor conv2d_vjp_bias(const Tensor& g);

} // namespace detail

} // namespace metainv
