#include "metainv/tape.hpp"

#include <stdexcept>

#include "metainv/parallel.hpp"

namespace metainv {

namespace detail {

namespace {

void check_conv_shapes(const Shape& xs, const Shape& ks, const Shape& bs) {
    if (xs.size() != 3 || ks.size() != 4 || bs.size() != 1)
        throw std::invalid_argument("conv2d: expected x[Cin,H,W], k[Cout,Cin,kh,kw], b[Cout]");
    if (ks[1] != xs[0]) throw std::invalid_argument("conv2d: channel mismatch");
    if (ks[0] != bs[0]) throw std::invalid_argument("conv2d: bias/kernel output channel mismatch");
    if (ks[2] % 2 == 0 || ks[3] % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
}

} // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& k, const Tensor& b) {
    check_conv_shapes(x.shape(), k.shape(), b.shape());
    const std::size_t cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
    const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
    Tensor out({cout, H, W});
    parallel_for(cout, [&](std::size_t co) {
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                double acc = b[co];
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    for (std::size_t u = 0; u < kh; ++u) {
                        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) - ph;
                        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t v = 0; v < kw; ++v) {
                            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) - pw;
                            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(W)) continue;
                            acc += k.data()[((co * cin + ci) * kh + u) * kw + v] *
                                   x.data()[(ci * H + static_cast<std::size_t>(ii)) * W + static_cast<std::size_t>(jj)];
                        }
                    }
                }
                out.data()[(co * H + i) * W + j] = acc;
            }
        }
    });
    return out;
}

Tensor conv2d_vjp_input(const Tensor& g, const Tensor& k, const Shape& x_shape) {
    const std::size_t cin = x_shape[0], H = x_shape[1], W = x_shape[2];
    const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
    const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
    Tensor gx(x_shape);
    parallel_for(cin, [&](std::size_t ci) {
        for (std::size_t p = 0; p < H; ++p) {
            for (std::size_t q = 0; q < W; ++q) {
                double acc = 0.0;
                for (std::size_t co = 0; co < cout; ++co) {
                    for (std::size_t u = 0; u < kh; ++u) {
                        const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(p) - static_cast<std::ptrdiff_t>(u) + ph;
                        if (i < 0 || i >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t v = 0; v < kw; ++v) {
                            const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(q) - static_cast<std::ptrdiff_t>(v) + pw;
                            if (j < 0 || j >= static_cast<std::ptrdiff_t>(W)) continue;
                            acc += k.data()[((co * cin + ci) * kh + u) * kw + v] *
                                   g.data()[(co * H + static_cast<std::size_t>(i)) * W + static_cast<std::size_t>(j)];
                        }
                    }
                }
                gx.data()[(ci * H + p) * W + q] = acc;
            }
        }
    });
    return gx;
}

Tensor conv2d_vjp_kernel(const Tensor& g, const Tensor& x, const Shape& k_shape) {
    const std::size_t cout = k_shape[0], cin = k_shape[1], kh = k_shape[2], kw = k_shape[3];
    const std::size_t H = x.dim(1), W = x.dim(2);
    const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
    const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
    Tensor gk(k_shape);
    parallel_for(cout, [&](std::size_t co) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t u = 0; u < kh; ++u) {
                for (std::size_t v = 0; v < kw; ++v) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < H; ++i) {
                        const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) - ph;
                        if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t j = 0; j < W; ++j) {
                            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) - pw;
                            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(W)) continue;
                            acc += g.data()[(co * H + i) * W + j] *
                                   x.data()[(ci * H + static_cast<std::size_t>(ii)) * W + static_cast<std::size_t>(jj)];
                        }
                    }
                    gk.data()[((co * cin + ci) * kh + u) * kw + v] = acc;
                }
            }
        }
    });
    return gk;
}

Tensor conv2d_vjp_bias(const Tensor& g) {
    const std::size_t cout = g.dim(0), spatial = g.dim(1) * g.dim(2);
    Tensor gb({cout});
    for (std::size_t co = 0; co < cout; ++co) {
        double acc = 0.0;
        const double* p = g.data() + co * spatial;
        for (std::size_t i = 0; i < spatial; ++i) acc += p[i];
        gb[co] = acc;
    }
    return gb;
}

} // namespace detail

NodeId Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> vjp) {
    nodes_.push_back(Node{std::move(value), needs_grad, std::move(vjp)});
    grads_.emplace_back();
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor v) { return push(std::move(v), false, nullptr); }

NodeId Tape::param(Tensor v) { return push(std::move(v), true, nullptr); }

Tensor& Tape::grad_buf(NodeId id) {
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.size() == 0) g = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape());
    return g;
}

void Tape::add_grad(NodeId id, const Tensor& g) {
    if (!nodes_[static_cast<std::size_t>(id)].requires_grad) return;
    grad_buf(id) += g;
}

const Tensor& Tape::grad(NodeId id) { return grad_buf(id); }

NodeId Tape::record_linear(std::shared_ptr<const LinearOperator> op, NodeId x) {
    const Tensor& xv = value(x);
    if (!shape_equal(op->domain_shape(), xv.shape()))
        throw std::invalid_argument("record_linear: operator domain " + shape_str(op->domain_shape()) +
                                    " does not match input " + shape_str(xv.shape()));
    Tensor out = op->apply(xv);
    const bool req = requires_grad(x);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [op, x, id](Tape& t) { t.add_grad(x, op->adjoint(t.grad_buf(id))); };
    return id;
}

NodeId Tape::conv2d(NodeId x, NodeId kernel, NodeId bias) {
    const Tensor& xv = value(x);
    const Tensor& kv = value(kernel);
    const Tensor& bv = value(bias);
    Tensor out = detail::conv2d_forward(xv, kv, bv);
    const bool req = requires_grad(x) || requires_grad(kernel) || requires_grad(bias);
    NodeId id = push(std::move(out), req, nullptr);
    if (req) {
        nodes_.back().vjp = [x, kernel, bias, id](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            if (t.requires_grad(x))
                t.add_grad(x, detail::conv2d_vjp_input(g, t.value(kernel), t.value(x).shape()));
            if (t.requires_grad(kernel))
                t.add_grad(kernel, detail::conv2d_vjp_kernel(g, t.value(x), t.value(kernel).shape()));
            if (t.requires_grad(bias)) t.add_grad(bias, detail::conv2d_vjp_bias(g));
        };
    }
    return id;
}

NodeId Tape::prelu(NodeId x, NodeId slopes) {
    const Tensor& xv = value(x);
    const Tensor& av = value(slopes);
    if (xv.rank() != 3 || av.rank() != 1 || av.dim(0) != xv.dim(0))
        throw std::invalid_argument("prelu: expected x[C,H,W] and one slope per channel");
    const std::size_t C = xv.dim(0), spatial = xv.dim(1) * xv.dim(2);
    Tensor out(xv.shape());
    for (std::size_t c = 0; c < C; ++c) {
        const double a = av[c];
        const double* xp = xv.data() + c * spatial;
        double* op = out.data() + c * spatial;
        for (std::size_t i = 0; i < spatial; ++i) op[i] = xp[i] >= 0.0 ? xp[i] : a * xp[i];
    }
    const bool req = requires_grad(x) || requires_grad(slopes);
    NodeId id = push(std::move(out), req, nullptr);
    if (req) {
        nodes_.back().vjp = [x, slopes, id, C, spatial](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& xv2 = t.value(x);
            const Tensor& av2 = t.value(slopes);
            if (t.requires_grad(x)) {
                Tensor gx(xv2.shape());
                for (std::size_t c = 0; c < C; ++c) {
                    const double a = av2[c];
                    const double* xp = xv2.data() + c * spatial;
                    const double* gp = g.data() + c * spatial;
                    double* o = gx.data() + c * spatial;
                    // Subgradient at 0 follows the x >= 0 branch (slope 1).
                    for (std::size_t i = 0; i < spatial; ++i) o[i] = xp[i] >= 0.0 ? gp[i] : a * gp[i];
                }
                t.add_grad(x, gx);
            }
            if (t.requires_grad(slopes)) {
                Tensor ga(av2.shape());
                for (std::size_t c = 0; c < C; ++c) {
                    const double* xp = xv2.data() + c * spatial;
                    const double* gp = g.data() + c * spatial;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < spatial; ++i)
                        if (xp[i] < 0.0) acc += gp[i] * xp[i];
                    ga[c] = acc;
                }
                t.add_grad(slopes, ga);
            }
        };
    }
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "Tape::add");
    Tensor out = value(a) + value(b);
    const bool req = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [a, b, id](Tape& t) {
            t.add_grad(a, t.grad_buf(id));
            t.add_grad(b, t.grad_buf(id));
        };
    return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "Tape::sub");
    Tensor out = value(a) - value(b);
    const bool req = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [a, b, id](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            t.add_grad(a, g);
            if (t.requires_grad(b)) {
                Tensor neg = g;
                neg *= -1.0;
                t.add_grad(b, neg);
            }
        };
    return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "Tape::mul");
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    const bool req = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [a, b, id](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            if (t.requires_grad(a)) {
                Tensor ga(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * t.value(b)[i];
                t.add_grad(a, ga);
            }
            if (t.requires_grad(b)) {
                Tensor gb(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * t.value(a)[i];
                t.add_grad(b, gb);
            }
        };
    return id;
}

NodeId Tape::div(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "Tape::div");
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
    const bool req = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [a, b, id](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& av2 = t.value(a);
            const Tensor& bv2 = t.value(b);
            if (t.requires_grad(a)) {
                Tensor ga(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / bv2[i];
                t.add_grad(a, ga);
            }
            if (t.requires_grad(b)) {
                Tensor gb(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i] * av2[i] / (bv2[i] * bv2[i]);
                t.add_grad(b, gb);
            }
        };
    return id;
}

NodeId Tape::scale(NodeId x, double c) {
    Tensor out = value(x);
    out *= c;
    const bool req = requires_grad(x);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [x, c, id](Tape& t) {
            Tensor g = t.grad_buf(id);
            g *= c;
            t.add_grad(x, g);
        };
    return id;
}

NodeId Tape::add_scalar(NodeId x, double c) {
    Tensor out = value(x);
    for (double& v : out.span()) v += c;
    const bool req = requires_grad(x);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [x, id](Tape& t) { t.add_grad(x, t.grad_buf(id)); };
    return id;
}

NodeId Tape::square(NodeId x) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * xv[i];
    const bool req = requires_grad(x);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [x, id](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            Tensor gx(g.shape());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = 2.0 * t.value(x)[i] * g[i];
            t.add_grad(x, gx);
        };
    return id;
}

NodeId Tape::sqrt(NodeId x) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::sqrt(xv[i]);
    const bool req = requires_grad(x);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [x, id](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& y = t.value(id);
            Tensor gx(g.shape());
            // Subgradient 0 at the origin.
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = y[i] == 0.0 ? 0.0 : g[i] / (2.0 * y[i]);
            t.add_grad(x, gx);
        };
    return id;
}

NodeId Tape::sum(NodeId x) {
    double acc = 0.0;
    for (double v : value(x).span()) acc += v;
    const bool req = requires_grad(x);
    NodeId id = push(Tensor::scalar(acc), req, nullptr);
    if (req)
        nodes_.back().vjp = [x, id](Tape& t) {
            const double g = t.grad_buf(id)[0];
            t.add_grad(x, Tensor::full(t.value(x).shape(), g));
        };
    return id;
}

NodeId Tape::mean(NodeId x) {
    const std::size_t n = value(x).size();
    double acc = 0.0;
    for (double v : value(x).span()) acc += v;
    const bool req = requires_grad(x);
    NodeId id = push(Tensor::scalar(acc / static_cast<double>(n)), req, nullptr);
    if (req)
        nodes_.back().vjp = [x, id, n](Tape& t) {
            const double g = t.grad_buf(id)[0] / static_cast<double>(n);
            t.add_grad(x, Tensor::full(t.value(x).shape(), g));
        };
    return id;
}

NodeId Tape::reshape(NodeId x, Shape shape) {
    const Tensor& xv = value(x);
    if (shape_numel(shape) != xv.size()) throw std::invalid_argument("Tape::reshape: element count mismatch");
    Tensor out(std::move(shape), std::vector<double>(xv.vec()));
    const bool req = requires_grad(x);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [x, id](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            t.add_grad(x, Tensor(t.value(x).shape(), std::vector<double>(g.vec())));
        };
    return id;
}

NodeId Tape::dot(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "Tape::dot");
    const double v = kernels::dot_seq(value(a).data(), value(b).data(), value(a).size());
    const bool req = requires_grad(a) || requires_grad(b);
    NodeId id = push(Tensor::scalar(v), req, nullptr);
    if (req)
        nodes_.back().vjp = [a, b, id](Tape& t) {
            const double g = t.grad_buf(id)[0];
            if (t.requires_grad(a)) {
                Tensor ga = t.value(b);
                ga *= g;
                t.add_grad(a, ga);
            }
            if (t.requires_grad(b)) {
                Tensor gb = t.value(a);
                gb *= g;
                t.add_grad(b, gb);
            }
        };
    return id;
}

NodeId Tape::axpy(NodeId alpha, NodeId x, NodeId y) {
    if (value(alpha).size() != 1) throw std::invalid_argument("Tape::axpy: alpha must be scalar");
    require_same_shape(value(x), value(y), "Tape::axpy");
    const Tensor& xv = value(x);
    const Tensor& yv = value(y);
    Tensor out(xv.shape());
    kernels::axpy_seq(out.data(), yv.data(), value(alpha)[0], xv.data(), xv.size());
    const bool req = requires_grad(alpha) || requires_grad(x) || requires_grad(y);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [alpha, x, y, id](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            if (t.requires_grad(y)) t.add_grad(y, g);
            if (t.requires_grad(x)) {
                Tensor gx = g;
                gx *= t.value(alpha)[0];
                t.add_grad(x, gx);
            }
            if (t.requires_grad(alpha))
                t.add_grad(alpha, Tensor::scalar(kernels::dot_seq(g.data(), t.value(x).data(), g.size())));
        };
    return id;
}

NodeId Tape::scalar_div(NodeId num, NodeId den) {
    if (value(num).size() != 1 || value(den).size() != 1)
        throw std::invalid_argument("Tape::scalar_div: scalar nodes required");
    const double nv = value(num)[0];
    const double dv = value(den)[0];
    const double out = kernels::guarded_div(nv, dv);
    const bool req = requires_grad(num) || requires_grad(den);
    NodeId id = push(Tensor::scalar(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [num, den, id](Tape& t) {
            const double g = t.grad_buf(id)[0];
            const double n = t.value(num)[0];
            const double d = t.value(den)[0];
            if (d != 0.0) {
                if (t.requires_grad(num)) t.add_grad(num, Tensor::scalar(g / d));
                if (t.requires_grad(den)) t.add_grad(den, Tensor::scalar(-g * n / (d * d)));
            }
        };
    return id;
}

NodeId Tape::soft_threshold(NodeId x, Tensor thresholds) {
    const Tensor& xv = value(x);
    if (xv.rank() < 1) throw std::invalid_argument("Tape::soft_threshold: tensor input required");
    const std::size_t C = xv.dim(0);
    if (thresholds.size() != 1 && thresholds.size() != C)
        throw std::invalid_argument("Tape::soft_threshold: thresholds must be scalar or per-channel");
    for (double t : thresholds.span())
        if (t < 0.0) throw std::invalid_argument("Tape::soft_threshold: negative threshold");
    const std::size_t per = xv.size() / C;
    Tensor out(xv.shape());
    for (std::size_t c = 0; c < C; ++c) {
        const double t = thresholds.size() == 1 ? thresholds[0] : thresholds[c];
        const double* xp = xv.data() + c * per;
        double* op = out.data() + c * per;
        for (std::size_t i = 0; i < per; ++i) op[i] = kernels::soft_threshold_value(xp[i], t);
    }
    const bool req = requires_grad(x);
    NodeId id = push(std::move(out), req, nullptr);
    if (req)
        nodes_.back().vjp = [x, id, C, per, th = std::move(thresholds)](Tape& t) {
            const Tensor& g = t.grad_buf(id);
            const Tensor& xv2 = t.value(x);
            Tensor gx(xv2.shape());
            for (std::size_t c = 0; c < C; ++c) {
                const double tc = th.size() == 1 ? th[0] : th[c];
                const double* xp = xv2.data() + c * per;
                const double* gp = g.data() + c * per;
                double* o = gx.data() + c * per;
                for (std::size_t i = 0; i < per; ++i) o[i] = std::abs(xp[i]) > tc ? gp[i] : 0.0;
            }
            t.add_grad(x, gx);
        };
    return id;
}

void Tape::backward(NodeId loss) {
    if (value(loss).size() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar");
    for (Tensor& g : grads_) g = Tensor();
    grad_buf(loss)[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.vjp) continue;
        if (grads_[i].size() == 0) continue;  // not reachable from the loss
        node.vjp(*this);
    }
}

} // namespace metainv
