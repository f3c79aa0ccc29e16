#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "sems/common.hpp"
#include "sems/rng.hpp"

namespace sems {

// Reverse-mode tape sized for the networks in this project. Nodes form a DAG
// through shared_ptr parents; a Tensor is a value-semantic handle to a node.
// Graphs are built per sample; parameter leaves persist across samples and
// accumulate gradients until zero_grad(), which is how batches are averaged
// in a fixed, worker-independent order.

struct Node {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated during backward; leaves keep theirs
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // accumulates self.grad into parents
    bool requires_grad = true;

    size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor leaf(std::vector<int> shape, std::vector<double> values,
                       bool requires_grad = true) {
        auto n = std::make_shared<Node>();
        size_t count = shape_count(shape);
        require(values.size() == count, "tensor: value count does not match shape");
        n->shape = std::move(shape);
        n->values = std::move(values);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor zeros(std::vector<int> shape, bool requires_grad = true) {
        size_t count = shape_count(shape);
        return leaf(std::move(shape), std::vector<double>(count, 0.0), requires_grad);
    }

    static Tensor constant(std::vector<int> shape, std::vector<double> values) {
        return leaf(std::move(shape), std::move(values), false);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return leaf({1}, {v}, requires_grad);
    }

    static Tensor gaussian(std::vector<int> shape, double stddev, Rng& rng,
                           bool requires_grad = true) {
        size_t count = shape_count(shape);
        std::vector<double> v(count);
        for (auto& x : v) x = rng.normal() * stddev;
        return leaf(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const std::vector<int>& shape() const { return node_->shape; }
    size_t size() const { return node_->size(); }
    std::vector<double>& values() & { return node_->values; }
    const std::vector<double>& values() const& { return node_->values; }
    // Calling values() on a temporary returns a copy so the storage cannot
    // dangle once the handle dies at the end of the expression.
    std::vector<double> values() && { return node_->values; }
    bool requires_grad() const { return node_->requires_grad; }

    double value() const {
        require(node_->size() == 1, "tensor: value() requires a scalar");
        return node_->values[0];
    }

    /// Gradient of the most recent backward pass(es); zeros if never reached.
    std::vector<double> grad() const {
        if (node_->grad.size() != node_->size()) return std::vector<double>(node_->size(), 0.0);
        return node_->grad;
    }

    std::shared_ptr<Node> node() const { return node_; }

    static size_t shape_count(const std::vector<int>& shape) {
        size_t c = 1;
        for (int d : shape) {
            require(d > 0, "tensor: non-positive dimension");
            c *= static_cast<size_t>(d);
        }
        return c;
    }

private:
    std::shared_ptr<Node> node_;
};

namespace ad {

inline Tensor make_op(std::vector<int> shape, std::vector<double> values,
                      std::vector<std::shared_ptr<Node>> parents,
                      std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->parents = std::move(parents);
    n->requires_grad = false;
    for (const auto& p : n->parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Tensor(std::move(n));
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add: shape mismatch");
    std::vector<double> out(a.size());
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    return ad::make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (int side = 0; side < 2; ++side) {
            Node& p = *self.parents[side];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return ad::make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return ad::make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) pa.grad[i] += self.grad[i] * pb.values[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) pb.grad[i] += self.grad[i] * pa.values[i];
        }
    });
}

/// scale * t + shift, elementwise with scalar coefficients.
inline Tensor affine(const Tensor& t, double scale, double shift) {
    std::vector<double> out(t.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = scale * t.values()[i] + shift;
    return ad::make_op(t.shape(), std::move(out), {t.node()}, [scale](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < self.size(); ++i) p.grad[i] += scale * self.grad[i];
    });
}

/// t + c with a plain (non-tape) offset vector.
inline Tensor add_const_vec(const Tensor& t, const std::vector<double>& c) {
    require(t.size() == c.size(), "add_const_vec: size mismatch");
    std::vector<double> out(t.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = t.values()[i] + c[i];
    return ad::make_op(t.shape(), std::move(out), {t.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i];
    });
}

inline Tensor add_n(const std::vector<Tensor>& ts) {
    require(!ts.empty(), "add_n: empty list");
    std::vector<double> out(ts[0].size(), 0.0);
    std::vector<std::shared_ptr<Node>> parents;
    for (const Tensor& t : ts) {
        require(t.shape() == ts[0].shape(), "add_n: shape mismatch");
        for (size_t i = 0; i < out.size(); ++i) out[i] += t.values()[i];
        parents.push_back(t.node());
    }
    return ad::make_op(ts[0].shape(), std::move(out), std::move(parents), [](Node& self) {
        for (auto& pp : self.parents) {
            Node& p = *pp;
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i];
        }
    });
}

/// View with a new shape; shares no storage but is cheap enough here.
inline Tensor reshape(const Tensor& t, std::vector<int> new_shape) {
    require(Tensor::shape_count(new_shape) == t.size(), "reshape: element count mismatch");
    std::vector<double> out = t.values();
    return ad::make_op(std::move(new_shape), std::move(out), {t.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i];
    });
}

/// Stacks two equally-sized tensors as the leading axis of `shape`.
inline Tensor stack2(const Tensor& a, const Tensor& b, std::vector<int> shape) {
    require(a.size() == b.size(), "stack2: size mismatch");
    require(Tensor::shape_count(shape) == 2 * a.size(), "stack2: bad target shape");
    std::vector<double> out(2 * a.size());
    std::copy(a.values().begin(), a.values().end(), out.begin());
    std::copy(b.values().begin(), b.values().end(), out.begin() + a.size());
    return ad::make_op(std::move(shape), std::move(out), {a.node(), b.node()}, [](Node& self) {
        size_t half = self.size() / 2;
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < half; ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < half; ++i) pb.grad[i] += self.grad[half + i];
        }
    });
}

inline Tensor relu(const Tensor& t) {
    std::vector<double> out(t.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = t.values()[i] > 0 ? t.values()[i] : 0.0;
    return ad::make_op(t.shape(), std::move(out), {t.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < self.size(); ++i)
            if (p.values[i] > 0) p.grad[i] += self.grad[i];
    });
}

inline Tensor sum(const Tensor& t) {
    double s = std::accumulate(t.values().begin(), t.values().end(), 0.0);
    return ad::make_op({1}, {s}, {t.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < p.size(); ++i) p.grad[i] += self.grad[0];
    });
}

inline Tensor mean(const Tensor& t) {
    double inv = 1.0 / static_cast<double>(t.size());
    double s = std::accumulate(t.values().begin(), t.values().end(), 0.0) * inv;
    return ad::make_op({1}, {s}, {t.node()}, [inv](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < p.size(); ++i) p.grad[i] += self.grad[0] * inv;
    });
}

/// Inner product with a fixed vector.
inline Tensor dot_const(const Tensor& t, const std::vector<double>& w) {
    require(t.size() == w.size(), "dot_const: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < w.size(); ++i) s += t.values()[i] * w[i];
    return ad::make_op({1}, {s}, {t.node()}, [w](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < p.size(); ++i) p.grad[i] += self.grad[0] * w[i];
    });
}

// ---------------------------------------------------------------------------
// Dense / conv
// ---------------------------------------------------------------------------

/// x [in] or [B, in], w [in, out], b [out].
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(w.shape().size() == 2, "dense: weight must be 2-D");
    const int in_dim = w.shape()[0];
    const int out_dim = w.shape()[1];
    require(b.shape() == std::vector<int>{out_dim}, "dense: bias shape mismatch");
    const bool batched = x.shape().size() == 2;
    const int batch = batched ? x.shape()[0] : 1;
    require((batched ? x.shape()[1] : x.shape()[0]) == in_dim, "dense: inner dimension mismatch");

    std::vector<double> out(static_cast<size_t>(batch) * out_dim);
    const double* xv = x.values().data();
    const double* wv = w.values().data();
    const double* bv = b.values().data();
    for (int r = 0; r < batch; ++r) {
        double* orow = out.data() + static_cast<size_t>(r) * out_dim;
        for (int o = 0; o < out_dim; ++o) orow[o] = bv[o];
        const double* xrow = xv + static_cast<size_t>(r) * in_dim;
        for (int i = 0; i < in_dim; ++i) {
            const double xi = xrow[i];
            const double* wrow = wv + static_cast<size_t>(i) * out_dim;
            for (int o = 0; o < out_dim; ++o) orow[o] += xi * wrow[o];
        }
    }
    std::vector<int> out_shape = batched ? std::vector<int>{batch, out_dim}
                                         : std::vector<int>{out_dim};
    return ad::make_op(std::move(out_shape), std::move(out), {x.node(), w.node(), b.node()},
                       [batch, in_dim, out_dim](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const double* go = self.grad.data();
        if (px.requires_grad) {
            px.ensure_grad();
            for (int r = 0; r < batch; ++r)
                for (int i = 0; i < in_dim; ++i) {
                    const double* wrow = pw.values.data() + static_cast<size_t>(i) * out_dim;
                    const double* grow = go + static_cast<size_t>(r) * out_dim;
                    double acc = 0.0;
                    for (int o = 0; o < out_dim; ++o) acc += wrow[o] * grow[o];
                    px.grad[static_cast<size_t>(r) * in_dim + i] += acc;
                }
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            for (int r = 0; r < batch; ++r) {
                const double* xrow = px.values.data() + static_cast<size_t>(r) * in_dim;
                const double* grow = go + static_cast<size_t>(r) * out_dim;
                for (int i = 0; i < in_dim; ++i) {
                    double* gw = pw.grad.data() + static_cast<size_t>(i) * out_dim;
                    const double xi = xrow[i];
                    for (int o = 0; o < out_dim; ++o) gw[o] += xi * grow[o];
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int r = 0; r < batch; ++r)
                for (int o = 0; o < out_dim; ++o)
                    pb.grad[o] += go[static_cast<size_t>(r) * out_dim + o];
        }
    });
}

/// Zero-padded same-size correlation. x [Cin, H, W], k [Cout, Cin, K, K], K odd.
inline Tensor conv2d(const Tensor& x, const Tensor& k) {
    require(x.shape().size() == 3 && k.shape().size() == 4, "conv2d: bad ranks");
    const int cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const int cout = k.shape()[0];
    require(k.shape()[1] == cin, "conv2d: channel mismatch");
    const int ks = k.shape()[2];
    require(k.shape()[3] == ks && ks % 2 == 1, "conv2d: kernel must be odd square");
    const int pad = ks / 2;
    const size_t plane = static_cast<size_t>(h) * w;

    std::vector<double> out(static_cast<size_t>(cout) * plane, 0.0);
    const double* xv = x.values().data();
    const double* kv = k.values().data();
    for (int co = 0; co < cout; ++co) {
        double* oplane = out.data() + co * plane;
        for (int ci = 0; ci < cin; ++ci) {
            const double* iplane = xv + ci * plane;
            const double* kmat = kv + (static_cast<size_t>(co) * cin + ci) * ks * ks;
            for (int dy = 0; dy < ks; ++dy)
                for (int dx = 0; dx < ks; ++dx) {
                    const double kval = kmat[dy * ks + dx];
                    const int y0 = std::max(0, pad - dy), y1 = std::min(h, h + pad - dy);
                    const int x0 = std::max(0, pad - dx), x1 = std::min(w, w + pad - dx);
                    for (int y = y0; y < y1; ++y) {
                        double* orow = oplane + static_cast<size_t>(y) * w;
                        const double* irow = iplane + static_cast<size_t>(y + dy - pad) * w + (dx - pad);
                        for (int xcol = x0; xcol < x1; ++xcol) orow[xcol] += kval * irow[xcol];
                    }
                }
        }
    }
    return ad::make_op({cout, h, w}, std::move(out), {x.node(), k.node()},
                       [cin, cout, h, w, ks, pad, plane](Node& self) {
        Node& px = *self.parents[0];
        Node& pk = *self.parents[1];
        const double* go = self.grad.data();
        if (px.requires_grad) {
            px.ensure_grad();
            for (int co = 0; co < cout; ++co) {
                const double* gplane = go + co * plane;
                for (int ci = 0; ci < cin; ++ci) {
                    double* giplane = px.grad.data() + ci * plane;
                    const double* kmat = pk.values.data() + (static_cast<size_t>(co) * cin + ci) * ks * ks;
                    for (int dy = 0; dy < ks; ++dy)
                        for (int dx = 0; dx < ks; ++dx) {
                            const double kval = kmat[dy * ks + dx];
                            const int y0 = std::max(0, pad - dy), y1 = std::min(h, h + pad - dy);
                            const int x0 = std::max(0, pad - dx), x1 = std::min(w, w + pad - dx);
                            for (int y = y0; y < y1; ++y) {
                                const double* grow = gplane + static_cast<size_t>(y) * w;
                                double* girow = giplane + static_cast<size_t>(y + dy - pad) * w + (dx - pad);
                                for (int xcol = x0; xcol < x1; ++xcol)
                                    girow[xcol] += kval * grow[xcol];
                            }
                        }
                }
            }
        }
        if (pk.requires_grad) {
            pk.ensure_grad();
            for (int co = 0; co < cout; ++co) {
                const double* gplane = go + co * plane;
                for (int ci = 0; ci < cin; ++ci) {
                    const double* iplane = px.values.data() + ci * plane;
                    double* gkmat = pk.grad.data() + (static_cast<size_t>(co) * cin + ci) * ks * ks;
                    for (int dy = 0; dy < ks; ++dy)
                        for (int dx = 0; dx < ks; ++dx) {
                            const int y0 = std::max(0, pad - dy), y1 = std::min(h, h + pad - dy);
                            const int x0 = std::max(0, pad - dx), x1 = std::min(w, w + pad - dx);
                            double acc = 0.0;
                            for (int y = y0; y < y1; ++y) {
                                const double* grow = gplane + static_cast<size_t>(y) * w;
                                const double* irow = iplane + static_cast<size_t>(y + dy - pad) * w + (dx - pad);
                                for (int xcol = x0; xcol < x1; ++xcol)
                                    acc += grow[xcol] * irow[xcol];
                            }
                            gkmat[dy * ks + dx] += acc;
                        }
                }
            }
        }
    });
}

/// 1-D analogue: x [Cin, L], k [Cout, Cin, K], K odd, zero padding.
inline Tensor conv1d(const Tensor& x, const Tensor& k) {
    require(x.shape().size() == 2 && k.shape().size() == 3, "conv1d: bad ranks");
    const int cin = x.shape()[0], len = x.shape()[1];
    const int cout = k.shape()[0];
    require(k.shape()[1] == cin, "conv1d: channel mismatch");
    const int ks = k.shape()[2];
    require(ks % 2 == 1, "conv1d: kernel must be odd");
    const int pad = ks / 2;

    std::vector<double> out(static_cast<size_t>(cout) * len, 0.0);
    for (int co = 0; co < cout; ++co) {
        double* orow = out.data() + static_cast<size_t>(co) * len;
        for (int ci = 0; ci < cin; ++ci) {
            const double* irow = x.values().data() + static_cast<size_t>(ci) * len;
            const double* krow = k.values().data() + (static_cast<size_t>(co) * cin + ci) * ks;
            for (int d = 0; d < ks; ++d) {
                const double kval = krow[d];
                const int t0 = std::max(0, pad - d), t1 = std::min(len, len + pad - d);
                for (int t = t0; t < t1; ++t) orow[t] += kval * irow[t + d - pad];
            }
        }
    }
    return ad::make_op({cout, len}, std::move(out), {x.node(), k.node()},
                       [cin, cout, len, ks, pad](Node& self) {
        Node& px = *self.parents[0];
        Node& pk = *self.parents[1];
        const double* go = self.grad.data();
        if (px.requires_grad) {
            px.ensure_grad();
            for (int co = 0; co < cout; ++co)
                for (int ci = 0; ci < cin; ++ci) {
                    const double* krow = pk.values.data() + (static_cast<size_t>(co) * cin + ci) * ks;
                    const double* grow = go + static_cast<size_t>(co) * len;
                    double* girow = px.grad.data() + static_cast<size_t>(ci) * len;
                    for (int d = 0; d < ks; ++d) {
                        const double kval = krow[d];
                        const int t0 = std::max(0, pad - d), t1 = std::min(len, len + pad - d);
                        for (int t = t0; t < t1; ++t) girow[t + d - pad] += kval * grow[t];
                    }
                }
        }
        if (pk.requires_grad) {
            pk.ensure_grad();
            for (int co = 0; co < cout; ++co)
                for (int ci = 0; ci < cin; ++ci) {
                    const double* irow = px.values.data() + static_cast<size_t>(ci) * len;
                    const double* grow = go + static_cast<size_t>(co) * len;
                    double* gkrow = pk.grad.data() + (static_cast<size_t>(co) * cin + ci) * ks;
                    for (int d = 0; d < ks; ++d) {
                        const int t0 = std::max(0, pad - d), t1 = std::min(len, len + pad - d);
                        double acc = 0.0;
                        for (int t = t0; t < t1; ++t) acc += grow[t] * irow[t + d - pad];
                        gkrow[d] += acc;
                    }
                }
        }
    });
}

/// Per-channel bias for [C, H, W] or [C, L] activations.
inline Tensor bias_channels(const Tensor& x, const Tensor& b) {
    require(x.shape().size() >= 2, "bias_channels: need channel-major tensor");
    const int ch = x.shape()[0];
    require(b.shape() == std::vector<int>{ch}, "bias_channels: bias shape mismatch");
    const size_t plane = x.size() / ch;
    std::vector<double> out(x.size());
    for (int c = 0; c < ch; ++c)
        for (size_t i = 0; i < plane; ++i)
            out[c * plane + i] = x.values()[c * plane + i] + b.values()[c];
    return ad::make_op(x.shape(), std::move(out), {x.node(), b.node()}, [ch, plane](Node& self) {
        Node& px = *self.parents[0];
        Node& pb = *self.parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (size_t i = 0; i < self.size(); ++i) px.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (size_t i = 0; i < plane; ++i) acc += self.grad[c * plane + i];
                pb.grad[c] += acc;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Softmax / losses / selection
// ---------------------------------------------------------------------------

/// Softmax over the last axis of a 1-D or 2-D tensor, max-subtracted.
inline Tensor softmax(const Tensor& t, int axis = -1) {
    const auto& shape = t.shape();
    require(shape.size() == 1 || shape.size() == 2, "softmax: rank must be 1 or 2");
    const int last = static_cast<int>(shape.size()) - 1;
    require(axis == -1 || axis == last, "softmax: only the last axis is supported");
    const int cols = shape[last];
    const int rows = static_cast<int>(t.size()) / cols;

    std::vector<double> out(t.size());
    for (int r = 0; r < rows; ++r) {
        const double* in = t.values().data() + static_cast<size_t>(r) * cols;
        double* o = out.data() + static_cast<size_t>(r) * cols;
        double mx = in[0];
        for (int i = 1; i < cols; ++i) mx = std::max(mx, in[i]);
        double denom = 0.0;
        for (int i = 0; i < cols; ++i) {
            o[i] = std::exp(in[i] - mx);
            denom += o[i];
        }
        for (int i = 0; i < cols; ++i) o[i] /= denom;
    }
    return ad::make_op(shape, std::move(out), {t.node()}, [rows, cols](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int r = 0; r < rows; ++r) {
            const double* s = self.values.data() + static_cast<size_t>(r) * cols;
            const double* gs = self.grad.data() + static_cast<size_t>(r) * cols;
            double inner = 0.0;
            for (int i = 0; i < cols; ++i) inner += gs[i] * s[i];
            double* gp = p.grad.data() + static_cast<size_t>(r) * cols;
            for (int i = 0; i < cols; ++i) gp[i] += s[i] * (gs[i] - inner);
        }
    });
}

/// -log probs[label]; probs must lie on the simplex within 1e-6.
inline Tensor cross_entropy(const Tensor& probs, int label) {
    require(probs.shape().size() == 1, "cross_entropy: probs must be 1-D");
    const int k = probs.shape()[0];
    require(label >= 0 && label < k, "cross_entropy: label out of range");
    double total = std::accumulate(probs.values().begin(), probs.values().end(), 0.0);
    if (!std::isfinite(total))
        throw NumericalError("cross_entropy: non-finite probabilities");
    require(std::abs(total - 1.0) < 1e-6, "cross_entropy: probs not on the simplex");
    double loss = -std::log(probs.values()[label]);
    return ad::make_op({1}, {loss}, {probs.node()}, [label](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        p.grad[label] += -self.grad[0] / p.values[label];
    });
}

/// Forward takes the given hard values; backward passes gradients through to
/// `soft` unchanged (straight-through).
inline Tensor straight_through(const Tensor& soft, std::vector<double> hard_values) {
    require(soft.size() == hard_values.size(), "straight_through: size mismatch");
    return ad::make_op(soft.shape(), std::move(hard_values), {soft.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i];
    });
}

inline size_t argmax_index(const std::vector<double>& v) {
    size_t best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

struct GumbelSample {
    Tensor soft;            // softmax((z+g)/temperature), on the tape
    Tensor hard;            // one-hot(hard_index) forward, soft Jacobian backward
    size_t hard_index = 0;  // argmax of the perturbed scores
    std::vector<double> perturbed;  // z + g, plain values
};

/// Gumbel-Softmax with the straight-through estimator on a flattened score
/// vector. The perturbed scores are returned so callers can resolve
/// collisions across independent heads deterministically.
inline GumbelSample gumbel_softmax_st(const Tensor& z, double temperature, uint64_t rng_seed) {
    require(temperature > 0.0, "gumbel_softmax_st: temperature must be positive");
    Rng rng(rng_seed);
    std::vector<double> g(z.size());
    for (auto& x : g) x = rng.gumbel();
    GumbelSample s;
    Tensor perturbed = add_const_vec(z, g);
    s.perturbed = perturbed.values();
    s.soft = softmax(affine(perturbed, 1.0 / temperature, 0.0));
    s.hard_index = argmax_index(s.perturbed);
    std::vector<double> onehot(z.size(), 0.0);
    onehot[s.hard_index] = 1.0;
    s.hard = straight_through(s.soft, std::move(onehot));
    return s;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into leaf
/// tensors (+= seed * dloss/dleaf); interior grads are cleared afterwards so
/// repeated calls over a batch sum per-sample contributions even when parts
/// of the graph (e.g. the pilot selector) are shared between samples.
inline void backward(const Tensor& loss, double seed = 1.0) {
    require(loss.size() == 1, "backward: loss must be a scalar");
    if (!loss.node()->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad.size() == node->values.size())
            node->backward_fn(*node);
    }
    for (Node* node : order)
        if (node->backward_fn) node->grad.clear();
}

inline void zero_grad(std::vector<Tensor>& params) {
    for (Tensor& p : params) p.node()->grad.assign(p.size(), 0.0);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;

    static AdamState init(const std::vector<Tensor>& params, double lr) {
        AdamState st;
        st.lr = lr;
        for (const Tensor& p : params) {
            st.first_moment.emplace_back(p.size(), 0.0);
            st.second_moment.emplace_back(p.size(), 0.0);
        }
        return st;
    }
};

/// Standard bias-corrected Adam update; reads gradients accumulated in the
/// parameter nodes, optionally scaled (e.g. by 1/batch).
inline void adam_step(std::vector<Tensor>& params, AdamState& state, double grad_scale = 1.0) {
    require(params.size() == state.first_moment.size(), "adam_step: state/param count mismatch");
    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Node& node = *params[pi].node();
        require(state.first_moment[pi].size() == node.size(), "adam_step: shape mismatch");
        node.ensure_grad();
        auto& m = state.first_moment[pi];
        auto& v = state.second_moment[pi];
        for (size_t i = 0; i < node.size(); ++i) {
            const double g = node.grad[i] * grad_scale;
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            node.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

/// Central-difference check of d f / d x. Returns the worst per-coordinate
/// error relative to max(1, |analytic|, |numeric|).
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                         double step = 1e-5) {
    Tensor y = f(x);
    require(y.size() == 1, "grad_check: f must be scalar-valued");
    x.node()->grad.clear();  // discard any accumulation from earlier passes
    backward(y);
    std::vector<double> analytic = x.grad();
    x.node()->grad.clear();

    double worst = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double saved = x.values()[i];
        x.values()[i] = saved + step;
        double fp = f(x).value();
        x.values()[i] = saved - step;
        double fm = f(x).value();
        x.values()[i] = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace sems
