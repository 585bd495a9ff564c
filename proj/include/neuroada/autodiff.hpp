// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "neuroada/delta.hpp"
#include "neuroada/error.hpp"
#include "neuroada/tensor.hpp"

namespace neuroada {

/// Handle to a tape node.
struct VarId {
    std::size_t index = 0;
};

/// Reverse-mode tape over dense tensors. Single-threaded by contract; node
/// creation order is the topological order used for the backward sweep, and
/// every reduction runs in a fixed (j-ascending, n-ascending) order so
/// repeated runs are bit-identical.
///
/// Leaves may either own a copy of their values or view external storage
/// (training loops keep parameters in their own buffers and bind them per
/// step). Gradients are retained on leaves only and accumulate additively
/// across backward calls until zero_grad().
template <typename T>
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- leaves -------------------------------------------------------

    VarId leaf(const Tensor<T>& t, bool requires_grad = false) {
        Node n;
        n.kind = Op::leaf;
        n.shape = t.shape;
        n.storage = t.data;
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }

    /// Leaf viewing caller-owned storage; the buffer must outlive the tape.
    VarId leaf_view(const T* data, std::vector<std::size_t> shape, bool requires_grad = false) {
        Node n;
        n.kind = Op::leaf;
        n.shape = std::move(shape);
        n.external = data;
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }

    // ---- ops ----------------------------------------------------------

    /// out[n,i] = sum_j W[i,j] * x[n,j] + b[i]. W rows are output neurons.
    VarId linear(VarId x, VarId w, VarId b) {
        const auto& xs = node(x).shape;
        const auto& ws = node(w).shape;
        const auto& bs = node(b).shape;
        if (xs.size() != 2 || ws.size() != 2 || bs.size() != 1 || xs[1] != ws[1] ||
            bs[0] != ws[0]) {
            throw ShapeError("linear: x " + shape_string(xs) + " vs W " + shape_string(ws) +
                             " vs b " + shape_string(bs));
        }
        const std::size_t batch = xs[0], d_out = ws[0], d_in = ws[1];
        Node n = make_op(Op::linear, {x, w, b}, {batch, d_out});
        const T* xd = data(x);
        const T* wd = data(w);
        const T* bd = data(b);
        for (std::size_t nn = 0; nn < batch; ++nn) {
            for (std::size_t i = 0; i < d_out; ++i) {
                T acc = T(0);
                const T* wi = wd + i * d_in;
                const T* xn = xd + nn * d_in;
                for (std::size_t j = 0; j < d_in; ++j) {
                    acc += wi[j] * xn[j];
                }
                n.storage[nn * d_out + i] = acc + bd[i];
            }
        }
        return push(std::move(n));
    }

    /// Frozen linear layer with trainable sparse bypass values. `theta` is a
    /// flat leaf aligned with plan.indices; `w` and `plan` must outlive the
    /// tape. Cost of the delta path is O(selected) on top of the frozen
    /// matmul; nothing dense is materialized.
    VarId bypass_linear(VarId x, VarId theta, const WeightMatrix<T>* w,
                        const SelectionPlan* plan) {
        const auto& xs = node(x).shape;
        if (node(theta).shape != std::vector<std::size_t>{plan->nnz()}) {
            throw ContractError("bypass_linear: theta length " +
                                shape_string(node(theta).shape) + " does not match plan nnz " +
                                std::to_string(plan->nnz()));
        }
        Tensor<T> xt(xs, std::vector<T>(data(x), data(x) + node(x).numel()));
        Tensor<T> out = bypass_forward_kernel(xt, *w, *plan, data(theta));
        Node n = make_op(Op::bypass, {x, theta}, out.shape);
        n.storage = std::move(out.data);
        n.weight = w;
        n.plan = plan;
        return push(std::move(n));
    }

    VarId tanh(VarId x) {
        Node n = make_op(Op::tanh_act, {x}, node(x).shape);
        const T* xd = data(x);
        for (std::size_t i = 0; i < n.storage.size(); ++i) {
            n.storage[i] = std::tanh(xd[i]);
        }
        return push(std::move(n));
    }

    VarId relu(VarId x) {
        Node n = make_op(Op::relu_act, {x}, node(x).shape);
        const T* xd = data(x);
        for (std::size_t i = 0; i < n.storage.size(); ++i) {
            n.storage[i] = xd[i] > T(0) ? xd[i] : T(0);
        }
        return push(std::move(n));
    }

    /// Scalar sum of all elements.
    VarId sum(VarId x) {
        Node n = make_op(Op::sum_all, {x}, {});
        const T* xd = data(x);
        T acc = T(0);
        for (std::size_t i = 0; i < node(x).numel(); ++i) {
            acc += xd[i];
        }
        n.storage[0] = acc;
        return push(std::move(n));
    }

    /// Scalar sum of coeffs[i] * x[i]; used by gradient oracles to induce an
    /// arbitrary upstream gradient.
    VarId weighted_sum(VarId x, const Tensor<T>& coeffs) {
        if (!same_numel(x, coeffs)) {
            throw ShapeError("weighted_sum: x " + shape_string(node(x).shape) + " vs coeffs " +
                             shape_string(coeffs.shape));
        }
        Node n = make_op(Op::weighted, {x}, {});
        n.aux = coeffs.data;
        const T* xd = data(x);
        T acc = T(0);
        for (std::size_t i = 0; i < coeffs.data.size(); ++i) {
            acc += coeffs.data[i] * xd[i];
        }
        n.storage[0] = acc;
        return push(std::move(n));
    }

    /// Mean squared error over all elements.
    VarId mse_loss(VarId pred, const Tensor<T>& target) {
        if (!same_numel(pred, target) || target.numel() == 0) {
            throw ShapeError("mse_loss: pred " + shape_string(node(pred).shape) + " vs target " +
                             shape_string(target.shape));
        }
        Node n = make_op(Op::mse, {pred}, {});
        n.aux = target.data;
        const T* pd = data(pred);
        T acc = T(0);
        for (std::size_t i = 0; i < target.data.size(); ++i) {
            const T d = pd[i] - target.data[i];
            acc += d * d;
        }
        n.storage[0] = acc / static_cast<T>(target.data.size());
        return push(std::move(n));
    }

    /// Mean softmax cross-entropy over the batch, computed with the usual
    /// max-shifted log-sum-exp. Saves the softmax for the backward rule.
    VarId softmax_cross_entropy(VarId logits, const std::vector<int>& labels) {
        const auto& ls = node(logits).shape;
        if (ls.size() != 2 || labels.size() != ls[0] || ls[0] == 0) {
            throw ShapeError("softmax_cross_entropy: logits " + shape_string(ls) + " vs " +
                             std::to_string(labels.size()) + " labels");
        }
        const std::size_t batch = ls[0], classes = ls[1];
        Node n = make_op(Op::softmax_ce, {logits}, {});
        n.labels = labels;
        n.aux.resize(batch * classes);
        const T* ld = data(logits);
        T total = T(0);
        for (std::size_t nn = 0; nn < batch; ++nn) {
            const T* row = ld + nn * classes;
            if (labels[nn] < 0 || static_cast<std::size_t>(labels[nn]) >= classes) {
                throw ParamError("softmax_cross_entropy: label " + std::to_string(labels[nn]) +
                                 " out of range at batch row " + std::to_string(nn));
            }
            T m = row[0];
            for (std::size_t c = 1; c < classes; ++c) {
                if (row[c] > m) {
                    m = row[c];
                }
            }
            T z = T(0);
            for (std::size_t c = 0; c < classes; ++c) {
                const T e = std::exp(row[c] - m);
                n.aux[nn * classes + c] = e;
                z += e;
            }
            for (std::size_t c = 0; c < classes; ++c) {
                n.aux[nn * classes + c] /= z;
            }
            total += std::log(z) - (row[static_cast<std::size_t>(labels[nn])] - m);
        }
        n.storage[0] = total / static_cast<T>(batch);
        return push(std::move(n));
    }

    // ---- backward -----------------------------------------------------

    /// Reverse sweep from a scalar loss. Adjoints are computed in a fresh
    /// workspace and then added into the persistent leaf gradients, so a
    /// second call doubles every gradient.
    void backward(VarId loss) {
        if (node(loss).numel() != 1) {
            throw ContractError("backward: loss has shape " +
                                shape_string(node(loss).shape) + ", expected a scalar");
        }
        std::vector<std::vector<T>> adj(nodes_.size());
        adj[loss.index].assign(1, T(1));
        for (std::size_t idx = loss.index + 1; idx-- > 0;) {
            Node& n = nodes_[idx];
            if (adj[idx].empty() || !n.requires_grad) {
                continue;
            }
            backward_node(idx, n, adj);
        }
        for (Node& n : nodes_) {
            if (n.kind == Op::leaf && n.requires_grad && n.grad.empty()) {
                n.grad.assign(n.numel(), T(0));
            }
        }
        for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
            Node& n = nodes_[idx];
            if (n.kind == Op::leaf && n.requires_grad && !adj[idx].empty()) {
                for (std::size_t i = 0; i < n.grad.size(); ++i) {
                    n.grad[i] += adj[idx][i];
                }
            }
        }
    }

    void zero_grad() {
        for (Node& n : nodes_) {
            std::fill(n.grad.begin(), n.grad.end(), T(0));
        }
    }

    // ---- access -------------------------------------------------------

    std::span<const T> values(VarId id) const { return {data(id), node(id).numel()}; }
    const std::vector<std::size_t>& shape(VarId id) const { return node(id).shape; }

    Tensor<T> value_copy(VarId id) const {
        return Tensor<T>(node(id).shape, std::vector<T>(data(id), data(id) + node(id).numel()));
    }

    T scalar(VarId id) const {
        if (node(id).numel() != 1) {
            throw ContractError("scalar: node is not a scalar");
        }
        return data(id)[0];
    }

    /// Persistent gradient of a leaf; empty until backward has run.
    std::span<const T> grad(VarId id) const {
        const Node& n = node(id);
        if (n.kind != Op::leaf || !n.requires_grad) {
            throw ContractError("grad: gradients are retained on tracked leaves only");
        }
        return {n.grad.data(), n.grad.size()};
    }

    /// Mutable view of a leaf gradient, for callers that transform gradients
    /// in place (the masked baseline zeroes unselected entries here).
    std::span<T> grad_mutable(VarId id) {
        Node& n = node(id);
        if (n.kind != Op::leaf || !n.requires_grad) {
            throw ContractError("grad: gradients are retained on tracked leaves only");
        }
        return {n.grad.data(), n.grad.size()};
    }

    /// Bytes of gradient buffers held for tracked leaves (the per-step
    /// "grads" cost of whichever method drives this tape).
    std::size_t leaf_grad_bytes() const {
        std::size_t total = 0;
        for (const Node& n : nodes_) {
            if (n.kind == Op::leaf && n.requires_grad) {
                total += n.numel() * sizeof(T);
            }
        }
        return total;
    }

  private:
    enum class Op { leaf, linear, bypass, tanh_act, relu_act, sum_all, weighted, mse, softmax_ce };

    struct Node {
        Op kind = Op::leaf;
        std::array<std::size_t, 3> inputs{};
        std::size_t n_inputs = 0;
        std::vector<std::size_t> shape;
        std::vector<T> storage;
        const T* external = nullptr;
        std::vector<T> grad;
        bool requires_grad = false;
        std::vector<T> aux;           // op-specific: target / coeffs / softmax
        std::vector<int> labels;      // softmax_ce
        const WeightMatrix<T>* weight = nullptr;  // bypass
        const SelectionPlan* plan = nullptr;      // bypass

        std::size_t numel() const { return Tensor<T>::numel_of(shape); }
        const T* values() const { return external ? external : storage.data(); }
    };

    Node& node(VarId id) { return nodes_[id.index]; }
    const Node& node(VarId id) const { return nodes_[id.index]; }
    const T* data(VarId id) const { return node(id).values(); }

    Node make_op(Op kind, std::initializer_list<VarId> inputs,
                 std::vector<std::size_t> shape) {
        Node n;
        n.kind = kind;
        n.shape = std::move(shape);
        n.storage.assign(n.numel(), T(0));
        for (VarId in : inputs) {
            n.inputs[n.n_inputs++] = in.index;
            n.requires_grad = n.requires_grad || node(in).requires_grad;
        }
        return n;
    }

    VarId push(Node&& n) {
        nodes_.push_back(std::move(n));
        return VarId{nodes_.size() - 1};
    }

    bool same_numel(VarId a, const Tensor<T>& b) const { return node(a).numel() == b.numel(); }

    static void accumulate(std::vector<T>& dst, std::size_t size) {
        if (dst.empty()) {
            dst.assign(size, T(0));
        }
    }

    void backward_node(std::size_t idx, Node& n, std::vector<std::vector<T>>& adj) {
        const std::vector<T>& go = adj[idx];
        switch (n.kind) {
            case Op::leaf:
                break;
            case Op::linear: {
                Node& xn = nodes_[n.inputs[0]];
                Node& wn = nodes_[n.inputs[1]];
                Node& bn = nodes_[n.inputs[2]];
                const std::size_t batch = xn.shape[0], d_out = wn.shape[0], d_in = wn.shape[1];
                const T* xd = xn.values();
                const T* wd = wn.values();
                if (xn.requires_grad) {
                    accumulate(adj[n.inputs[0]], xn.numel());
                    T* gx = adj[n.inputs[0]].data();
                    for (std::size_t nn = 0; nn < batch; ++nn) {
                        for (std::size_t i = 0; i < d_out; ++i) {
                            const T g = go[nn * d_out + i];
                            const T* wi = wd + i * d_in;
                            T* gxn = gx + nn * d_in;
                            for (std::size_t j = 0; j < d_in; ++j) {
                                gxn[j] += g * wi[j];
                            }
                        }
                    }
                }
                if (wn.requires_grad) {
                    accumulate(adj[n.inputs[1]], wn.numel());
                    T* gw = adj[n.inputs[1]].data();
                    for (std::size_t i = 0; i < d_out; ++i) {
                        for (std::size_t j = 0; j < d_in; ++j) {
                            T acc = T(0);
                            for (std::size_t nn = 0; nn < batch; ++nn) {
                                acc += go[nn * d_out + i] * xd[nn * d_in + j];
                            }
                            gw[i * d_in + j] += acc;
                        }
                    }
                }
                if (bn.requires_grad) {
                    accumulate(adj[n.inputs[2]], bn.numel());
                    T* gb = adj[n.inputs[2]].data();
                    for (std::size_t i = 0; i < d_out; ++i) {
                        T acc = T(0);
                        for (std::size_t nn = 0; nn < batch; ++nn) {
                            acc += go[nn * d_out + i];
                        }
                        gb[i] += acc;
                    }
                }
                break;
            }
            case Op::bypass: {
                Node& xn = nodes_[n.inputs[0]];
                Node& tn = nodes_[n.inputs[1]];
                Tensor<T> got(n.shape, go);
                Tensor<T> xt(xn.shape, std::vector<T>(xn.values(), xn.values() + xn.numel()));
                BypassGrads<T> g =
                    bypass_backward_kernel(got, xt, *n.weight, *n.plan, tn.values());
                if (tn.requires_grad) {
                    accumulate(adj[n.inputs[1]], tn.numel());
                    T* gt = adj[n.inputs[1]].data();
                    for (std::size_t i = 0; i < g.theta.size(); ++i) {
                        gt[i] += g.theta[i];
                    }
                }
                if (xn.requires_grad) {
                    accumulate(adj[n.inputs[0]], xn.numel());
                    T* gx = adj[n.inputs[0]].data();
                    for (std::size_t i = 0; i < g.x.data.size(); ++i) {
                        gx[i] += g.x.data[i];
                    }
                }
                break;
            }
            case Op::tanh_act: {
                Node& xn = nodes_[n.inputs[0]];
                if (!xn.requires_grad) {
                    break;
                }
                accumulate(adj[n.inputs[0]], xn.numel());
                T* gx = adj[n.inputs[0]].data();
                for (std::size_t i = 0; i < n.storage.size(); ++i) {
                    gx[i] += go[i] * (T(1) - n.storage[i] * n.storage[i]);
                }
                break;
            }
            case Op::relu_act: {
                Node& xn = nodes_[n.inputs[0]];
                if (!xn.requires_grad) {
                    break;
                }
                accumulate(adj[n.inputs[0]], xn.numel());
                T* gx = adj[n.inputs[0]].data();
                for (std::size_t i = 0; i < n.storage.size(); ++i) {
                    gx[i] += n.storage[i] > T(0) ? go[i] : T(0);
                }
                break;
            }
            case Op::sum_all: {
                Node& xn = nodes_[n.inputs[0]];
                if (!xn.requires_grad) {
                    break;
                }
                accumulate(adj[n.inputs[0]], xn.numel());
                T* gx = adj[n.inputs[0]].data();
                for (std::size_t i = 0; i < xn.numel(); ++i) {
                    gx[i] += go[0];
                }
                break;
            }
            case Op::weighted: {
                Node& xn = nodes_[n.inputs[0]];
                if (!xn.requires_grad) {
                    break;
                }
                accumulate(adj[n.inputs[0]], xn.numel());
                T* gx = adj[n.inputs[0]].data();
                for (std::size_t i = 0; i < xn.numel(); ++i) {
                    gx[i] += go[0] * n.aux[i];
                }
                break;
            }
            case Op::mse: {
                Node& pn = nodes_[n.inputs[0]];
                if (!pn.requires_grad) {
                    break;
                }
                accumulate(adj[n.inputs[0]], pn.numel());
                T* gp = adj[n.inputs[0]].data();
                const T* pd = pn.values();
                const T scale = go[0] * T(2) / static_cast<T>(n.aux.size());
                for (std::size_t i = 0; i < n.aux.size(); ++i) {
                    gp[i] += scale * (pd[i] - n.aux[i]);
                }
                break;
            }
            case Op::softmax_ce: {
                Node& ln = nodes_[n.inputs[0]];
                if (!ln.requires_grad) {
                    break;
                }
                accumulate(adj[n.inputs[0]], ln.numel());
                T* gl = adj[n.inputs[0]].data();
                const std::size_t batch = ln.shape[0], classes = ln.shape[1];
                const T scale = go[0] / static_cast<T>(batch);
                for (std::size_t nn = 0; nn < batch; ++nn) {
                    for (std::size_t c = 0; c < classes; ++c) {
                        T p = n.aux[nn * classes + c];
                        if (c == static_cast<std::size_t>(n.labels[nn])) {
                            p -= T(1);
                        }
                        gl[nn * classes + c] += scale * p;
                    }
                }
                break;
            }
        }
    }

    std::vector<Node> nodes_;
};

/// Free-function form of the dense layer for callers that do not need a tape.
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const WeightMatrix<T>& w) {
    Tape<T> tape;
    VarId out = tape.linear(tape.leaf(x),
                            tape.leaf_view(w.values.data(), {w.rows, w.cols}),
                            tape.leaf_view(w.bias.data(), {w.rows}));
    return tape.value_copy(out);
}

/// Max relative error between reverse-mode and central-difference gradients
/// of a scalar-valued function at `point`. Runs in the caller's precision;
/// verification paths use double. `f` receives a fresh tape and the leaf for
/// the (possibly perturbed) point and must return a scalar node.
template <typename T, typename F>
double grad_check(F&& f, const Tensor<T>& point, T eps) {
    Tape<T> tape;
    VarId p = tape.leaf(point, /*requires_grad=*/true);
    VarId loss = f(tape, p);
    if (!std::isfinite(static_cast<double>(tape.scalar(loss)))) {
        throw NumericError("grad_check: non-finite loss at unperturbed point");
    }
    tape.backward(loss);
    std::vector<T> analytic(tape.grad(p).begin(), tape.grad(p).end());

    auto eval = [&](const Tensor<T>& at, std::size_t coord) {
        Tape<T> t;
        const T v = t.scalar(f(t, t.leaf(at)));
        if (!std::isfinite(static_cast<double>(v))) {
            throw NumericError("grad_check: non-finite value at coordinate " +
                               std::to_string(coord));
        }
        return v;
    };

    double max_rel = 0.0;
    Tensor<T> probe = point;
    for (std::size_t i = 0; i < point.numel(); ++i) {
        const T saved = probe.data[i];
        probe.data[i] = saved + eps;
        const double hi = eval(probe, i);
        probe.data[i] = saved - eps;
        const double lo = eval(probe, i);
        probe.data[i] = saved;
        const double numeric = (hi - lo) / (2.0 * static_cast<double>(eps));
        const double a = static_cast<double>(analytic[i]);
        const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace neuroada
