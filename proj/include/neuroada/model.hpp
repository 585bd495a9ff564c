// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuroada/autodiff.hpp"
#include "neuroada/delta.hpp"
#include "neuroada/error.hpp"
#include "neuroada/rng.hpp"
#include "neuroada/tensor.hpp"

namespace neuroada {

enum class Activation { tanh, relu, none };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::none: return "none";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "none") return Activation::none;
    throw ParamError("unknown activation '" + s + "' (expected tanh|relu|none)");
}

/// Multilayer perceptron: a stack of linear sub-layers named fc0, fc1, ...
/// with the activation applied between layers (never after the last).
template <typename T>
struct Mlp {
    std::vector<WeightMatrix<T>> layers;
    Activation activation = Activation::tanh;

    static Mlp random(const std::vector<std::size_t>& sizes, Activation act, SplitMix64& rng) {
        if (sizes.size() < 2) {
            throw ParamError("Mlp: need at least [input, output] sizes");
        }
        Mlp m;
        m.activation = act;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            WeightMatrix<T> w("fc" + std::to_string(l), sizes[l + 1], sizes[l]);
            const double scale = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
            for (auto& v : w.values) {
                v = static_cast<T>(rng.next_gauss() * scale);
            }
            for (auto& b : w.bias) {
                b = static_cast<T>(rng.next_gauss() * 0.01);
            }
            m.layers.push_back(std::move(w));
        }
        return m;
    }

    std::size_t input_dim() const { return layers.front().cols; }
    std::size_t output_dim() const { return layers.back().rows; }

    std::vector<std::size_t> sizes() const {
        std::vector<std::size_t> s{input_dim()};
        for (const auto& l : layers) {
            s.push_back(l.rows);
        }
        return s;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) {
            n += l.values.size() + l.bias.size();
        }
        return n;
    }

    std::size_t weight_bytes() const {
        std::size_t n = 0;
        for (const auto& l : layers) {
            n += (l.values.size() + l.bias.size()) * sizeof(T);
        }
        return n;
    }

    /// Layers that receive deltas by default: every linear sub-layer except
    /// the output head (the final projection), which stays frozen unless the
    /// config includes it explicitly. A single-layer model adapts its one
    /// layer.
    std::vector<std::size_t> default_adapted() const {
        std::vector<std::size_t> out;
        const std::size_t n = layers.size() == 1 ? 1 : layers.size() - 1;
        for (std::size_t l = 0; l < n; ++l) {
            out.push_back(l);
        }
        return out;
    }

    std::size_t min_adapted_cols(const std::vector<std::size_t>& adapted) const {
        std::size_t m = SIZE_MAX;
        for (std::size_t l : adapted) {
            m = std::min(m, layers[l].cols);
        }
        return m;
    }

    bool bit_equal(const Mlp& other) const {
        if (layers.size() != other.layers.size()) {
            return false;
        }
        for (std::size_t l = 0; l < layers.size(); ++l) {
            Tensor<T> a({layers[l].rows, layers[l].cols}, layers[l].values);
            Tensor<T> b({other.layers[l].rows, other.layers[l].cols}, other.layers[l].values);
            Tensor<T> ab({layers[l].rows}, layers[l].bias);
            Tensor<T> bb({other.layers[l].rows}, other.layers[l].bias);
            if (!a.bit_equal(b) || !ab.bit_equal(bb)) {
                return false;
            }
        }
        return true;
    }
};

namespace detail {

template <typename T>
inline VarId apply_activation(Tape<T>& tape, VarId h, Activation act) {
    switch (act) {
        case Activation::tanh: return tape.tanh(h);
        case Activation::relu: return tape.relu(h);
        case Activation::none: return h;
    }
    return h;
}

}  // namespace detail

/// Frozen forward: every weight is a constant view; no gradients anywhere.
template <typename T>
VarId model_forward_plain(Tape<T>& tape, const Mlp<T>& model, VarId x) {
    VarId h = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& w = model.layers[l];
        h = tape.linear(h, tape.leaf_view(w.values.data(), {w.rows, w.cols}),
                        tape.leaf_view(w.bias.data(), {w.rows}));
        if (l + 1 < model.layers.size()) {
            h = detail::apply_activation(tape, h, model.activation);
        }
    }
    return h;
}

/// Bypass forward: adapted layers run frozen-W-plus-theta, the rest run
/// plain. theta leaves view the deltas' value buffers; their ids are
/// returned aligned with `adapted` so the caller can read gradients.
template <typename T>
VarId model_forward_bypass(Tape<T>& tape, const Mlp<T>& model,
                           const std::vector<std::size_t>& adapted,
                           const std::vector<SparseDelta<T>>& deltas, VarId x,
                           std::vector<VarId>* theta_leaves) {
    if (theta_leaves) {
        theta_leaves->clear();
    }
    VarId h = x;
    std::size_t a = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& w = model.layers[l];
        if (a < adapted.size() && adapted[a] == l) {
            const SparseDelta<T>& d = deltas[a];
            VarId theta =
                tape.leaf_view(d.values.data(), {d.values.size()}, /*requires_grad=*/true);
            if (theta_leaves) {
                theta_leaves->push_back(theta);
            }
            h = tape.bypass_linear(h, theta, &w, &d.plan);
            ++a;
        } else {
            h = tape.linear(h, tape.leaf_view(w.values.data(), {w.rows, w.cols}),
                            tape.leaf_view(w.bias.data(), {w.rows}));
        }
        if (l + 1 < model.layers.size()) {
            h = detail::apply_activation(tape, h, model.activation);
        }
    }
    return h;
}

/// Dense forward with the listed layers trainable (their W leaves carry
/// gradients); biases stay frozen everywhere. Used by the masked and full
/// baselines and by gradient-guided selection.
template <typename T>
VarId model_forward_dense(Tape<T>& tape, const Mlp<T>& model,
                          const std::vector<std::size_t>& trainable, VarId x,
                          std::vector<VarId>* w_leaves) {
    if (w_leaves) {
        w_leaves->clear();
    }
    VarId h = x;
    std::size_t a = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& w = model.layers[l];
        const bool train = a < trainable.size() && trainable[a] == l;
        VarId wv = tape.leaf_view(w.values.data(), {w.rows, w.cols}, train);
        if (train) {
            if (w_leaves) {
                w_leaves->push_back(wv);
            }
            ++a;
        }
        h = tape.linear(h, wv, tape.leaf_view(w.bias.data(), {w.rows}));
        if (l + 1 < model.layers.size()) {
            h = detail::apply_activation(tape, h, model.activation);
        }
    }
    return h;
}

/// Tape-free forward used for evaluation: adapted layers fold in their
/// deltas when `deltas` is non-null, giving the same bits as the tape paths.
template <typename T>
Tensor<T> forward_effective(const Mlp<T>& model, const std::vector<std::size_t>& adapted,
                            const std::vector<SparseDelta<T>>* deltas, const Tensor<T>& x) {
    Tensor<T> h = x;
    std::size_t a = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& w = model.layers[l];
        if (deltas && a < adapted.size() && adapted[a] == l) {
            h = bypass_forward_kernel(h, w, (*deltas)[a].plan, (*deltas)[a].values.data());
            ++a;
        } else {
            h = linear_forward(h, w);
        }
        if (l + 1 < model.layers.size()) {
            for (auto& v : h.data) {
                v = model.activation == Activation::tanh ? std::tanh(v)
                    : model.activation == Activation::relu ? (v > T(0) ? v : T(0))
                                                           : v;
            }
        }
    }
    return h;
}

}  // namespace neuroada
