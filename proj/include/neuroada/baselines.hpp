// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "neuroada/autodiff.hpp"
#include "neuroada/delta.hpp"
#include "neuroada/error.hpp"
#include "neuroada/optim.hpp"
#include "neuroada/tasks.hpp"
#include "neuroada/train.hpp"

namespace neuroada {

/// Mask-based sparse tuning baseline: a dense trainable copy of W plus a
/// dense 0/1 mask of the same shape (one byte per entry, the way frameworks
/// actually store bool tensors). The dense gradient and dense optimizer
/// state this forces are the measured inefficiency, not an accident.
template <typename T>
struct MaskedLayer {
    WeightMatrix<T> weights;         // trainable copy; bias stays frozen
    std::vector<std::uint8_t> mask;  // rows*cols, 1 iff (i,j) in the plan

    static MaskedLayer from_plan(const WeightMatrix<T>& w, const SelectionPlan& plan) {
        detail::check_plan_matches(plan, w, "MaskedLayer::from_plan");
        MaskedLayer layer;
        layer.weights = w;
        layer.weights.frozen = false;
        layer.mask.assign(w.rows * w.cols, 0);
        for (std::size_t i = 0; i < plan.rows; ++i) {
            for (std::size_t s = 0; s < plan.row_count(i); ++s) {
                layer.mask[i * plan.cols + plan.row_begin(i)[s]] = 1;
            }
        }
        return layer;
    }

    std::size_t mask_bytes() const { return mask.size(); }
};

namespace detail {

template <typename T>
std::vector<T> dense_layer_grad(const WeightMatrix<T>& w, const Dataset<T>& batch,
                                LossKind loss_kind) {
    Tape<T> tape;
    VarId wv = tape.leaf_view(w.values.data(), {w.rows, w.cols}, /*requires_grad=*/true);
    VarId out = tape.linear(tape.leaf(batch.x), wv, tape.leaf_view(w.bias.data(), {w.rows}));
    VarId loss = loss_kind == LossKind::mse ? tape.mse_loss(out, batch.y)
                                            : tape.softmax_cross_entropy(out, batch.labels);
    tape.backward(loss);
    auto g = tape.grad(wv);
    return std::vector<T>(g.begin(), g.end());
}

}  // namespace detail

/// One optimizer step of mask-based sparse tuning on a single layer: the
/// full dense gradient is computed, multiplied elementwise by the mask, and
/// handed to the dense optimizer. Unselected coordinates never change.
template <typename T>
void masked_step(MaskedLayer<T>& layer, DenseAdamState<T>& opt, const Dataset<T>& batch,
                 T lr, LossKind loss_kind = LossKind::mse) {
    std::vector<T> g = detail::dense_layer_grad(layer.weights, batch, loss_kind);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!layer.mask[i]) {
            g[i] = T(0);
        }
    }
    adamw_dense_step(opt, layer.weights.values, g, lr, layer.mask.data());
}

/// One standard dense fine-tuning step on a single layer (the k = d_in
/// degeneracy reference).
template <typename T>
void full_finetune_step(WeightMatrix<T>& w, DenseAdamState<T>& opt, const Dataset<T>& batch,
                        T lr, LossKind loss_kind = LossKind::mse) {
    std::vector<T> g = detail::dense_layer_grad(w, batch, loss_kind);
    adamw_dense_step(opt, w.values, g, lr);
}

/// Max coordinate divergence of effective weights between two completed
/// runs. The runs must share seed, data order, plan, schedule and optimizer
/// hyperparameters; anything else is a contract violation, not a zero.
template <typename T>
double trajectory_compare(const RunTrace<T>& a, const RunTrace<T>& b) {
    if (!a.meta.compatible(b.meta)) {
        throw ContractError(
            "trajectory_compare: runs differ in seed/plan/schedule/optimizer configuration");
    }
    if (a.effective.size() != b.effective.size()) {
        throw ContractError("trajectory_compare: step counts differ");
    }
    double max_div = 0.0;
    for (std::size_t s = 0; s < a.effective.size(); ++s) {
        if (a.effective[s].size() != b.effective[s].size()) {
            throw ContractError("trajectory_compare: coordinate counts differ at step " +
                                std::to_string(s));
        }
        for (std::size_t i = 0; i < a.effective[s].size(); ++i) {
            max_div = std::max(max_div, std::abs(static_cast<double>(a.effective[s][i]) -
                                                 static_cast<double>(b.effective[s][i])));
        }
    }
    return max_div;
}

}  // namespace neuroada
