// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "neuroada/autodiff.hpp"
#include "neuroada/delta.hpp"
#include "neuroada/error.hpp"
#include "neuroada/rng.hpp"

namespace neuroada {

enum class StrategyKind { magnitude, gradient, reverse, random };

inline const char* strategy_name(StrategyKind s) {
    switch (s) {
        case StrategyKind::magnitude: return "magnitude";
        case StrategyKind::gradient: return "gradient";
        case StrategyKind::reverse: return "reverse";
        case StrategyKind::random: return "random";
    }
    return "?";
}

inline StrategyKind parse_strategy(const std::string& s) {
    if (s == "magnitude") return StrategyKind::magnitude;
    if (s == "gradient") return StrategyKind::gradient;
    if (s == "reverse") return StrategyKind::reverse;
    if (s == "random") return StrategyKind::random;
    throw ParamError("unknown selection strategy '" + s +
                     "' (expected magnitude|gradient|reverse|random)");
}

/// Per-row top-k over an arbitrary score matrix, the comparator shared by
/// every criterion: higher score wins, ties broken toward the lower column.
template <typename T>
SelectionPlan topk_by_score(const std::vector<T>& scores, std::size_t rows, std::size_t cols,
                            std::uint32_t k) {
    if (k < 1 || k > cols) {
        throw ParamError("topk_by_score: k=" + std::to_string(k) + " outside [1, d_in=" +
                         std::to_string(cols) + "]");
    }
    SelectionPlan plan;
    plan.rows = rows;
    plan.cols = cols;
    plan.k = k;
    plan.row_offset.assign(rows + 1, 0);
    plan.indices.reserve(rows * k);
    std::vector<std::uint32_t> order(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const T* row = scores.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) {
            order[j] = static_cast<std::uint32_t>(j);
        }
        std::sort(order.begin(), order.end(), [row](std::uint32_t a, std::uint32_t b) {
            return row[a] != row[b] ? row[a] > row[b] : a < b;
        });
        order.resize(k);
        std::sort(order.begin(), order.end());
        plan.indices.insert(plan.indices.end(), order.begin(), order.end());
        plan.row_offset[i + 1] = plan.indices.size();
        order.resize(cols);
    }
    return plan;
}

/// Lowest-magnitude selection ("reverse" in the strategy sweep).
template <typename T>
SelectionPlan select_reverse(const WeightMatrix<T>& w, std::uint32_t k) {
    std::vector<T> scores(w.values.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = -std::abs(w.values[i]);
    }
    return topk_by_score(scores, w.rows, w.cols, k);
}

/// k distinct uniform columns per row, drawn from a SplitMix64 stream keyed
/// by (seed, row). Pure function of its arguments; identical across runs and
/// platforms.
template <typename T>
SelectionPlan select_random(const WeightMatrix<T>& w, std::uint32_t k, std::uint64_t seed) {
    if (k < 1 || k > w.cols) {
        throw ParamError("select_random: k=" + std::to_string(k) + " outside [1, d_in=" +
                         std::to_string(w.cols) + "]");
    }
    SelectionPlan plan;
    plan.rows = w.rows;
    plan.cols = w.cols;
    plan.k = k;
    plan.row_offset.assign(w.rows + 1, 0);
    plan.indices.reserve(w.rows * k);
    for (std::size_t i = 0; i < w.rows; ++i) {
        SplitMix64 rng = SplitMix64::keyed(seed, i);
        auto picks = sample_distinct_sorted(rng, k, static_cast<std::uint32_t>(w.cols));
        plan.indices.insert(plan.indices.end(), picks.begin(), picks.end());
        plan.row_offset[i + 1] = plan.indices.size();
    }
    return plan;
}

/// One warmup example batch for gradient-guided selection. `labels` is used
/// by the cross-entropy loss, `y` by mse; `sum_outputs` ignores both.
template <typename T>
struct WarmupBatch {
    Tensor<T> x;
    Tensor<T> y;
    std::vector<int> labels;
};

enum class SelectionLoss { mse, softmax_ce, sum_outputs };

/// Per-row top-k of |dL/dW[i,j]| summed over warmup batches (sum of per-batch
/// absolute gradients, which is robust to sign cancellation across batches).
/// Uses the dense reverse-mode path; ranking is invariant under positive
/// scaling of the loss.
template <typename T>
SelectionPlan select_by_gradient(const WeightMatrix<T>& w, std::uint32_t k,
                                 const std::vector<WarmupBatch<T>>& warmup,
                                 SelectionLoss loss_kind) {
    if (warmup.empty()) {
        throw ParamError("select_by_gradient: warmup batch set is empty");
    }
    if (k < 1 || k > w.cols) {
        throw ParamError("select_by_gradient: k=" + std::to_string(k) + " outside [1, d_in=" +
                         std::to_string(w.cols) + "]");
    }
    std::vector<T> scores(w.values.size(), T(0));
    for (const auto& batch : warmup) {
        Tape<T> tape;
        VarId wv = tape.leaf_view(w.values.data(), {w.rows, w.cols}, /*requires_grad=*/true);
        VarId bv = tape.leaf_view(w.bias.data(), {w.rows});
        VarId out = tape.linear(tape.leaf(batch.x), wv, bv);
        VarId loss;
        switch (loss_kind) {
            case SelectionLoss::mse: loss = tape.mse_loss(out, batch.y); break;
            case SelectionLoss::softmax_ce: loss = tape.softmax_cross_entropy(out, batch.labels); break;
            case SelectionLoss::sum_outputs: loss = tape.sum(out); break;
        }
        tape.backward(loss);
        auto g = tape.grad(wv);
        for (std::size_t i = 0; i < scores.size(); ++i) {
            scores[i] += std::abs(g[i]);
        }
    }
    return topk_by_score(scores, w.rows, w.cols, k);
}

/// Keep the rows of a uniformly sampled ceil(fraction * d_out)-subset of
/// neurons; excluded rows become empty. fraction=1 returns the plan
/// unchanged, fraction=0 empties every row.
inline SelectionPlan restrict_to_fraction(const SelectionPlan& plan, double fraction,
                                          std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw ParamError("restrict_to_fraction: fraction " + std::to_string(fraction) +
                         " outside [0, 1]");
    }
    const std::size_t keep =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(plan.rows)));
    if (keep >= plan.rows) {
        return plan;
    }
    SplitMix64 rng = SplitMix64::keyed(seed, 0x66726163ULL);  // fraction stream
    auto kept_rows = sample_distinct_sorted(rng, static_cast<std::uint32_t>(keep),
                                            static_cast<std::uint32_t>(plan.rows));
    std::vector<bool> kept(plan.rows, false);
    for (std::uint32_t r : kept_rows) {
        kept[r] = true;
    }
    SelectionPlan out;
    out.rows = plan.rows;
    out.cols = plan.cols;
    out.k = plan.k;
    out.row_offset.assign(plan.rows + 1, 0);
    for (std::size_t i = 0; i < plan.rows; ++i) {
        if (kept[i]) {
            out.indices.insert(out.indices.end(), plan.row_begin(i),
                               plan.row_begin(i) + plan.row_count(i));
        }
        out.row_offset[i + 1] = out.indices.size();
    }
    return out;
}

}  // namespace neuroada
