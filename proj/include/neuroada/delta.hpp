// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "neuroada/error.hpp"
#include "neuroada/tensor.hpp"

namespace neuroada {

/// One frozen linear sub-layer: dense weights W (rows = output neurons,
/// cols = input connections) plus a frozen bias. Values are never mutated
/// between load and merge.
template <typename T>
struct WeightMatrix {
    std::string name;
    std::size_t rows = 0;  // d_out
    std::size_t cols = 0;  // d_in
    std::vector<T> values; // row-major, rows*cols
    std::vector<T> bias;   // rows
    bool frozen = true;

    WeightMatrix() = default;
    WeightMatrix(std::string n, std::size_t d_out, std::size_t d_in)
        : name(std::move(n)), rows(d_out), cols(d_in), values(d_out * d_in, T(0)),
          bias(d_out, T(0)) {}

    T& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    const T& at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

/// Per-neuron column indices chosen before training: the sparsity pattern.
/// Row i owns indices[row_offset[i] .. row_offset[i+1]), strictly increasing.
/// Every row has exactly k entries unless a neuron-fraction restriction
/// emptied it. Plans are pure data: immutable once built, shareable.
struct SelectionPlan {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::uint32_t k = 0;
    std::vector<std::uint32_t> indices;    // flat, row-major
    std::vector<std::size_t> row_offset;   // rows+1 entries, prefix sums

    std::size_t row_count(std::size_t i) const { return row_offset[i + 1] - row_offset[i]; }
    const std::uint32_t* row_begin(std::size_t i) const { return indices.data() + row_offset[i]; }
    std::size_t nnz() const { return indices.size(); }

    bool operator==(const SelectionPlan&) const = default;

    /// Structural invariants: offsets well formed, per-row count in {0, k},
    /// indices strictly increasing and within [0, cols).
    void validate() const {
        if (row_offset.size() != rows + 1 || row_offset.front() != 0 ||
            row_offset.back() != indices.size()) {
            throw ContractError("SelectionPlan: malformed row offsets");
        }
        for (std::size_t i = 0; i < rows; ++i) {
            const std::size_t n = row_count(i);
            if (n != 0 && n != k) {
                throw ContractError("SelectionPlan: row " + std::to_string(i) +
                                    " has " + std::to_string(n) + " entries, expected 0 or " +
                                    std::to_string(k));
            }
            for (std::size_t s = 0; s < n; ++s) {
                const std::uint32_t j = row_begin(i)[s];
                if (j >= cols || (s > 0 && row_begin(i)[s - 1] >= j)) {
                    throw ContractError("SelectionPlan: row " + std::to_string(i) +
                                        " indices not strictly increasing in [0, cols)");
                }
            }
        }
    }
};

/// Declared storage width for delta values. Affects byte accounting and the
/// on-disk encoding tag only; runtime arithmetic is always in T.
enum class StorageWidth : std::uint8_t { half = 0, single = 1 };

inline std::size_t width_bytes(StorageWidth w) {
    return w == StorageWidth::half ? 2 : 4;
}

/// Bytes per stored column index: 2 suffice while d_in fits in 16 bits.
inline std::size_t index_bytes(std::size_t d_in) {
    return d_in <= 65536 ? 2 : 4;
}

/// The trainable bypass values, positionally aligned with a SelectionPlan.
/// Zero-initialized; consumed (unusable) once merged into the base weights.
template <typename T>
struct SparseDelta {
    SelectionPlan plan;
    std::vector<T> values;  // aligned with plan.indices
    StorageWidth width = StorageWidth::half;
    bool consumed = false;

    std::size_t nnz() const { return values.size(); }

    /// Accounted storage bytes: one value at the declared width plus one
    /// index per selected coordinate.
    std::size_t storage_bytes() const {
        return nnz() * (width_bytes(width) + index_bytes(plan.cols));
    }
};

namespace detail {

template <typename T>
inline void check_plan_matches(const SelectionPlan& plan, const WeightMatrix<T>& w,
                               const char* op) {
    if (plan.rows != w.rows || plan.cols != w.cols) {
        throw ContractError(std::string(op) + ": plan " + shape_string({plan.rows, plan.cols}) +
                            " was not derived from matrix '" + w.name + "' " +
                            shape_string({w.rows, w.cols}));
    }
}

template <typename T>
inline void check_live(const SparseDelta<T>& d, const char* op) {
    if (d.consumed) {
        throw LifecycleError(std::string(op) + ": delta was already merged and is consumed");
    }
}

}  // namespace detail

/// Top-k highest-|W[i,j]| columns per row, ties broken toward the lower
/// column index. A pure function of (W, k): task-agnostic and deterministic.
template <typename T>
SelectionPlan select_topk_magnitude(const WeightMatrix<T>& w, std::uint32_t k) {
    if (k < 1 || k > w.cols) {
        throw ParamError("select_topk_magnitude: k=" + std::to_string(k) +
                         " outside [1, d_in=" + std::to_string(w.cols) + "]");
    }
    SelectionPlan plan;
    plan.rows = w.rows;
    plan.cols = w.cols;
    plan.k = k;
    plan.row_offset.assign(w.rows + 1, 0);
    plan.indices.reserve(w.rows * k);
    std::vector<std::uint32_t> order(w.cols);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const T* row = w.values.data() + i * w.cols;
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(), [row](std::uint32_t a, std::uint32_t b) {
            const T ma = std::abs(row[a]);
            const T mb = std::abs(row[b]);
            return ma != mb ? ma > mb : a < b;
        });
        order.resize(k);
        std::sort(order.begin(), order.end());
        plan.indices.insert(plan.indices.end(), order.begin(), order.end());
        plan.row_offset[i + 1] = plan.indices.size();
        order.resize(w.cols);
    }
    return plan;
}

/// Fresh all-zero delta aligned with `plan`.
template <typename T>
SparseDelta<T> init_delta(const SelectionPlan& plan, StorageWidth width) {
    plan.validate();
    SparseDelta<T> d;
    d.plan = plan;
    d.values.assign(plan.nnz(), T(0));
    d.width = width;
    return d;
}

/// Gradients of the bypass layer given upstream grad_out.
template <typename T>
struct BypassGrads {
    std::vector<T> theta;  // aligned with delta.values
    Tensor<T> x;           // dL/dx through both frozen and delta paths
};

/// Kernel form of the bypass forward: theta values supplied as a raw span so
/// a training loop can keep them in its own buffers.
///
///   out[n,i] = sum_j (W[i,j] + Delta[i,j]) * x[n,j] + b[i]
///
/// The row walk folds theta into the frozen weight at the k selected
/// coordinates on the fly; no dense mask or dense Delta is ever allocated.
/// The j-ascending accumulation order is identical to linear_forward's, which
/// is what makes post-merge forward outputs bit-equal to this one.
template <typename T>
Tensor<T> bypass_forward_kernel(const Tensor<T>& x, const WeightMatrix<T>& w,
                                const SelectionPlan& plan, const T* theta_values) {
    detail::check_plan_matches(plan, w, "bypass_forward");
    if (x.shape.size() != 2 || x.shape[1] != w.cols) {
        throw ShapeError("bypass_forward: x " + shape_string(x.shape) + " vs W " +
                         shape_string({w.rows, w.cols}));
    }
    const std::size_t batch = x.shape[0];
    Tensor<T> out({batch, w.rows});
    for (std::size_t n = 0; n < batch; ++n) {
        const T* xn = x.data.data() + n * w.cols;
        for (std::size_t i = 0; i < w.rows; ++i) {
            const T* wi = w.values.data() + i * w.cols;
            const std::uint32_t* sel = plan.row_begin(i);
            const std::size_t sel_n = plan.row_count(i);
            const T* theta = theta_values + plan.row_offset[i];
            T acc = T(0);
            std::size_t s = 0;
            for (std::size_t j = 0; j < w.cols; ++j) {
                T wij = wi[j];
                if (s < sel_n && sel[s] == j) {
                    wij += theta[s];
                    ++s;
                }
                acc += wij * xn[j];
            }
            out.at(n, i) = acc + w.bias[i];
        }
    }
    return out;
}

/// theta_g[i,slot(j)] = sum_n grad_out[n,i] * x[n,j] for selected j only;
/// x_g[n,j] = sum_i grad_out[n,i] * (W[i,j] + Delta[i,j]).
template <typename T>
BypassGrads<T> bypass_backward_kernel(const Tensor<T>& grad_out, const Tensor<T>& x,
                                      const WeightMatrix<T>& w, const SelectionPlan& plan,
                                      const T* theta_values) {
    detail::check_plan_matches(plan, w, "bypass_backward");
    if (grad_out.shape.size() != 2 || x.shape.size() != 2 || grad_out.shape[0] != x.shape[0] ||
        grad_out.shape[1] != w.rows || x.shape[1] != w.cols) {
        throw ShapeError("bypass_backward: grad_out " + shape_string(grad_out.shape) + ", x " +
                         shape_string(x.shape) + " vs W " + shape_string({w.rows, w.cols}));
    }
    const std::size_t batch = x.shape[0];
    BypassGrads<T> g;
    g.theta.assign(plan.nnz(), T(0));
    g.x = Tensor<T>({batch, w.cols});
    for (std::size_t i = 0; i < w.rows; ++i) {
        const std::uint32_t* sel = plan.row_begin(i);
        const std::size_t sel_n = plan.row_count(i);
        T* tg = g.theta.data() + plan.row_offset[i];
        for (std::size_t s = 0; s < sel_n; ++s) {
            const std::size_t j = sel[s];
            T acc = T(0);
            for (std::size_t n = 0; n < batch; ++n) {
                acc += grad_out.at(n, i) * x.at(n, j);
            }
            tg[s] = acc;
        }
    }
    for (std::size_t n = 0; n < batch; ++n) {
        const T* gn = grad_out.data.data() + n * w.rows;
        T* xg = g.x.data.data() + n * w.cols;
        for (std::size_t i = 0; i < w.rows; ++i) {
            const T* wi = w.values.data() + i * w.cols;
            const std::uint32_t* sel = plan.row_begin(i);
            const std::size_t sel_n = plan.row_count(i);
            const T* theta = theta_values + plan.row_offset[i];
            const T gni = gn[i];
            std::size_t s = 0;
            for (std::size_t j = 0; j < w.cols; ++j) {
                T wij = wi[j];
                if (s < sel_n && sel[s] == j) {
                    wij += theta[s];
                    ++s;
                }
                xg[j] += gni * wij;
            }
        }
    }
    return g;
}

/// Forward pass of the adapted layer, frozen path plus the trainable bypass.
template <typename T>
Tensor<T> bypass_forward(const Tensor<T>& x, const WeightMatrix<T>& w,
                         const SparseDelta<T>& delta) {
    detail::check_live(delta, "bypass_forward");
    return bypass_forward_kernel(x, w, delta.plan, delta.values.data());
}

template <typename T>
BypassGrads<T> bypass_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                               const WeightMatrix<T>& w, const SparseDelta<T>& delta) {
    detail::check_live(delta, "bypass_backward");
    return bypass_backward_kernel(grad_out, x, w, delta.plan, delta.values.data());
}

/// One-shot merge: W[i,j] += theta at selected coordinates, then the delta is
/// consumed. Exact-zero thetas are skipped so an untouched delta leaves the
/// matrix bit-identical (including -0.0 weights).
template <typename T>
void merge_in_place(WeightMatrix<T>& w, SparseDelta<T>& delta) {
    detail::check_plan_matches(delta.plan, w, "merge_in_place");
    if (delta.consumed) {
        throw LifecycleError("merge_in_place: delta already merged once");
    }
    for (std::size_t i = 0; i < w.rows; ++i) {
        const std::uint32_t* sel = delta.plan.row_begin(i);
        const std::size_t sel_n = delta.plan.row_count(i);
        const T* theta = delta.values.data() + delta.plan.row_offset[i];
        for (std::size_t s = 0; s < sel_n; ++s) {
            if (theta[s] != T(0)) {
                w.at(i, sel[s]) += theta[s];
            }
        }
    }
    delta.consumed = true;
}

}  // namespace neuroada
