// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neuroada/delta.hpp"
#include "neuroada/error.hpp"

namespace neuroada {

/// AdamW hyperparameters. Betas/eps are the standard defaults; decay is
/// decoupled and applied to whatever parameter the state tracks (theta for
/// the bypass path, W for the dense baselines).
struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

namespace detail {

/// The single-coordinate AdamW update with bias correction. Every optimizer
/// path in the project funnels through this function, which is what makes
/// masked and bypass training trajectory-equivalent coordinate for
/// coordinate.
template <typename T>
inline void adamw_coord(T& param, T g, T& m, T& v, T lr, T bc1, T bc2, const AdamHyper& hp,
                        bool apply_decay) {
    const T b1 = static_cast<T>(hp.beta1);
    const T b2 = static_cast<T>(hp.beta2);
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g * g;
    const T m_hat = m / bc1;
    const T v_hat = v / bc2;
    T step = m_hat / (std::sqrt(v_hat) + static_cast<T>(hp.eps));
    if (apply_decay) {
        step += static_cast<T>(hp.weight_decay) * param;
    }
    param -= lr * step;
}

}  // namespace detail

/// First/second moments stored only at selected coordinates, shape-aligned
/// with a SparseDelta's values. Moment width is the training precision T,
/// so the live byte count is exactly 2 * nnz * sizeof(T).
template <typename T>
struct SparseAdamState {
    std::vector<T> m;
    std::vector<T> v;
    std::int64_t t = 0;
    AdamHyper hyper;

    explicit SparseAdamState(std::size_t nnz, AdamHyper hp = {})
        : m(nnz, T(0)), v(nnz, T(0)), hyper(hp) {}

    std::size_t state_bytes() const { return (m.size() + v.size()) * sizeof(T); }
};

/// One decoupled-decay adaptive step over the delta values. `grads` must be
/// slot-aligned with the delta; t increments exactly once per call.
template <typename T>
void adamw_sparse_step(SparseAdamState<T>& state, SparseDelta<T>& delta,
                       std::span<const T> grads, T lr) {
    if (grads.size() != delta.values.size() || state.m.size() != delta.values.size()) {
        throw ContractError("adamw_sparse_step: gradient length " +
                            std::to_string(grads.size()) + " not aligned with delta nnz " +
                            std::to_string(delta.values.size()));
    }
    state.t += 1;
    const T bc1 = T(1) - static_cast<T>(std::pow(state.hyper.beta1, state.t));
    const T bc2 = T(1) - static_cast<T>(std::pow(state.hyper.beta2, state.t));
    for (std::size_t i = 0; i < delta.values.size(); ++i) {
        detail::adamw_coord(delta.values[i], grads[i], state.m[i], state.v[i], lr, bc1, bc2,
                            state.hyper, true);
    }
}

/// Dense AdamW state for the masked and full baselines: two moment buffers
/// spanning the whole matrix, genuinely allocated (this cost is the measured
/// subject of the memory comparison).
template <typename T>
struct DenseAdamState {
    std::vector<T> m;
    std::vector<T> v;
    std::int64_t t = 0;
    AdamHyper hyper;

    explicit DenseAdamState(std::size_t n, AdamHyper hp = {}) : m(n, T(0)), v(n, T(0)), hyper(hp) {}

    std::size_t state_bytes() const { return (m.size() + v.size()) * sizeof(T); }
};

/// Dense step over all coordinates. When `apply_mask` is non-null, parameter
/// writes happen only where the mask is set (the gradient must already be
/// masked); moments still update over the full buffer, paying the dense cost.
template <typename T>
void adamw_dense_step(DenseAdamState<T>& state, std::vector<T>& params,
                      std::span<const T> grads, T lr, const std::uint8_t* apply_mask = nullptr) {
    if (grads.size() != params.size() || state.m.size() != params.size()) {
        throw ContractError("adamw_dense_step: gradient length " + std::to_string(grads.size()) +
                            " not aligned with parameter count " + std::to_string(params.size()));
    }
    state.t += 1;
    const T bc1 = T(1) - static_cast<T>(std::pow(state.hyper.beta1, state.t));
    const T bc2 = T(1) - static_cast<T>(std::pow(state.hyper.beta2, state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (apply_mask && !apply_mask[i]) {
            // moments of a masked coordinate decay from zero and stay zero;
            // the parameter itself never changes
            const T b1 = static_cast<T>(state.hyper.beta1);
            const T b2 = static_cast<T>(state.hyper.beta2);
            state.m[i] = b1 * state.m[i];
            state.v[i] = b2 * state.v[i];
            continue;
        }
        detail::adamw_coord(params[i], grads[i], state.m[i], state.v[i], lr, bc1, bc2,
                            state.hyper, true);
    }
}

/// Linear learning-rate schedule with warmup: lr rises 0 -> base over
/// round(warmup_ratio * total_steps) steps, then decays base -> 0 at
/// total_steps. Continuous and piecewise-linear with its maximum at the end
/// of warmup.
struct LrSchedule {
    double warmup_ratio = 0.0;
    std::int64_t total_steps = 1;

    LrSchedule() = default;
    LrSchedule(double warmup, std::int64_t total) : warmup_ratio(warmup), total_steps(total) {
        if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) {
            throw ParamError("LrSchedule: warmup_ratio " + std::to_string(warmup_ratio) +
                             " outside [0, 1]");
        }
        if (total_steps < 1) {
            throw ParamError("LrSchedule: total_steps must be >= 1");
        }
    }

    std::int64_t warmup_steps() const {
        auto w = std::llround(warmup_ratio * static_cast<double>(total_steps));
        return std::min<std::int64_t>(w, total_steps - 1);
    }
};

inline double lr_at(const LrSchedule& schedule, std::int64_t step, double base) {
    if (step < 0 || step > schedule.total_steps) {
        throw ParamError("lr_at: step " + std::to_string(step) + " outside [0, " +
                         std::to_string(schedule.total_steps) + "]");
    }
    const std::int64_t warmup = schedule.warmup_steps();
    if (warmup > 0 && step <= warmup) {
        return base * static_cast<double>(step) / static_cast<double>(warmup);
    }
    return base * static_cast<double>(schedule.total_steps - step) /
           static_cast<double>(schedule.total_steps - warmup);
}

}  // namespace neuroada
