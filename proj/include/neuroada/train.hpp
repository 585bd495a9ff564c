// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "neuroada/autodiff.hpp"
#include "neuroada/config.hpp"
#include "neuroada/delta.hpp"
#include "neuroada/metrics.hpp"
#include "neuroada/model.hpp"
#include "neuroada/optim.hpp"
#include "neuroada/tasks.hpp"

namespace neuroada {

enum class Method { neuroada, masked, full };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::neuroada: return "neuroada";
        case Method::masked: return "masked";
        case Method::full: return "full";
    }
    return "?";
}

/// Hyperparameters a trajectory comparison must agree on before effective
/// weights are comparable step for step.
struct TraceMeta {
    std::string task;
    std::uint64_t seed = 0;
    double lr = 0.0;
    AdamHyper adam;
    double warmup_ratio = 0.0;
    std::int64_t steps = 0;
    std::int64_t batch_size = 0;
    std::uint64_t plan_digest = 0;

    bool compatible(const TraceMeta& o) const {
        return task == o.task && seed == o.seed && lr == o.lr && adam.beta1 == o.adam.beta1 &&
               adam.beta2 == o.adam.beta2 && adam.eps == o.adam.eps &&
               adam.weight_decay == o.adam.weight_decay && warmup_ratio == o.warmup_ratio &&
               steps == o.steps && batch_size == o.batch_size && plan_digest == o.plan_digest;
    }
};

/// Per-step snapshots of the effective weights at plan coordinates
/// (W + theta for the bypass method, the trained W for the baselines).
template <typename T>
struct RunTrace {
    TraceMeta meta;
    std::vector<std::vector<T>> effective;  // [step][flattened selected coords]
};

inline std::uint64_t plan_digest(const std::vector<SelectionPlan>& plans) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    for (const auto& p : plans) {
        mix(p.rows);
        mix(p.cols);
        mix(p.k);
        for (auto o : p.row_offset) {
            mix(o);
        }
        for (auto i : p.indices) {
            mix(i);
        }
    }
    return h;
}

template <typename T>
struct EvalResult {
    double loss = 0.0;
    double metric = 0.0;
};

/// Validation loss and metric under the current effective weights. Uses the
/// same fixed-order kernels as training, so identical states give identical
/// numbers bit for bit.
template <typename T>
EvalResult<T> evaluate(const Mlp<T>& model, const std::vector<std::size_t>& adapted,
                       const std::vector<SparseDelta<T>>* deltas, const Dataset<T>& set,
                       LossKind loss_kind, MetricKind metric_kind) {
    Tensor<T> pred = forward_effective(model, adapted, deltas, set.x);
    EvalResult<T> r;
    if (loss_kind == LossKind::mse) {
        T acc = T(0);
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            const T d = pred.data[i] - set.y.data[i];
            acc += d * d;
        }
        r.loss = static_cast<double>(acc / static_cast<T>(pred.data.size()));
    } else {
        const std::size_t classes = pred.cols();
        T total = T(0);
        for (std::size_t n = 0; n < pred.rows(); ++n) {
            const T* row = pred.data.data() + n * classes;
            T m = row[0];
            for (std::size_t c = 1; c < classes; ++c) {
                if (row[c] > m) {
                    m = row[c];
                }
            }
            T z = T(0);
            for (std::size_t c = 0; c < classes; ++c) {
                z += std::exp(row[c] - m);
            }
            total += std::log(z) - (row[static_cast<std::size_t>(set.labels[n])] - m);
        }
        r.loss = static_cast<double>(total / static_cast<T>(pred.rows()));
    }
    if (metric_kind == MetricKind::neg_mse) {
        r.metric = -r.loss;
    } else {
        std::size_t hits = 0;
        const std::size_t classes = pred.cols();
        for (std::size_t n = 0; n < pred.rows(); ++n) {
            const T* row = pred.data.data() + n * classes;
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes; ++c) {
                if (row[c] > row[best]) {
                    best = c;
                }
            }
            hits += best == static_cast<std::size_t>(set.labels[n]);
        }
        r.metric = static_cast<double>(hits) / static_cast<double>(pred.rows());
    }
    return r;
}

template <typename T>
struct TrainResult {
    Report report;
    RunTrace<T> trace;
    Mlp<T> model;                        // final weights (bypass method: frozen base)
    std::vector<std::size_t> adapted;    // trainable/adapted layer indices
    std::vector<SparseDelta<T>> deltas;  // bypass method only
    double final_loss = 0.0;             // validation loss after training
    double final_metric = 0.0;
    ByteCounts peak_bytes;
    std::int64_t steps = 0;
    double timed_seconds = 0.0;  // sum of per-step wall time
};

struct TrainOptions {
    bool record_trace = false;
    bool log_records = true;
};

namespace detail {

template <typename T>
Dataset<T> gather_batch(const Dataset<T>& set, const std::vector<std::uint32_t>& order,
                        std::size_t begin, std::size_t count) {
    Dataset<T> b;
    b.x = Tensor<T>({count, set.x.cols()});
    if (set.y.numel() > 0) {
        b.y = Tensor<T>({count, set.y.cols()});
    }
    if (!set.labels.empty()) {
        b.labels.resize(count);
    }
    for (std::size_t r = 0; r < count; ++r) {
        const std::size_t src = order[begin + r];
        for (std::size_t c = 0; c < set.x.cols(); ++c) {
            b.x.at(r, c) = set.x.at(src, c);
        }
        if (b.y.numel() > 0) {
            for (std::size_t c = 0; c < set.y.cols(); ++c) {
                b.y.at(r, c) = set.y.at(src, c);
            }
        }
        if (!b.labels.empty()) {
            b.labels[r] = set.labels[src];
        }
    }
    return b;
}

inline std::vector<std::uint32_t> epoch_order(std::size_t n, std::uint64_t seed,
                                              std::int64_t epoch) {
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = static_cast<std::uint32_t>(i);
    }
    SplitMix64 rng = SplitMix64::keyed(seed, 0x6f726465ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.next_below(i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

}  // namespace detail

/// The one training loop behind all three methods. `trainable_layers` are
/// the adapted layers for neuroada/masked and the trainable set for full
/// fine-tuning; `plans` must be aligned with it for neuroada/masked and may
/// be empty for full (pass plans to trace the same coordinates as a paired
/// run). Biases stay frozen under every method.
template <typename T>
TrainResult<T> train_run(const TrainConfig& cfg, Method method, const Mlp<T>& base_model,
                         const std::vector<std::size_t>& trainable_layers,
                         const std::vector<SelectionPlan>& plans, const TaskData<T>& data,
                         const TrainOptions& opt = {}) {
    using Clock = std::chrono::steady_clock;
    if ((method != Method::full || opt.record_trace) && plans.size() != trainable_layers.size()) {
        throw ContractError("train_run: plans not aligned with trainable layers");
    }
    const std::size_t train_n = data.train.size();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    if (batch > train_n) {
        throw ConfigError("batch_size: exceeds training set size " + std::to_string(train_n));
    }
    const std::int64_t steps_per_epoch = static_cast<std::int64_t>(train_n / batch);
    const std::int64_t total_steps =
        cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * steps_per_epoch;

    TrainResult<T> result;
    result.model = base_model;
    result.adapted = trainable_layers;
    result.steps = total_steps;
    result.trace.meta =
        TraceMeta{cfg.task,         cfg.seed,       cfg.lr,     cfg.adam,
                  cfg.warmup_ratio, total_steps,    cfg.batch_size, plan_digest(plans)};

    Mlp<T>& model = result.model;

    // per-method state
    std::vector<SparseAdamState<T>> sparse_opt;
    std::vector<DenseAdamState<T>> dense_opt;
    std::vector<std::vector<std::uint8_t>> masks;
    if (method == Method::neuroada) {
        for (const auto& plan : plans) {
            result.deltas.push_back(init_delta<T>(plan, cfg.delta_width));
            sparse_opt.emplace_back(plan.nnz(), cfg.adam);
        }
    } else {
        for (std::size_t a = 0; a < trainable_layers.size(); ++a) {
            const auto& w = model.layers[trainable_layers[a]];
            dense_opt.emplace_back(w.values.size(), cfg.adam);
            if (method == Method::masked) {
                std::vector<std::uint8_t> m(w.values.size(), 0);
                const SelectionPlan& plan = plans[a];
                for (std::size_t i = 0; i < plan.rows; ++i) {
                    for (std::size_t s = 0; s < plan.row_count(i); ++s) {
                        m[i * plan.cols + plan.row_begin(i)[s]] = 1;
                    }
                }
                masks.push_back(std::move(m));
            }
        }
    }

    auto byte_counts = [&](std::size_t tape_grad_bytes) {
        ByteCounts b;
        b.weights = model.weight_bytes();
        b.grads = tape_grad_bytes;
        for (const auto& s : sparse_opt) {
            b.optimizer += s.state_bytes();
        }
        for (const auto& s : dense_opt) {
            b.optimizer += s.state_bytes();
        }
        for (const auto& m : masks) {
            b.masks += m.size();
        }
        for (const auto& d : result.deltas) {
            b.deltas += d.storage_bytes();
        }
        return b;
    };

    auto eval_now = [&] {
        return evaluate(model, trainable_layers,
                        method == Method::neuroada ? &result.deltas : nullptr, data.val,
                        data.loss, data.metric);
    };

    auto snapshot_effective = [&] {
        std::vector<T> snap;
        for (std::size_t a = 0; a < plans.size(); ++a) {
            const SelectionPlan& plan = plans[a];
            const WeightMatrix<T>& w = model.layers[trainable_layers[a]];
            const T* theta =
                method == Method::neuroada ? result.deltas[a].values.data() : nullptr;
            for (std::size_t i = 0; i < plan.rows; ++i) {
                for (std::size_t s = 0; s < plan.row_count(i); ++s) {
                    const std::size_t slot = plan.row_offset[i] + s;
                    const T base = w.at(i, plan.row_begin(i)[s]);
                    snap.push_back(theta ? base + theta[slot] : base);
                }
            }
        }
        result.trace.effective.push_back(std::move(snap));
    };

    result.report.header = {{"task", cfg.task},
                            {"method", method_name(method)},
                            {"strategy", strategy_name(cfg.strategy)},
                            {"topk", cfg.topk},
                            {"fraction", cfg.fraction},
                            {"seed", cfg.seed},
                            {"precision", cfg.precision},
                            {"steps", total_steps},
                            {"metric", metric_name(data.metric)}};

    EvalResult<T> ev = eval_now();
    double last_metric = ev.metric;
    if (opt.log_records) {
        MetricsRecord r0;
        r0.step = 0;
        r0.loss = ev.loss;
        r0.metric = ev.metric;
        r0.bytes = byte_counts(0);
        result.report.records.push_back(r0);
        result.peak_bytes = r0.bytes;
    }

    if (total_steps == 0) {
        result.final_loss = ev.loss;
        result.final_metric = ev.metric;
        return result;
    }

    const LrSchedule schedule(cfg.warmup_ratio, total_steps);
    std::vector<std::uint32_t> order;
    std::int64_t epoch = -1;

    for (std::int64_t step = 0; step < total_steps; ++step) {
        const std::int64_t e = step / steps_per_epoch;
        const std::size_t b = static_cast<std::size_t>(step % steps_per_epoch) * batch;
        if (e != epoch) {
            epoch = e;
            order = detail::epoch_order(train_n, cfg.seed, epoch);
        }
        Dataset<T> bt = detail::gather_batch(data.train, order, b, batch);

        const auto t0 = Clock::now();
        Tape<T> tape;
        VarId x = tape.leaf(bt.x);
        std::vector<VarId> param_leaves;
        VarId out = method == Method::neuroada
                        ? model_forward_bypass(tape, model, trainable_layers, result.deltas, x,
                                               &param_leaves)
                        : model_forward_dense(tape, model, trainable_layers, x, &param_leaves);
        VarId loss = data.loss == LossKind::mse ? tape.mse_loss(out, bt.y)
                                                : tape.softmax_cross_entropy(out, bt.labels);
        const double loss_v = static_cast<double>(tape.scalar(loss));
        if (!std::isfinite(loss_v)) {
            throw NumericError("training loss is non-finite at step " + std::to_string(step));
        }
        tape.backward(loss);

        const T lr = static_cast<T>(lr_at(schedule, step, cfg.lr));
        for (std::size_t a = 0; a < trainable_layers.size(); ++a) {
            if (method == Method::neuroada) {
                adamw_sparse_step(sparse_opt[a], result.deltas[a], tape.grad(param_leaves[a]),
                                  lr);
            } else if (method == Method::masked) {
                auto g = tape.grad_mutable(param_leaves[a]);
                const auto& m = masks[a];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (!m[i]) {
                        g[i] = T(0);
                    }
                }
                adamw_dense_step(dense_opt[a], model.layers[trainable_layers[a]].values, g, lr,
                                 m.data());
            } else {
                adamw_dense_step(dense_opt[a], model.layers[trainable_layers[a]].values,
                                 tape.grad(param_leaves[a]), lr);
            }
        }
        const auto t1 = Clock::now();
        const auto wall =
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
        result.timed_seconds += static_cast<double>(wall) * 1e-9;

        if (opt.record_trace) {
            snapshot_effective();
        }

        const bool last = step + 1 == total_steps;
        if (last || (step + 1) % cfg.eval_every == 0) {
            ev = eval_now();
            last_metric = ev.metric;
        }
        if (opt.log_records) {
            MetricsRecord rec;
            rec.step = step + 1;
            rec.loss = loss_v;
            rec.metric = last_metric;
            rec.bytes = byte_counts(tape.leaf_grad_bytes());
            rec.wall_ns = wall;
            result.report.records.push_back(rec);
            if (rec.bytes.total() > result.peak_bytes.total()) {
                result.peak_bytes = rec.bytes;
            }
        }
    }

    result.final_loss = ev.loss;
    result.final_metric = ev.metric;
    return result;
}

}  // namespace neuroada
