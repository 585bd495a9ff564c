// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "neuroada/autodiff.hpp"
#include "neuroada/baselines.hpp"
#include "neuroada/config.hpp"
#include "neuroada/delta.hpp"
#include "neuroada/io.hpp"
#include "neuroada/memory.hpp"
#include "neuroada/selection.hpp"
#include "neuroada/train.hpp"

namespace neuroada {

// Independent oracles for the verification suite. These deliberately avoid
// the mask-free bypass code path: the delta is materialized densely and run
// through the plain dense kernels, so agreement between the two routes is
// evidence, not tautology.

namespace oracle {

/// Dense W + Delta, materialized. The forbidden representation everywhere
/// else, which is exactly what makes it a useful referee here.
template <typename T>
WeightMatrix<T> dense_effective(const WeightMatrix<T>& w, const SparseDelta<T>& delta) {
    WeightMatrix<T> eff = w;
    for (std::size_t i = 0; i < delta.plan.rows; ++i) {
        for (std::size_t s = 0; s < delta.plan.row_count(i); ++s) {
            eff.at(i, delta.plan.row_begin(i)[s]) += delta.values[delta.plan.row_offset[i] + s];
        }
    }
    return eff;
}

/// Dense reverse-mode gradient dL/dW for L = sum(G .* (x W^T + b)),
/// restricted to the plan coordinates in slot order.
template <typename T>
std::vector<T> dense_grad_restricted(const WeightMatrix<T>& w, const SelectionPlan& plan,
                                     const Tensor<T>& x, const Tensor<T>& upstream) {
    Tape<T> tape;
    VarId wv = tape.leaf_view(w.values.data(), {w.rows, w.cols}, /*requires_grad=*/true);
    VarId out = tape.linear(tape.leaf(x), wv, tape.leaf_view(w.bias.data(), {w.rows}));
    tape.backward(tape.weighted_sum(out, upstream));
    auto g = tape.grad(wv);
    std::vector<T> restricted;
    for (std::size_t i = 0; i < plan.rows; ++i) {
        for (std::size_t s = 0; s < plan.row_count(i); ++s) {
            restricted.push_back(g[i * plan.cols + plan.row_begin(i)[s]]);
        }
    }
    return restricted;
}

template <typename T>
WeightMatrix<T> random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols) {
    WeightMatrix<T> w("w", rows, cols);
    for (auto& v : w.values) {
        v = static_cast<T>(rng.next_gauss());
    }
    for (auto& b : w.bias) {
        b = static_cast<T>(rng.next_gauss() * 0.1);
    }
    return w;
}

}  // namespace oracle

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace checks {

template <typename T>
std::size_t dim(SplitMix64& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.next_below(hi - lo + 1));
}

inline CheckResult zero_init_identity(std::size_t instances) {
    SplitMix64 rng(0x5eed01);
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t rows = dim<double>(rng, 1, 12), cols = dim<double>(rng, 1, 12);
        const std::size_t batch = dim<double>(rng, 0, 6);
        auto w = oracle::random_matrix<double>(rng, rows, cols);
        auto plan = select_topk_magnitude(
            w, 1 + static_cast<std::uint32_t>(rng.next_below(cols)));
        auto delta = init_delta<double>(plan, StorageWidth::half);
        Tensor<double> x = Tensor<double>::randn({batch, cols}, rng);
        if (!bypass_forward(x, w, delta).bit_equal(linear_forward(x, w))) {
            return {"zero-init identity", false,
                    "fresh delta changed the forward bits at instance " + std::to_string(t)};
        }
    }
    return {"zero-init identity", true,
            std::to_string(instances) + " random instances bit-identical"};
}

inline CheckResult merge_equivalence(std::size_t instances) {
    SplitMix64 rng(0x5eed02);
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t rows = dim<double>(rng, 1, 10), cols = dim<double>(rng, 1, 10);
        auto w = oracle::random_matrix<double>(rng, rows, cols);
        auto plan = select_topk_magnitude(
            w, 1 + static_cast<std::uint32_t>(rng.next_below(cols)));
        auto delta = init_delta<double>(plan, StorageWidth::single);
        // "trained" deltas: a few adaptive steps toward a random target
        SparseAdamState<double> opt(plan.nnz());
        Dataset<double> batch;
        batch.x = Tensor<double>::randn({4, cols}, rng);
        batch.y = Tensor<double>::randn({4, rows}, rng);
        for (int step = 0; step < 5; ++step) {
            Tensor<double> out = bypass_forward(batch.x, w, delta);
            Tensor<double> grad_out({4, rows});
            for (std::size_t i = 0; i < out.data.size(); ++i) {
                grad_out.data[i] = 2.0 * (out.data[i] - batch.y.data[i]) /
                                   static_cast<double>(out.data.size());
            }
            auto g = bypass_backward(grad_out, batch.x, w, delta);
            adamw_sparse_step(opt, delta, std::span<const double>(g.theta), 0.05);
        }
        Tensor<double> probe = Tensor<double>::randn({5, cols}, rng);
        Tensor<double> pre = bypass_forward(probe, w, delta);
        WeightMatrix<double> merged = w;
        merge_in_place(merged, delta);
        Tensor<double> post = linear_forward(probe, merged);
        if (!pre.bit_equal(post)) {
            return {"merge equivalence", false,
                    "bypass and merged forwards differ at instance " + std::to_string(t)};
        }
    }
    return {"merge equivalence", true,
            std::to_string(instances) + " trained instances, max |pre - post| = 0"};
}

inline CheckResult gradient_agreement(std::size_t instances, double tol) {
    SplitMix64 rng(0x5eed03);
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t rows = dim<double>(rng, 1, 8), cols = dim<double>(rng, 1, 8);
        const std::size_t batch = dim<double>(rng, 1, 8);
        auto w = oracle::random_matrix<double>(rng, rows, cols);
        auto plan = select_topk_magnitude(
            w, 1 + static_cast<std::uint32_t>(rng.next_below(cols)));
        auto delta = init_delta<double>(plan, StorageWidth::single);
        for (auto& v : delta.values) {
            v = rng.next_gauss();
        }
        Tensor<double> x = Tensor<double>::randn({batch, cols}, rng);
        Tensor<double> upstream = Tensor<double>::randn({batch, rows}, rng);
        auto sparse = bypass_backward(upstream, x, w, delta);
        auto dense = oracle::dense_grad_restricted(w, plan, x, upstream);
        for (std::size_t i = 0; i < dense.size(); ++i) {
            worst = std::max(worst, std::abs(sparse.theta[i] - dense[i]));
        }
    }
    return {"sparse/dense gradient agreement", worst < tol,
            "max abs difference " + std::to_string(worst) + " vs tolerance " +
                std::to_string(tol)};
}

/// grad_check over every registered op; returns the max relative error seen.
inline double ops_grad_check(std::size_t instances_per_op) {
    SplitMix64 rng(0x5eed04);
    double worst = 0.0;
    auto check = [&](auto&& f, const Tensor<double>& point) {
        worst = std::max(worst, grad_check(f, point, 1e-5));
    };
    for (std::size_t t = 0; t < instances_per_op; ++t) {
        const std::size_t rows = dim<double>(rng, 1, 8), cols = dim<double>(rng, 1, 8);
        const std::size_t batch = dim<double>(rng, 1, 8);
        Tensor<double> x = Tensor<double>::randn({batch, cols}, rng);
        Tensor<double> bias = Tensor<double>::randn({rows}, rng);
        Tensor<double> upstream = Tensor<double>::randn({batch, rows}, rng);
        Tensor<double> w_point = Tensor<double>::randn({rows, cols}, rng);

        // linear: wrt W, wrt x, wrt b
        check(
            [&](Tape<double>& t2, VarId p) {
                return t2.weighted_sum(t2.linear(t2.leaf(x), p, t2.leaf(bias)), upstream);
            },
            w_point);
        check(
            [&](Tape<double>& t2, VarId p) {
                return t2.weighted_sum(t2.linear(p, t2.leaf(w_point), t2.leaf(bias)), upstream);
            },
            x);
        check(
            [&](Tape<double>& t2, VarId p) {
                return t2.weighted_sum(t2.linear(t2.leaf(x), t2.leaf(w_point), p), upstream);
            },
            bias);

        // bypass wrt theta and wrt x
        WeightMatrix<double> wm("w", rows, cols);
        wm.values = w_point.data;
        wm.bias = bias.data;
        auto plan = select_topk_magnitude(
            wm, 1 + static_cast<std::uint32_t>(rng.next_below(cols)));
        Tensor<double> theta({plan.nnz()});
        for (auto& v : theta.data) {
            v = rng.next_gauss();
        }
        check(
            [&](Tape<double>& t2, VarId p) {
                return t2.weighted_sum(t2.bypass_linear(t2.leaf(x), p, &wm, &plan), upstream);
            },
            theta);
        check(
            [&](Tape<double>& t2, VarId p) {
                return t2.weighted_sum(
                    t2.bypass_linear(p, t2.leaf(theta), &wm, &plan), upstream);
            },
            x);

        // activations and losses; relu points nudged away from the kink
        Tensor<double> act_in = x;
        for (auto& v : act_in.data) {
            if (std::abs(v) < 0.05) {
                v = v < 0 ? v - 0.1 : v + 0.1;
            }
        }
        Tensor<double> act_up = Tensor<double>::randn(act_in.shape, rng);
        check([&](Tape<double>& t2, VarId p) { return t2.weighted_sum(t2.tanh(p), act_up); },
              act_in);
        check([&](Tape<double>& t2, VarId p) { return t2.weighted_sum(t2.relu(p), act_up); },
              act_in);
        check([&](Tape<double>& t2, VarId p) { return t2.sum(p); }, act_in);
        check([&](Tape<double>& t2, VarId p) { return t2.weighted_sum(p, act_up); }, act_in);

        Tensor<double> target = Tensor<double>::randn(x.shape, rng);
        check([&](Tape<double>& t2, VarId p) { return t2.mse_loss(p, target); }, x);

        const std::size_t classes = 2 + dim<double>(rng, 0, 6);
        Tensor<double> logits = Tensor<double>::randn({batch, classes}, rng);
        std::vector<int> labels(batch);
        for (auto& l : labels) {
            l = static_cast<int>(rng.next_below(classes));
        }
        check(
            [&](Tape<double>& t2, VarId p) { return t2.softmax_cross_entropy(p, labels); },
            logits);
    }
    return worst;
}

inline CheckResult registered_ops(std::size_t instances_per_op, double tol) {
    const double worst = ops_grad_check(instances_per_op);
    return {"grad_check over registered ops", worst < tol,
            "max relative error " + std::to_string(worst) + " vs tolerance " +
                std::to_string(tol)};
}

inline CheckResult table1_exactness() {
    const auto row7b = memory_table_row(memory_report(4096, 4096, 1, StorageWidth::half));
    const auto row13b = memory_table_row(memory_report(5120, 5120, 1, StorageWidth::half));
    const bool pass = row7b.mask_mb == "2.00" && row7b.neuroada_mb == "0.016" &&
                      row7b.saving_ratio == 125 && row13b.mask_mb == "3.13" &&
                      row13b.neuroada_mb == "0.020" && row13b.saving_ratio == 156;
    return {"published memory-table rows", pass,
            "4096: " + row7b.mask_mb + "/" + row7b.neuroada_mb + "/" +
                std::to_string(row7b.saving_ratio) + "x, 5120: " + row13b.mask_mb + "/" +
                row13b.neuroada_mb + "/" + std::to_string(row13b.saving_ratio) + "x"};
}

inline CheckResult adamw_state_reduction() {
    const auto r = memory_report(4096, 5120, 1, StorageWidth::half);
    const bool pass = r.adamw_saving_ratio == 5120.0 && r.adamw_neuroada_bytes == 2ull * 4096 * 4;
    return {"optimizer-state reduction factor", pass,
            "d_in=5120, k=1 gives " + std::to_string(r.adamw_saving_ratio) + "x"};
}

inline CheckResult selection_properties() {
    SplitMix64 rng(0x5eed05);
    for (int t = 0; t < 50; ++t) {
        const std::size_t rows = dim<double>(rng, 1, 10), cols = dim<double>(rng, 2, 12);
        auto w = oracle::random_matrix<double>(rng, rows, cols);
        const auto k = 1 + static_cast<std::uint32_t>(rng.next_below(cols));
        auto a = select_topk_magnitude(w, k);
        auto b = select_topk_magnitude(w, k);
        if (!(a == b)) {
            return {"selection determinism and coverage", false, "repeated call differed"};
        }
        a.validate();
        for (std::size_t i = 0; i < rows; ++i) {
            if (a.row_count(i) != k) {
                return {"selection determinism and coverage", false,
                        "row without exactly k entries"};
            }
        }
        auto r = select_random(w, k, rng.next_u64());
        r.validate();
        auto rev = select_reverse(w, k);
        rev.validate();
    }
    return {"selection determinism and coverage", true,
            "plans deterministic, structurally valid, every row covered"};
}

inline CheckResult file_round_trips() {
    SplitMix64 rng(0x5eed06);
    Mlp<float> model = Mlp<float>::random({6, 5, 4}, Activation::tanh, rng);
    const std::string ck = encode_checkpoint(model);
    Mlp<float> back = decode_checkpoint<float>(ck, "mem", Activation::tanh);
    if (encode_checkpoint(back) != ck) {
        return {"file round-trips", false, "checkpoint bytes changed over decode/encode"};
    }
    auto plan = select_topk_magnitude(model.layers[0], 2);
    auto restricted = restrict_to_fraction(plan, 0.5, 7);
    auto delta = init_delta<float>(restricted, StorageWidth::half);
    for (auto& v : delta.values) {
        v = static_cast<float>(rng.next_gauss());
    }
    std::vector<NamedDelta<float>> nd{{"fc0", delta}};
    const std::string db = encode_deltas(nd);
    if (encode_deltas(decode_deltas<float>(db, "mem")) != db) {
        return {"file round-trips", false, "delta bytes changed over decode/encode"};
    }
    std::vector<NamedPlan> np{{"fc0", restricted}};
    const std::string pb = encode_plans(np);
    if (encode_plans(decode_plans(pb, "mem")) != pb) {
        return {"file round-trips", false, "plan bytes changed over decode/encode"};
    }
    return {"file round-trips", true, "checkpoint, delta and plan encodings are bit-stable"};
}

/// Short mask-vs-bypass trajectory equivalence on a synthetic regression
/// model (quick form of the acceptance property).
inline CheckResult trajectory_equivalence(std::int64_t steps, double tol) {
    SplitMix64 rng(0x5eed07);
    Mlp<double> model = Mlp<double>::random({12, 16, 6}, Activation::tanh, rng);
    Mlp<double> teacher = tasks::perturbed_teacher(model, 11);
    TaskData<double> data;
    data.loss = LossKind::mse;
    data.metric = MetricKind::neg_mse;
    SplitMix64 drng = SplitMix64::keyed(11, 1);
    data.train = tasks::regression_set(teacher, 64, drng);
    data.val = tasks::regression_set(teacher, 32, drng);

    TrainConfig cfg;
    cfg.task = "ts-reg";
    cfg.seed = 11;
    cfg.lr = 5e-3;
    cfg.batch_size = 8;
    cfg.max_steps = steps;
    cfg.topk = 2;
    cfg.precision = "double-oracle";
    const auto adapted = model.default_adapted();
    std::vector<SelectionPlan> plans;
    for (auto l : adapted) {
        plans.push_back(select_topk_magnitude(model.layers[l], cfg.topk));
    }
    TrainOptions opt;
    opt.record_trace = true;
    opt.log_records = false;
    auto a = train_run(cfg, Method::neuroada, model, adapted, plans, data, opt);
    auto b = train_run(cfg, Method::masked, model, adapted, plans, data, opt);
    const double div = trajectory_compare(a.trace, b.trace);
    return {"mask/bypass trajectory equivalence", div < tol,
            "max divergence " + std::to_string(div) + " over " + std::to_string(steps) +
                " steps vs tolerance " + std::to_string(tol)};
}

}  // namespace checks

/// The oracle suite behind `verify`: quick forms of the properties the
/// acceptance suite runs at full scale.
inline std::vector<CheckResult> run_verification() {
    std::vector<CheckResult> results;
    results.push_back(checks::zero_init_identity(200));
    results.push_back(checks::merge_equivalence(50));
    results.push_back(checks::gradient_agreement(100, 1e-12));
    results.push_back(checks::registered_ops(25, 1e-4));
    results.push_back(checks::table1_exactness());
    results.push_back(checks::adamw_state_reduction());
    results.push_back(checks::selection_properties());
    results.push_back(checks::file_round_trips());
    results.push_back(checks::trajectory_equivalence(60, 1e-8));
    return results;
}

}  // namespace neuroada
