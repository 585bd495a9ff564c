// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "neuroada/config.hpp"
#include "neuroada/memory.hpp"
#include "neuroada/pipeline.hpp"
#include "neuroada/train.hpp"

namespace neuroada {

struct BenchRow {
    std::string method;
    ByteCounts peak_bytes;
    double samples_per_sec = 0.0;                // median over repeats
    std::uint64_t optimizer_bytes = 0;           // measured live moment buffers
    std::uint64_t expected_optimizer_bytes = 0;  // closed-form dense/sparse formula
};

struct BenchResult {
    std::vector<BenchRow> rows;  // neuroada, masked, full
    std::vector<std::string> warnings;
};

namespace detail {

constexpr std::int64_t kBenchWarmupSteps = 2;
constexpr std::int64_t kBenchTimedSteps = 6;

}  // namespace detail

/// Memory/throughput comparison of the three training methods on the same
/// model and plan. Byte figures are allocator-level counts of live training
/// buffers; timing is a median over `repeats` of the steady-clock time per
/// timed step, with warmup steps excluded. The directional claims
///   bytes(neuroada) < bytes(masked) <= bytes(full)
///   samples/sec(neuroada) >= samples/sec(masked)
/// are asserted; a violation raises VerifyError. Full fine-tuning trains
/// every layer (including the output head the adapted methods leave frozen).
template <typename T>
BenchResult bench(const TrainConfig& cfg, int repeats) {
    if (repeats < 3) {
        throw ParamError("bench: repeats must be >= 3");
    }
    if (sizeof(T) != 4) {
        throw ConfigError("bench: runs in single precision (its byte formulas assume "
                          "4-byte values); drop precision=double-oracle");
    }
    BenchResult result;
    RunSetup<T> setup = prepare_run<T>(cfg);

    std::vector<std::size_t> all_layers(setup.model.layers.size());
    for (std::size_t l = 0; l < all_layers.size(); ++l) {
        all_layers[l] = l;
    }

    TrainConfig run_cfg = cfg;
    run_cfg.max_steps = detail::kBenchWarmupSteps + detail::kBenchTimedSteps;
    run_cfg.eval_every = run_cfg.max_steps + 1;  // skip mid-run eval, it is not timed work

    struct MethodSpec {
        Method method;
        const std::vector<std::size_t>* layers;
        const std::vector<SelectionPlan>* plans;
    };
    static const std::vector<SelectionPlan> no_plans;
    const MethodSpec specs[] = {
        {Method::neuroada, &setup.adapted, &setup.plans},
        {Method::masked, &setup.adapted, &setup.plans},
        {Method::full, &all_layers, &no_plans},
    };

    for (const MethodSpec& ms : specs) {
        std::vector<double> rates;
        BenchRow row;
        row.method = method_name(ms.method);
        for (int rep = 0; rep < repeats; ++rep) {
            TrainResult<T> run = train_run(run_cfg, ms.method, setup.model, *ms.layers,
                                           *ms.plans, setup.data);
            std::int64_t timed_ns = 0;
            for (const auto& rec : run.report.records) {
                if (rec.step > detail::kBenchWarmupSteps) {
                    timed_ns += rec.wall_ns;
                    if (rec.wall_ns < 1000) {
                        result.warnings.push_back(row.method +
                                                  ": step time below 1us, timer resolution "
                                                  "may be insufficient");
                    }
                }
            }
            rates.push_back(static_cast<double>(cfg.batch_size * detail::kBenchTimedSteps) /
                            (static_cast<double>(timed_ns) * 1e-9));
            if (rep == 0) {
                row.peak_bytes = run.peak_bytes;
                row.optimizer_bytes = run.peak_bytes.optimizer;
            }
        }
        std::sort(rates.begin(), rates.end());
        row.samples_per_sec = rates[rates.size() / 2];

        if (ms.method == Method::neuroada) {
            for (const auto& plan : setup.plans) {
                row.expected_optimizer_bytes += 2ull * plan.nnz() * 4;
            }
        } else {
            for (std::size_t l : *ms.layers) {
                const auto& w = setup.model.layers[l];
                row.expected_optimizer_bytes +=
                    memory_report(w.rows, w.cols, 1, StorageWidth::single).adamw_masked_bytes;
            }
        }
        result.rows.push_back(row);
    }

    const BenchRow& na = result.rows[0];
    const BenchRow& mk = result.rows[1];
    const BenchRow& fl = result.rows[2];
    for (const BenchRow& r : result.rows) {
        if (r.optimizer_bytes != r.expected_optimizer_bytes) {
            throw VerifyError("bench: " + r.method + " optimizer state " +
                              std::to_string(r.optimizer_bytes) +
                              " bytes does not match the closed-form figure " +
                              std::to_string(r.expected_optimizer_bytes));
        }
    }
    if (!(na.peak_bytes.total() < mk.peak_bytes.total() &&
          mk.peak_bytes.total() <= fl.peak_bytes.total())) {
        throw VerifyError("bench: live-byte ordering neuroada < masked <= full violated");
    }
    if (!(na.samples_per_sec >= mk.samples_per_sec)) {
        throw VerifyError("bench: neuroada throughput fell below the masked baseline");
    }
    return result;
}

}  // namespace neuroada
