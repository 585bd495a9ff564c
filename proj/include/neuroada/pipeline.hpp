// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "neuroada/baselines.hpp"
#include "neuroada/config.hpp"
#include "neuroada/io.hpp"
#include "neuroada/selection.hpp"
#include "neuroada/tasks.hpp"
#include "neuroada/train.hpp"

namespace neuroada {

/// Resolved run inputs: the frozen model, the task data, the adapted layer
/// set and the per-layer selection plans (Phase 1 output).
template <typename T>
struct RunSetup {
    TaskSpec spec;
    Mlp<T> model;
    TaskData<T> data;
    std::vector<std::size_t> adapted;
    std::vector<SelectionPlan> plans;
};

namespace detail {

template <typename T>
Mlp<T> resolve_model(const TrainConfig& cfg, const TaskSpec& spec) {
    const std::vector<std::size_t>& sizes =
        cfg.model_layers.empty() ? spec.model_sizes : cfg.model_layers;
    const Activation act = cfg.activation_set ? cfg.activation : spec.activation;
    std::string path = cfg.checkpoint;
    if (path.empty() && !spec.fixture.empty()) {
        path = "data/fixtures/" + spec.fixture;
    }
    if (!path.empty() && std::filesystem::exists(path)) {
        Mlp<T> model = load_checkpoint<T>(path, act);
        if (model.sizes() != sizes) {
            throw ConfigError("checkpoint: " + path + " has layer sizes " +
                              shape_string(model.sizes()) + ", config expects " +
                              shape_string(sizes));
        }
        return model;
    }
    if (!spec.random_init_ok) {
        throw ConfigError("checkpoint: '" + path +
                          "' not found; the '" + spec.id +
                          "' task starts from a pretrained fixture (run from the repository "
                          "root or set the checkpoint path)");
    }
    SplitMix64 rng = SplitMix64::keyed(cfg.seed, 0xbe9cULL);
    return Mlp<T>::random(sizes, act, rng);
}

template <typename T>
std::vector<std::size_t> resolve_adapted(const TrainConfig& cfg, const Mlp<T>& model) {
    auto index_of = [&](const std::string& name) {
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            if (model.layers[l].name == name) {
                return l;
            }
        }
        throw ConfigError("adapt: no layer named '" + name + "'");
    };
    std::vector<std::size_t> adapted;
    if (!cfg.adapt_include.empty()) {
        for (const auto& name : cfg.adapt_include) {
            adapted.push_back(index_of(name));
        }
        std::sort(adapted.begin(), adapted.end());
        adapted.erase(std::unique(adapted.begin(), adapted.end()), adapted.end());
    } else {
        adapted = model.default_adapted();
    }
    for (const auto& name : cfg.adapt_exclude) {
        const std::size_t l = index_of(name);
        std::erase(adapted, l);
    }
    if (adapted.empty()) {
        throw ConfigError("adapt: no layers left to adapt");
    }
    return adapted;
}

/// Model-level gradient-guided selection: per-layer |dL/dW| summed over the
/// first warmup batches (epoch-0 order), then per-row top-k.
template <typename T>
std::vector<SelectionPlan> gradient_plans(const TrainConfig& cfg, const Mlp<T>& model,
                                          const std::vector<std::size_t>& adapted,
                                          const TaskData<T>& data) {
    std::vector<std::vector<T>> scores;
    for (std::size_t l : adapted) {
        scores.emplace_back(model.layers[l].values.size(), T(0));
    }
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t n_batches = std::min<std::size_t>(
        static_cast<std::size_t>(cfg.gradient_warmup_batches), data.train.size() / batch);
    if (n_batches == 0) {
        throw ParamError("select_by_gradient: warmup batch set is empty");
    }
    const auto order = epoch_order(data.train.size(), cfg.seed, 0);
    for (std::size_t b = 0; b < n_batches; ++b) {
        Dataset<T> bt = gather_batch(data.train, order, b * batch, batch);
        Tape<T> tape;
        std::vector<VarId> leaves;
        VarId out = model_forward_dense(tape, model, adapted, tape.leaf(bt.x), &leaves);
        VarId loss = data.loss == LossKind::mse ? tape.mse_loss(out, bt.y)
                                                : tape.softmax_cross_entropy(out, bt.labels);
        tape.backward(loss);
        for (std::size_t a = 0; a < adapted.size(); ++a) {
            auto g = tape.grad(leaves[a]);
            for (std::size_t i = 0; i < scores[a].size(); ++i) {
                scores[a][i] += std::abs(g[i]);
            }
        }
    }
    std::vector<SelectionPlan> plans;
    for (std::size_t a = 0; a < adapted.size(); ++a) {
        const auto& w = model.layers[adapted[a]];
        plans.push_back(topk_by_score(scores[a], w.rows, w.cols, cfg.topk));
    }
    return plans;
}

inline std::uint64_t layer_stream(std::uint64_t seed, std::size_t layer) {
    return SplitMix64::keyed(seed, 0xfada0000ULL + layer).next_u64();
}

}  // namespace detail

/// Phase 1: resolve the model and task, pick the selection plans. Training
/// data is touched only by the gradient strategy.
template <typename T>
RunSetup<T> prepare_run(const TrainConfig& cfg) {
    RunSetup<T> setup;
    setup.spec = task_spec(cfg.task);
    setup.model = detail::resolve_model<T>(cfg, setup.spec);
    setup.data = make_task_data(setup.spec, cfg.seed, &setup.model,
                                static_cast<std::size_t>(cfg.train_size),
                                static_cast<std::size_t>(cfg.val_size));
    setup.adapted = detail::resolve_adapted(cfg, setup.model);
    const std::size_t min_cols = setup.model.min_adapted_cols(setup.adapted);
    if (cfg.topk > min_cols) {
        throw ConfigError("topk: " + std::to_string(cfg.topk) +
                          " exceeds the smallest adapted layer input width " +
                          std::to_string(min_cols));
    }
    switch (cfg.strategy) {
        case StrategyKind::magnitude:
            for (std::size_t l : setup.adapted) {
                setup.plans.push_back(select_topk_magnitude(setup.model.layers[l], cfg.topk));
            }
            break;
        case StrategyKind::reverse:
            for (std::size_t l : setup.adapted) {
                setup.plans.push_back(select_reverse(setup.model.layers[l], cfg.topk));
            }
            break;
        case StrategyKind::random:
            for (std::size_t l : setup.adapted) {
                setup.plans.push_back(select_random(setup.model.layers[l], cfg.topk,
                                                    detail::layer_stream(cfg.seed, l)));
            }
            break;
        case StrategyKind::gradient:
            setup.plans = detail::gradient_plans(cfg, setup.model, setup.adapted, setup.data);
            break;
    }
    if (cfg.fraction < 1.0) {
        for (std::size_t a = 0; a < setup.plans.size(); ++a) {
            setup.plans[a] = restrict_to_fraction(
                setup.plans[a], cfg.fraction,
                detail::layer_stream(cfg.seed, 0x1000 + setup.adapted[a]));
        }
    }
    return setup;
}

template <typename T>
std::vector<NamedPlan> named_plans(const RunSetup<T>& setup) {
    std::vector<NamedPlan> out;
    for (std::size_t a = 0; a < setup.adapted.size(); ++a) {
        out.push_back({setup.model.layers[setup.adapted[a]].name, setup.plans[a]});
    }
    return out;
}

template <typename T>
struct PipelineResult {
    RunSetup<T> setup;
    TrainResult<T> train;
    Mlp<T> merged;
    MetricsRecord final_record;
};

/// Phases 1-3 end to end. Artifacts land in `out_dir`: selection plan,
/// trained delta file (written before the merge consumes the deltas), the
/// merged checkpoint (only after it passes the merge-equivalence probe), and
/// the run log. steps=0 degenerates to a bitwise copy of the input weights.
template <typename T>
PipelineResult<T> run_pipeline(const TrainConfig& cfg, const std::string& out_dir,
                               const TrainOptions& opt = {}) {
    PipelineResult<T> result;
    result.setup = prepare_run<T>(cfg);
    RunSetup<T>& setup = result.setup;

    result.train =
        train_run(cfg, Method::neuroada, setup.model, setup.adapted, setup.plans, setup.data, opt);

    // Phase 3: merge, then verify before anything is written.
    result.merged = setup.model;
    std::vector<SparseDelta<T>> deltas = result.train.deltas;  // keep originals for the file
    for (std::size_t a = 0; a < setup.adapted.size(); ++a) {
        merge_in_place(result.merged.layers[setup.adapted[a]], deltas[a]);
    }
    Tensor<T> probe_pre =
        forward_effective(setup.model, setup.adapted, &result.train.deltas, setup.data.val.x);
    Tensor<T> probe_post = forward_effective(result.merged, {}, nullptr, setup.data.val.x);
    if (!probe_pre.bit_equal(probe_post)) {
        throw VerifyError("merged checkpoint failed the merge-equivalence probe");
    }
    for (std::size_t a = 0; a < setup.adapted.size(); ++a) {
        const SelectionPlan& plan = setup.plans[a];
        const auto& before = setup.model.layers[setup.adapted[a]];
        const auto& after = result.merged.layers[setup.adapted[a]];
        std::size_t slot = 0;
        for (std::size_t i = 0; i < plan.rows; ++i) {
            const std::uint32_t* sel = plan.row_begin(i);
            const std::size_t sel_n = plan.row_count(i);
            std::size_t s = 0;
            for (std::size_t j = 0; j < plan.cols; ++j) {
                const bool selected = s < sel_n && sel[s] == j;
                if (selected) {
                    ++s;
                    ++slot;
                } else if (std::memcmp(&before.at(i, j), &after.at(i, j), sizeof(T)) != 0) {
                    throw VerifyError("merge touched an unselected coordinate");
                }
            }
        }
    }

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        save_plans(out_dir + "/plan.nadp", named_plans(setup));
        std::vector<NamedDelta<T>> nd;
        for (std::size_t a = 0; a < setup.adapted.size(); ++a) {
            nd.push_back({setup.model.layers[setup.adapted[a]].name, result.train.deltas[a]});
        }
        save_deltas(out_dir + "/delta.nadl", nd);
        save_checkpoint(out_dir + "/merged.nadw", result.merged);
        std::ofstream log(out_dir + "/train_log.jsonl", std::ios::trunc);
        log << serialize_report(result.train.report);
    }

    result.final_record = result.train.report.records.back();
    return result;
}

enum class SweepAxis { topk, fraction, strategy };

inline SweepAxis parse_axis(const std::string& s) {
    if (s == "topk") return SweepAxis::topk;
    if (s == "fraction") return SweepAxis::fraction;
    if (s == "strategy") return SweepAxis::strategy;
    throw ParamError("sweep axis must be topk|fraction|strategy, got '" + s + "'");
}

struct SweepRow {
    std::string value;
    double final_loss = 0.0;
    double final_metric = 0.0;
    std::int64_t steps = 0;
};

/// One completed run per axis value, all sharing the base config's seed and
/// data order. A failing run aborts the sweep after its error line is
/// written, preserving the completed rows.
template <typename T>
std::vector<SweepRow> sweep(const TrainConfig& base, SweepAxis axis,
                            const std::vector<std::string>& values, const std::string& out_dir) {
    if (values.empty()) {
        throw ParamError("sweep: no axis values given");
    }
    std::ofstream table;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        table.open(out_dir + "/sweep_log.jsonl", std::ios::trunc);
        table << json{{"format", "neuroada-sweep"},
                      {"version", 1},
                      {"axis", axis == SweepAxis::topk      ? "topk"
                               : axis == SweepAxis::fraction ? "fraction"
                                                             : "strategy"},
                      {"task", base.task}}
                     .dump()
              << "\n";
    }
    std::vector<SweepRow> rows;
    for (const auto& value : values) {
        TrainConfig cfg = base;
        try {
            switch (axis) {
                case SweepAxis::topk:
                    cfg.topk = static_cast<std::uint32_t>(std::stoul(value));
                    break;
                case SweepAxis::fraction:
                    cfg.fraction = std::stod(value);
                    break;
                case SweepAxis::strategy:
                    cfg.strategy = parse_strategy(value);
                    break;
            }
            const std::string run_dir =
                out_dir.empty() ? "" : out_dir + "/run-" + value;
            PipelineResult<T> run = run_pipeline<T>(cfg, run_dir);
            SweepRow row{value, run.train.final_loss, run.train.final_metric,
                         run.train.steps};
            rows.push_back(row);
            if (table.is_open()) {
                table << json{{"value", value},
                              {"final_loss", row.final_loss},
                              {"final_metric", row.final_metric},
                              {"steps", row.steps}}
                             .dump()
                      << "\n";
                table.flush();
            }
        } catch (const std::exception& e) {
            if (table.is_open()) {
                table << json{{"value", value}, {"error", e.what()}}.dump() << "\n";
                table.flush();
            }
            throw;
        }
    }
    return rows;
}

}  // namespace neuroada
