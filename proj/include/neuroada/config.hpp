// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuroada/error.hpp"
#include "neuroada/model.hpp"
#include "neuroada/optim.hpp"
#include "neuroada/selection.hpp"
#include "neuroada/tasks.hpp"

namespace neuroada {

using json = nlohmann::json;

/// Everything a run needs. Parsed from a JSON document whose keys mirror the
/// fields below; unknown keys are rejected, and validation reports every
/// offending field path at once.
struct TrainConfig {
    std::string task = "ts-reg";
    std::vector<std::size_t> model_layers;  // empty -> task default
    Activation activation = Activation::tanh;
    bool activation_set = false;
    std::string checkpoint;  // empty -> data/fixtures/<task fixture>

    StrategyKind strategy = StrategyKind::magnitude;
    std::uint32_t topk = 1;
    double fraction = 1.0;
    std::uint64_t seed = 42;

    double lr = 1e-2;
    AdamHyper adam;
    double warmup_ratio = 0.0;
    std::int64_t epochs = 3;
    std::int64_t batch_size = 16;
    std::int64_t max_steps = 0;  // 0 -> epochs decide
    std::string precision = "single";
    StorageWidth delta_width = StorageWidth::half;
    std::int64_t gradient_warmup_batches = 8;
    std::vector<std::string> adapt_include;  // layer names; empty -> default set
    std::vector<std::string> adapt_exclude;
    std::int64_t train_size = 0;  // 0 -> task default
    std::int64_t val_size = 0;
    std::int64_t eval_every = 10;

    bool double_precision() const { return precision == "double-oracle"; }
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                                const std::string& prefix, std::vector<std::string>& errors) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key)) {
            errors.push_back(prefix + key + ": unknown key");
        }
    }
}

}  // namespace detail

/// Strict parse: structural problems (wrong types, unknown keys) and value
/// problems are both collected and reported together as a ConfigError whose
/// message enumerates field paths.
inline TrainConfig parse_train_config(const json& j) {
    TrainConfig c;
    std::vector<std::string> errors;

    static const std::set<std::string> known = {
        "task",       "model",      "checkpoint", "strategy",
        "topk",       "fraction",   "seed",       "lr",
        "weight_decay", "beta1",    "beta2",      "eps",
        "warmup_ratio", "epochs",   "batch_size", "max_steps",
        "precision",  "delta_width", "gradient_warmup_batches", "adapt",
        "train_size", "val_size",   "eval_every"};
    detail::reject_unknown_keys(j, known, "", errors);

    auto get = [&](const char* key, auto& out) {
        if (!j.contains(key)) {
            return;
        }
        try {
            out = j.at(key).template get<std::decay_t<decltype(out)>>();
        } catch (const json::exception&) {
            errors.push_back(std::string(key) + ": wrong type");
        }
    };

    get("task", c.task);
    get("checkpoint", c.checkpoint);
    get("topk", c.topk);
    get("fraction", c.fraction);
    get("seed", c.seed);
    get("lr", c.lr);
    get("weight_decay", c.adam.weight_decay);
    get("beta1", c.adam.beta1);
    get("beta2", c.adam.beta2);
    get("eps", c.adam.eps);
    get("warmup_ratio", c.warmup_ratio);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("max_steps", c.max_steps);
    get("precision", c.precision);
    get("gradient_warmup_batches", c.gradient_warmup_batches);
    get("train_size", c.train_size);
    get("val_size", c.val_size);
    get("eval_every", c.eval_every);

    if (j.contains("strategy")) {
        try {
            c.strategy = parse_strategy(j.at("strategy").get<std::string>());
        } catch (const std::exception& e) {
            errors.push_back(std::string("strategy: ") + e.what());
        }
    }
    if (j.contains("delta_width")) {
        std::string w;
        get("delta_width", w);
        if (w == "half") {
            c.delta_width = StorageWidth::half;
        } else if (w == "single") {
            c.delta_width = StorageWidth::single;
        } else if (!w.empty()) {
            errors.push_back("delta_width: expected half|single, got '" + w + "'");
        }
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        if (!m.is_object()) {
            errors.push_back("model: expected an object");
        } else {
            detail::reject_unknown_keys(m, {"layers", "activation"}, "model.", errors);
            if (m.contains("layers")) {
                try {
                    c.model_layers = m.at("layers").get<std::vector<std::size_t>>();
                } catch (const json::exception&) {
                    errors.push_back("model.layers: wrong type");
                }
            }
            if (m.contains("activation")) {
                try {
                    c.activation = parse_activation(m.at("activation").get<std::string>());
                    c.activation_set = true;
                } catch (const std::exception& e) {
                    errors.push_back(std::string("model.activation: ") + e.what());
                }
            }
        }
    }
    if (j.contains("adapt")) {
        const json& a = j.at("adapt");
        if (!a.is_object()) {
            errors.push_back("adapt: expected an object");
        } else {
            detail::reject_unknown_keys(a, {"include", "exclude"}, "adapt.", errors);
            if (a.contains("include")) {
                try {
                    c.adapt_include = a.at("include").get<std::vector<std::string>>();
                } catch (const json::exception&) {
                    errors.push_back("adapt.include: wrong type");
                }
            }
            if (a.contains("exclude")) {
                try {
                    c.adapt_exclude = a.at("exclude").get<std::vector<std::string>>();
                } catch (const json::exception&) {
                    errors.push_back("adapt.exclude: wrong type");
                }
            }
        }
    }

    // value checks
    if (c.topk < 1) {
        errors.push_back("topk: must be >= 1");
    }
    if (!(c.fraction >= 0.0 && c.fraction <= 1.0)) {
        errors.push_back("fraction: must lie in [0, 1]");
    }
    if (!(c.lr > 0.0)) {
        errors.push_back("lr: must be positive");
    }
    if (!(c.warmup_ratio >= 0.0 && c.warmup_ratio <= 1.0)) {
        errors.push_back("warmup_ratio: must lie in [0, 1]");
    }
    if (c.epochs < 0) {
        errors.push_back("epochs: must be >= 0");
    }
    if (c.batch_size < 1) {
        errors.push_back("batch_size: must be >= 1");
    }
    if (c.max_steps < 0) {
        errors.push_back("max_steps: must be >= 0");
    }
    if (c.precision != "single" && c.precision != "double-oracle") {
        errors.push_back("precision: expected single|double-oracle");
    }
    if (c.gradient_warmup_batches < 1) {
        errors.push_back("gradient_warmup_batches: must be >= 1");
    }
    if (c.train_size < 0 || c.val_size < 0) {
        errors.push_back("train_size/val_size: must be >= 0");
    }
    if (c.eval_every < 1) {
        errors.push_back("eval_every: must be >= 1");
    }
    try {
        task_spec(c.task);
    } catch (const std::exception& e) {
        errors.push_back(e.what());
    }

    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) {
            msg += "\n  " + e;
        }
        throw ConfigError(msg);
    }
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path + ": cannot open config file");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_train_config(j);
}

}  // namespace neuroada
