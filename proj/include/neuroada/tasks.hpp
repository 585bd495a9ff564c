// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "neuroada/error.hpp"
#include "neuroada/model.hpp"
#include "neuroada/rng.hpp"
#include "neuroada/tensor.hpp"

namespace neuroada {

enum class LossKind { mse, softmax_ce };
enum class MetricKind { neg_mse, accuracy };

inline const char* metric_name(MetricKind m) {
    return m == MetricKind::neg_mse ? "neg_mse" : "accuracy";
}

template <typename T>
struct Dataset {
    Tensor<T> x;              // rows x input_dim
    Tensor<T> y;              // regression targets (empty for classification)
    std::vector<int> labels;  // classification labels (empty for regression)

    std::size_t size() const { return x.rows(); }
};

template <typename T>
struct TaskData {
    Dataset<T> train;
    Dataset<T> val;
    LossKind loss = LossKind::mse;
    MetricKind metric = MetricKind::neg_mse;
};

/// Static description of a desk-scale task: the model it runs on, its loss
/// and metric, default split sizes, and whether it may start from random
/// weights (only the synthetic benchmark task does; the learning tasks start
/// from committed pretrained fixtures because magnitude selection is
/// meaningless on random weights).
struct TaskSpec {
    std::string id;
    std::vector<std::size_t> model_sizes;
    Activation activation = Activation::tanh;
    LossKind loss = LossKind::mse;
    MetricKind metric = MetricKind::neg_mse;
    std::size_t train_size = 0;
    std::size_t val_size = 0;
    std::string fixture;  // checkpoint filename under data/fixtures/
    bool random_init_ok = false;
};

namespace tasks {

// Desk-scale stand-ins for the paper-scale datasets. Perturbing five percent
// of the adapted coordinates makes the teacher-student task directly
// rewarding for sparse adaptation.
constexpr double kPerturbFraction = 0.05;
constexpr double kPerturbScale = 1.2;

constexpr std::uint64_t kPretrainSeed = 0xba5e'0001ULL;
constexpr std::uint64_t kCls10Seed = 0xc15c'1010ULL;

constexpr std::size_t kCharWindow = 8;

/// Opening of "Pride and Prejudice" (Jane Austen, 1813; public domain),
/// normalized at load time to lowercase letters, space and basic
/// punctuation.
inline constexpr std::string_view kSnippet =
    "It is a truth universally acknowledged, that a single man in possession "
    "of a good fortune, must be in want of a wife. However little known the "
    "feelings or views of such a man may be on his first entering a "
    "neighbourhood, this truth is so well fixed in the minds of the "
    "surrounding families, that he is considered as the rightful property of "
    "some one or other of their daughters. My dear Mr. Bennet, said his lady "
    "to him one day, have you heard that Netherfield Park is let at last? "
    "Mr. Bennet replied that he had not. But it is, returned she; for Mrs. "
    "Long has just been here, and she told me all about it. Mr. Bennet made "
    "no answer. Do you not want to know who has taken it? cried his wife "
    "impatiently. You want to tell me, and I have no objection to hearing "
    "it. This was invitation enough. Why, my dear, you must know, Mrs. Long "
    "says that Netherfield is taken by a young man of large fortune from the "
    "north of England; that he came down on Monday in a chaise and four to "
    "see the place, and was so much delighted with it, that he agreed with "
    "Mr. Morris immediately; that he is to take possession before "
    "Michaelmas, and some of his servants are to be in the house by the end "
    "of next week.";

inline const std::string& char_vocab() {
    static const std::string vocab = "abcdefghijklmnopqrstuvwxyz .,;?";
    return vocab;
}

inline std::vector<int> snippet_char_ids() {
    const std::string& vocab = char_vocab();
    std::vector<int> ids;
    ids.reserve(kSnippet.size());
    for (char raw : kSnippet) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        auto pos = vocab.find(c);
        ids.push_back(pos == std::string::npos ? static_cast<int>(vocab.find(' '))
                                               : static_cast<int>(pos));
    }
    return ids;
}

}  // namespace tasks

inline TaskSpec task_spec(const std::string& id) {
    TaskSpec s;
    s.id = id;
    if (id == "ts-reg") {
        s.model_sizes = {16, 32, 32, 8};
        s.activation = Activation::tanh;
        s.loss = LossKind::mse;
        s.metric = MetricKind::neg_mse;
        s.train_size = 512;
        s.val_size = 256;
        s.fixture = "ts_reg.nadw";
    } else if (id == "cls10") {
        s.model_sizes = {24, 48, 10};
        s.activation = Activation::tanh;
        s.loss = LossKind::softmax_ce;
        s.metric = MetricKind::accuracy;
        s.train_size = 640;
        s.val_size = 320;
        s.fixture = "cls10.nadw";
    } else if (id == "charlm") {
        const std::size_t vocab = tasks::char_vocab().size();
        s.model_sizes = {tasks::kCharWindow * vocab, 96, vocab};
        s.activation = Activation::tanh;
        s.loss = LossKind::softmax_ce;
        s.metric = MetricKind::accuracy;
        s.train_size = 0;  // determined by the snippet
        s.val_size = 0;
        s.fixture = "charlm.nadw";
    } else if (id == "bench-synth") {
        s.model_sizes = {1024, 1024, 1024, 1024, 1024, 1024, 1024, 1024, 1024};
        s.activation = Activation::relu;
        s.loss = LossKind::mse;
        s.metric = MetricKind::neg_mse;
        s.train_size = 64;
        s.val_size = 16;
        s.random_init_ok = true;
    } else {
        throw ConfigError("task: unknown task id '" + id + "'");
    }
    return s;
}

namespace tasks {

/// The teacher for ts-reg: the pretrained model with gaussian perturbations
/// added to ceil(5%) of the coordinates of each adapted matrix. Perturbed
/// coordinates are sampled uniformly per matrix from a (seed, layer)-keyed
/// stream, so different seeds pose different adaptation problems.
template <typename T>
Mlp<T> perturbed_teacher(const Mlp<T>& pretrained, std::uint64_t seed) {
    Mlp<T> teacher = pretrained;
    const auto adapted = pretrained.default_adapted();
    for (std::size_t l : adapted) {
        WeightMatrix<T>& w = teacher.layers[l];
        const auto n = static_cast<std::uint32_t>(w.values.size());
        const auto count = static_cast<std::uint32_t>(
            std::ceil(kPerturbFraction * static_cast<double>(n)));
        SplitMix64 rng = SplitMix64::keyed(seed, 0x7065'7274ULL + l);
        auto coords = sample_distinct_sorted(rng, count, n);
        const double scale = kPerturbScale / std::sqrt(static_cast<double>(w.cols));
        for (std::uint32_t c : coords) {
            w.values[c] += static_cast<T>(rng.next_gauss() * scale);
        }
    }
    return teacher;
}

template <typename T>
Dataset<T> regression_set(const Mlp<T>& teacher, std::size_t rows, SplitMix64& rng) {
    Dataset<T> d;
    d.x = Tensor<T>::randn({rows, teacher.input_dim()}, rng);
    d.y = forward_effective(teacher, {}, nullptr, d.x);
    return d;
}

template <typename T>
struct Cls10Generator {
    Tensor<T> features;                // input_dim x raw_dim frozen random map
    std::vector<std::vector<double>> centers;
    static constexpr std::size_t raw_dim = 8;

    static Cls10Generator base(std::size_t input_dim) {
        Cls10Generator g;
        SplitMix64 frng = SplitMix64::keyed(kCls10Seed, 7);
        g.features = Tensor<T>::randn({input_dim, raw_dim}, frng, 1.0 / std::sqrt(8.0));
        SplitMix64 crng = SplitMix64::keyed(kCls10Seed, 8);
        g.centers.assign(10, std::vector<double>(raw_dim));
        for (auto& c : g.centers) {
            for (auto& v : c) {
                v = crng.next_gauss() * 2.0;
            }
        }
        return g;
    }

    /// Adaptation variant: the cluster centers drift by a seed-keyed offset.
    static Cls10Generator shifted(std::size_t input_dim, std::uint64_t seed) {
        Cls10Generator g = base(input_dim);
        SplitMix64 rng = SplitMix64::keyed(seed, 9);
        for (auto& c : g.centers) {
            for (auto& v : c) {
                v += rng.next_gauss() * 0.8;
            }
        }
        return g;
    }

    Dataset<T> sample(std::size_t rows, SplitMix64& rng) const {
        Dataset<T> d;
        const std::size_t input_dim = features.rows();
        d.x = Tensor<T>({rows, input_dim});
        d.labels.resize(rows);
        std::vector<double> z(raw_dim);
        for (std::size_t n = 0; n < rows; ++n) {
            const int label = static_cast<int>(rng.next_below(10));
            d.labels[n] = label;
            for (std::size_t r = 0; r < raw_dim; ++r) {
                z[r] = centers[label][r] + rng.next_gauss() * 0.35;
            }
            for (std::size_t i = 0; i < input_dim; ++i) {
                double acc = 0.0;
                for (std::size_t r = 0; r < raw_dim; ++r) {
                    acc += static_cast<double>(features.at(i, r)) * z[r];
                }
                d.x.at(n, i) = static_cast<T>(std::tanh(acc));
            }
        }
        return d;
    }
};

template <typename T>
Dataset<T> char_windows(const std::vector<int>& ids, std::size_t begin, std::size_t end) {
    const std::size_t vocab = char_vocab().size();
    const std::size_t count = end - begin;
    Dataset<T> d;
    d.x = Tensor<T>({count, kCharWindow * vocab});
    d.labels.resize(count);
    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t p = begin + n;
        for (std::size_t w = 0; w < kCharWindow; ++w) {
            d.x.at(n, w * vocab + static_cast<std::size_t>(ids[p + w])) = T(1);
        }
        d.labels[n] = ids[p + kCharWindow];
    }
    return d;
}

}  // namespace tasks

/// Deterministic task data for a run seed. ts-reg derives its teacher from
/// the pretrained model; the other tasks ignore `pretrained`.
template <typename T>
TaskData<T> make_task_data(const TaskSpec& spec, std::uint64_t seed, const Mlp<T>* pretrained,
                           std::size_t train_size = 0, std::size_t val_size = 0) {
    if (train_size == 0) {
        train_size = spec.train_size;
    }
    if (val_size == 0) {
        val_size = spec.val_size;
    }
    TaskData<T> data;
    data.loss = spec.loss;
    data.metric = spec.metric;
    if (spec.id == "ts-reg") {
        if (!pretrained) {
            throw ContractError("ts-reg task needs the pretrained model to build its teacher");
        }
        Mlp<T> teacher = tasks::perturbed_teacher(*pretrained, seed);
        SplitMix64 train_rng = SplitMix64::keyed(seed, 1);
        SplitMix64 val_rng = SplitMix64::keyed(seed, 2);
        data.train = tasks::regression_set(teacher, train_size, train_rng);
        data.val = tasks::regression_set(teacher, val_size, val_rng);
    } else if (spec.id == "cls10") {
        auto gen = tasks::Cls10Generator<T>::shifted(spec.model_sizes.front(), seed);
        SplitMix64 train_rng = SplitMix64::keyed(seed, 1);
        SplitMix64 val_rng = SplitMix64::keyed(seed, 2);
        data.train = gen.sample(train_size, train_rng);
        data.val = gen.sample(val_size, val_rng);
    } else if (spec.id == "charlm") {
        const auto ids = tasks::snippet_char_ids();
        const std::size_t windows = ids.size() - tasks::kCharWindow;
        const std::size_t split = windows * 4 / 5;
        data.train = tasks::char_windows<T>(ids, 0, split);
        data.val = tasks::char_windows<T>(ids, split, windows);
    } else if (spec.id == "bench-synth") {
        SplitMix64 train_rng = SplitMix64::keyed(seed, 1);
        SplitMix64 val_rng = SplitMix64::keyed(seed, 2);
        data.train.x = Tensor<T>::randn({train_size, spec.model_sizes.front()}, train_rng);
        data.train.y = Tensor<T>::randn({train_size, spec.model_sizes.back()}, train_rng, 0.5);
        data.val.x = Tensor<T>::randn({val_size, spec.model_sizes.front()}, val_rng);
        data.val.y = Tensor<T>::randn({val_size, spec.model_sizes.back()}, val_rng, 0.5);
    } else {
        throw ConfigError("task: unknown task id '" + spec.id + "'");
    }
    return data;
}

/// Pretraining data for fixture generation (the "task distribution" before
/// any adaptation drift): ts-reg mimics a fixed random teacher, cls10 uses
/// the unshifted cluster centers, charlm uses its train split.
template <typename T>
TaskData<T> make_pretrain_data(const TaskSpec& spec) {
    TaskData<T> data;
    data.loss = spec.loss;
    data.metric = spec.metric;
    if (spec.id == "ts-reg") {
        SplitMix64 trng = SplitMix64::keyed(tasks::kPretrainSeed, 0);
        Mlp<T> target = Mlp<T>::random(spec.model_sizes, spec.activation, trng);
        SplitMix64 train_rng = SplitMix64::keyed(tasks::kPretrainSeed, 1);
        SplitMix64 val_rng = SplitMix64::keyed(tasks::kPretrainSeed, 2);
        data.train = tasks::regression_set(target, 2048, train_rng);
        data.val = tasks::regression_set(target, 256, val_rng);
    } else if (spec.id == "cls10") {
        auto gen = tasks::Cls10Generator<T>::base(spec.model_sizes.front());
        SplitMix64 train_rng = SplitMix64::keyed(tasks::kPretrainSeed, 1);
        SplitMix64 val_rng = SplitMix64::keyed(tasks::kPretrainSeed, 2);
        data.train = gen.sample(2048, train_rng);
        data.val = gen.sample(256, val_rng);
    } else if (spec.id == "charlm") {
        return make_task_data<T>(spec, tasks::kPretrainSeed, nullptr);
    } else {
        throw ConfigError("task '" + spec.id + "' has no pretraining distribution");
    }
    return data;
}

}  // namespace neuroada
