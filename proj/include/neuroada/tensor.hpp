// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "neuroada/error.hpp"
#include "neuroada/rng.hpp"

namespace neuroada {

inline std::string shape_string(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << (i ? "x" : "") << s[i];
    }
    os << "]";
    return os.str();
}

/// Dense row-major tensor of reals. The compute substrate supports the 2-D
/// (batch x features) and 1-D (bias) shapes the harness needs; gradients are
/// held by the tape, not by the tensor itself.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), T(0));
    }

    Tensor(std::vector<std::size_t> s, std::vector<T> values)
        : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != numel_of(shape)) {
            throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_string(shape));
        }
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) {
            n *= d;
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 0 : shape[1]; }

    T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    static Tensor randn(std::vector<std::size_t> s, SplitMix64& rng, double stddev = 1.0) {
        Tensor t(std::move(s));
        for (auto& v : t.data) {
            v = static_cast<T>(rng.next_gauss() * stddev);
        }
        return t;
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    /// Exact bit-pattern equality, the comparison used by the determinism and
    /// merge-equivalence contracts (distinguishes -0.0 from +0.0, unlike ==).
    bool bit_equal(const Tensor& other) const {
        return shape == other.shape &&
               (data.empty() ||
                std::memcmp(data.data(), other.data.data(), data.size() * sizeof(T)) == 0);
    }
};

}  // namespace neuroada
