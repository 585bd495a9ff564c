// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "neuroada/error.hpp"

namespace neuroada {

/// SplitMix64 counter-based generator (Steele, Lea & Flood 2014).
///
/// Chosen as the project-wide RNG because its output is a pure function of
/// 64-bit integer state: streams keyed by (seed, stream) reproduce exactly
/// across platforms and implementations. All plan sampling, data generation
/// and weight init draw from this generator; std:: distributions are never
/// used (their output is implementation-defined).
class SplitMix64 {
  public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    /// Derive an independent stream from (seed, stream index), e.g. one
    /// stream per matrix row. The mixing step is one SplitMix64 round over
    /// the combined key, so neighbouring keys do not correlate.
    static SplitMix64 keyed(uint64_t seed, uint64_t stream) {
        SplitMix64 g(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
        g.next_u64();
        return g;
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Unbiased uniform integer in [0, bound) via masked rejection.
    uint64_t next_below(uint64_t bound) {
        if (bound == 0) {
            throw ParamError("SplitMix64::next_below: bound must be positive");
        }
        uint64_t mask = bound - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        for (;;) {
            uint64_t v = next_u64() & mask;
            if (v < bound) {
                return v;
            }
        }
    }

    /// Standard normal via Box-Muller (deterministic given the bit stream).
    double next_gauss() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0;
        do {
            u = next_double();
        } while (u == 0.0);
        double v = next_double();
        double r = std::sqrt(-2.0 * std::log(u));
        spare_ = r * std::sin(2.0 * std::numbers::pi * v);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * v);
    }

  private:
    uint64_t state_{0};
    double spare_{0.0};
    bool has_spare_{false};
};

/// k distinct values from [0, n), ascending. Partial Fisher-Yates over an
/// index table; deterministic given the generator state.
inline std::vector<uint32_t> sample_distinct_sorted(SplitMix64& rng, uint32_t k, uint32_t n) {
    if (k > n) {
        throw ParamError("sample_distinct_sorted: k exceeds population size");
    }
    std::vector<uint32_t> pool(n);
    for (uint32_t i = 0; i < n; ++i) {
        pool[i] = i;
    }
    for (uint32_t i = 0; i < k; ++i) {
        uint32_t j = i + static_cast<uint32_t>(rng.next_below(n - i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<uint32_t> out(pool.begin(), pool.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace neuroada
