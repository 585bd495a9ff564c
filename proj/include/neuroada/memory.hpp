// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "neuroada/delta.hpp"
#include "neuroada/error.hpp"

namespace neuroada {

/// Closed-form storage accounting for one d_out x d_in projection:
/// a 1-bit-per-weight binary mask versus top-k (value, index) pair storage,
/// and the dense versus sparse AdamW moment buffers (FP32 moments).
struct MemoryReport {
    std::uint64_t mask_bytes = 0;             // theoretical 1-bit mask, ceil(n/8)
    std::uint64_t mask_bytes_byte_addr = 0;   // 1-byte-per-weight variant
    std::uint64_t neuroada_storage_bytes = 0; // nnz * (value width + index width)
    std::uint64_t adamw_masked_bytes = 0;     // 2 * d_out * d_in * 4
    std::uint64_t adamw_neuroada_bytes = 0;   // 2 * d_out * k * 4
    double saving_ratio = 0.0;                // mask_bytes / neuroada_storage_bytes
    double adamw_saving_ratio = 0.0;          // d_in / k
};

inline MemoryReport memory_report(std::size_t d_out, std::size_t d_in, std::uint32_t k,
                                  StorageWidth width) {
    if (d_out < 1 || d_in < 1) {
        throw ParamError("memory_report: dimensions must be positive");
    }
    if (k < 1 || k > d_in) {
        throw ParamError("memory_report: k=" + std::to_string(k) + " outside [1, d_in=" +
                         std::to_string(d_in) + "]");
    }
    MemoryReport r;
    const std::uint64_t n = static_cast<std::uint64_t>(d_out) * d_in;
    r.mask_bytes = (n + 7) / 8;
    r.mask_bytes_byte_addr = n;
    r.neuroada_storage_bytes =
        static_cast<std::uint64_t>(d_out) * k * (width_bytes(width) + index_bytes(d_in));
    r.adamw_masked_bytes = 2 * n * 4;
    r.adamw_neuroada_bytes = 2 * static_cast<std::uint64_t>(d_out) * k * 4;
    r.saving_ratio =
        static_cast<double>(r.mask_bytes) / static_cast<double>(r.neuroada_storage_bytes);
    r.adamw_saving_ratio =
        static_cast<double>(r.adamw_masked_bytes) / static_cast<double>(r.adamw_neuroada_bytes);
    return r;
}

namespace detail {

/// Fixed-point decimal string with ties rounded away from zero; built from
/// integers so the output never depends on printf tie-breaking.
inline std::string fixed_decimal(double value, int decimals) {
    double scale = 1.0;
    for (int i = 0; i < decimals; ++i) {
        scale *= 10.0;
    }
    const long long scaled = std::llround(value * scale);
    std::string digits = std::to_string(scaled < 0 ? -scaled : scaled);
    if (static_cast<int>(digits.size()) <= decimals) {
        digits.insert(0, decimals + 1 - digits.size(), '0');
    }
    std::string out = (scaled < 0 ? "-" : "");
    out += digits.substr(0, digits.size() - decimals);
    if (decimals > 0) {
        out += "." + digits.substr(digits.size() - decimals);
    }
    return out;
}

}  // namespace detail

/// One projection-layer row in the published comparison-table style:
/// mask MB to 2 decimals, top-k storage MB to 3 decimals, and the saving
/// ratio formed from the exact mask figure over the rounded storage figure
/// (which is how the table's 125x / 156x entries arise; the exact byte
/// quotient would give 128x / 160x).
struct MemoryTableRow {
    std::string mask_mb;
    std::string neuroada_mb;
    long long saving_ratio;
};

inline MemoryTableRow memory_table_row(const MemoryReport& r) {
    constexpr double mib = 1024.0 * 1024.0;
    const double mask_mb = static_cast<double>(r.mask_bytes) / mib;
    const double na_mb = static_cast<double>(r.neuroada_storage_bytes) / mib;
    const double na_mb_rounded = std::llround(na_mb * 1000.0) / 1000.0;
    MemoryTableRow row;
    row.mask_mb = detail::fixed_decimal(mask_mb, 2);
    row.neuroada_mb = detail::fixed_decimal(na_mb, 3);
    row.saving_ratio = std::llround(mask_mb / na_mb_rounded);
    return row;
}

}  // namespace neuroada
