// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "neuroada/delta.hpp"
#include "neuroada/error.hpp"
#include "neuroada/model.hpp"

namespace neuroada {

/// File could not be opened, or its contents are not a valid artifact file.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All on-disk formats are little-endian with explicit byte encoding, so the
// files are identical across platforms:
//   NADW checkpoint: magic, version u16, count u32, then per matrix
//     name(u32+bytes), d_out u32, d_in u32, values f32[d_out*d_in], bias f32.
//   NADL delta file: magic, version u16, count u32, then per matrix
//     name, d_out u32, d_in u32, k u32, width u8, row counts u32[d_out],
//     indices (u16 while d_in <= 65536, else u32), values f32[nnz].
//     Per-row counts are written because a neuron-fraction restriction can
//     empty individual rows.
//   NADP plan file: as NADL without width and values.

namespace detail {

inline void put_bytes(std::string& out, std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

inline void put_u16(std::string& out, std::uint16_t v) { put_bytes(out, v, 2); }
inline void put_u32(std::string& out, std::uint32_t v) { put_bytes(out, v, 4); }
inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
  public:
    Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::uint64_t bytes_value(int n) {
        if (pos_ + n > bytes_.size()) {
            throw IoError(path_ + ": truncated file");
        }
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
                 << (8 * i);
        }
        pos_ += n;
        return v;
    }

    std::uint16_t u16() { return static_cast<std::uint16_t>(bytes_value(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(bytes_value(4)); }
    std::uint8_t u8() { return static_cast<std::uint8_t>(bytes_value(1)); }
    float f32() { return std::bit_cast<float>(u32()); }

    std::string str() {
        const std::uint32_t n = u32();
        if (pos_ + n > bytes_.size()) {
            throw IoError(path_ + ": truncated string");
        }
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void expect_magic(const char* magic) {
        if (bytes_.size() < pos_ + 4 || bytes_.compare(pos_, 4, magic) != 0) {
            throw IoError(path_ + ": bad magic, expected " + magic);
        }
        pos_ += 4;
    }

    bool done() const { return pos_ == bytes_.size(); }
    const std::string& path() const { return path_; }

  private:
    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path + ": cannot open for reading");
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(path + ": cannot open for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError(path + ": write failed");
    }
}

}  // namespace detail

constexpr std::uint16_t kFormatVersion = 1;

// ---- checkpoints (NADW) -------------------------------------------------

template <typename T>
std::string encode_checkpoint(const Mlp<T>& model) {
    std::string out = "NADW";
    detail::put_u16(out, kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
    for (const auto& w : model.layers) {
        detail::put_string(out, w.name);
        detail::put_u32(out, static_cast<std::uint32_t>(w.rows));
        detail::put_u32(out, static_cast<std::uint32_t>(w.cols));
        for (const T v : w.values) {
            detail::put_f32(out, static_cast<float>(v));
        }
        for (const T v : w.bias) {
            detail::put_f32(out, static_cast<float>(v));
        }
    }
    return out;
}

template <typename T>
void save_checkpoint(const std::string& path, const Mlp<T>& model) {
    detail::write_file(path, encode_checkpoint(model));
}

template <typename T>
Mlp<T> decode_checkpoint(const std::string& bytes, const std::string& path,
                         Activation activation) {
    detail::Reader r(bytes, path);
    r.expect_magic("NADW");
    if (r.u16() != kFormatVersion) {
        throw IoError(path + ": unsupported checkpoint version");
    }
    Mlp<T> model;
    model.activation = activation;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        WeightMatrix<T> w;
        w.name = r.str();
        w.rows = r.u32();
        w.cols = r.u32();
        w.values.resize(w.rows * w.cols);
        for (auto& v : w.values) {
            v = static_cast<T>(r.f32());
        }
        w.bias.resize(w.rows);
        for (auto& v : w.bias) {
            v = static_cast<T>(r.f32());
        }
        model.layers.push_back(std::move(w));
    }
    if (!r.done()) {
        throw IoError(path + ": trailing bytes after checkpoint payload");
    }
    return model;
}

template <typename T>
Mlp<T> load_checkpoint(const std::string& path, Activation activation) {
    return decode_checkpoint<T>(detail::read_file(path), path, activation);
}

// ---- plans (NADP) and deltas (NADL) --------------------------------------

namespace detail {

inline void put_plan_dims(std::string& out, const SelectionPlan& plan) {
    put_u32(out, static_cast<std::uint32_t>(plan.rows));
    put_u32(out, static_cast<std::uint32_t>(plan.cols));
    put_u32(out, plan.k);
}

inline void put_plan_rows(std::string& out, const SelectionPlan& plan) {
    for (std::size_t i = 0; i < plan.rows; ++i) {
        put_u32(out, static_cast<std::uint32_t>(plan.row_count(i)));
    }
    const int idx_bytes = static_cast<int>(index_bytes(plan.cols));
    for (std::uint32_t idx : plan.indices) {
        put_bytes(out, idx, idx_bytes);
    }
}

inline SelectionPlan read_plan_dims(Reader& r) {
    SelectionPlan plan;
    plan.rows = r.u32();
    plan.cols = r.u32();
    plan.k = r.u32();
    return plan;
}

inline void read_plan_rows(Reader& r, SelectionPlan& plan) {
    plan.row_offset.assign(plan.rows + 1, 0);
    for (std::size_t i = 0; i < plan.rows; ++i) {
        plan.row_offset[i + 1] = plan.row_offset[i] + r.u32();
    }
    const int idx_bytes = static_cast<int>(index_bytes(plan.cols));
    plan.indices.resize(plan.row_offset.back());
    for (auto& idx : plan.indices) {
        idx = static_cast<std::uint32_t>(r.bytes_value(idx_bytes));
    }
    plan.validate();
}

}  // namespace detail

struct NamedPlan {
    std::string name;
    SelectionPlan plan;
};

inline std::string encode_plans(const std::vector<NamedPlan>& plans) {
    std::string out = "NADP";
    detail::put_u16(out, kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(plans.size()));
    for (const auto& p : plans) {
        detail::put_string(out, p.name);
        detail::put_plan_dims(out, p.plan);
        detail::put_plan_rows(out, p.plan);
    }
    return out;
}

inline void save_plans(const std::string& path, const std::vector<NamedPlan>& plans) {
    detail::write_file(path, encode_plans(plans));
}

inline std::vector<NamedPlan> decode_plans(const std::string& bytes, const std::string& path) {
    detail::Reader r(bytes, path);
    r.expect_magic("NADP");
    if (r.u16() != kFormatVersion) {
        throw IoError(path + ": unsupported plan file version");
    }
    std::vector<NamedPlan> plans(r.u32());
    for (auto& p : plans) {
        p.name = r.str();
        p.plan = detail::read_plan_dims(r);
        detail::read_plan_rows(r, p.plan);
    }
    if (!r.done()) {
        throw IoError(path + ": trailing bytes after plan payload");
    }
    return plans;
}

inline std::vector<NamedPlan> load_plans(const std::string& path) {
    return decode_plans(detail::read_file(path), path);
}

template <typename T>
struct NamedDelta {
    std::string name;
    SparseDelta<T> delta;
};

template <typename T>
std::string encode_deltas(const std::vector<NamedDelta<T>>& deltas) {
    std::string out = "NADL";
    detail::put_u16(out, kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(deltas.size()));
    for (const auto& d : deltas) {
        detail::put_string(out, d.name);
        detail::put_plan_dims(out, d.delta.plan);
        out.push_back(static_cast<char>(d.delta.width));
        detail::put_plan_rows(out, d.delta.plan);
        for (const T v : d.delta.values) {
            detail::put_f32(out, static_cast<float>(v));
        }
    }
    return out;
}

template <typename T>
void save_deltas(const std::string& path, const std::vector<NamedDelta<T>>& deltas) {
    detail::write_file(path, encode_deltas(deltas));
}

template <typename T>
std::vector<NamedDelta<T>> decode_deltas(const std::string& bytes, const std::string& path) {
    detail::Reader r(bytes, path);
    r.expect_magic("NADL");
    if (r.u16() != kFormatVersion) {
        throw IoError(path + ": unsupported delta file version");
    }
    std::vector<NamedDelta<T>> deltas(r.u32());
    for (auto& d : deltas) {
        d.name = r.str();
        d.delta.plan = detail::read_plan_dims(r);
        const std::uint8_t width = r.u8();
        if (width > 1) {
            throw IoError(path + ": unknown storage width tag");
        }
        d.delta.width = static_cast<StorageWidth>(width);
        detail::read_plan_rows(r, d.delta.plan);
        d.delta.values.resize(d.delta.plan.nnz());
        for (auto& v : d.delta.values) {
            v = static_cast<T>(r.f32());
        }
    }
    if (!r.done()) {
        throw IoError(path + ": trailing bytes after delta payload");
    }
    return deltas;
}

template <typename T>
std::vector<NamedDelta<T>> load_deltas(const std::string& path) {
    return decode_deltas<T>(detail::read_file(path), path);
}

}  // namespace neuroada
