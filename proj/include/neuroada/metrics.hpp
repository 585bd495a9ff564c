// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuroada/error.hpp"

namespace neuroada {

using json = nlohmann::json;

/// Live bytes by category at a measurement point. Categories are the
/// persistent training buffers; transient activation workspace is outside
/// the accounting scope. The invariant `total = sum of categories` is
/// maintained by construction.
struct ByteCounts {
    std::uint64_t weights = 0;
    std::uint64_t grads = 0;
    std::uint64_t optimizer = 0;
    std::uint64_t masks = 0;
    std::uint64_t deltas = 0;

    std::uint64_t total() const { return weights + grads + optimizer + masks + deltas; }

    bool operator==(const ByteCounts&) const = default;
};

/// One append-only run-log record per training step.
struct MetricsRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    double metric = 0.0;  // task eval metric (neg_mse or accuracy), latest value
    ByteCounts bytes;
    std::int64_t wall_ns = 0;

    bool operator==(const MetricsRecord&) const = default;
};

inline json to_json(const ByteCounts& b) {
    return json{{"weights", b.weights}, {"grads", b.grads},   {"optimizer", b.optimizer},
                {"masks", b.masks},     {"deltas", b.deltas}, {"total", b.total()}};
}

inline ByteCounts byte_counts_from_json(const json& j) {
    ByteCounts b;
    b.weights = j.at("weights").get<std::uint64_t>();
    b.grads = j.at("grads").get<std::uint64_t>();
    b.optimizer = j.at("optimizer").get<std::uint64_t>();
    b.masks = j.at("masks").get<std::uint64_t>();
    b.deltas = j.at("deltas").get<std::uint64_t>();
    if (j.at("total").get<std::uint64_t>() != b.total()) {
        throw ConfigError("metrics record: byte categories do not sum to total");
    }
    return b;
}

inline json to_json(const MetricsRecord& r) {
    return json{{"step", r.step},
                {"loss", r.loss},
                {"metric", r.metric},
                {"bytes", to_json(r.bytes)},
                {"wall_ns", r.wall_ns}};
}

inline MetricsRecord record_from_json(const json& j) {
    MetricsRecord r;
    r.step = j.at("step").get<std::int64_t>();
    r.loss = j.at("loss").get<double>();
    r.metric = j.at("metric").get<double>();
    r.bytes = byte_counts_from_json(j.at("bytes"));
    r.wall_ns = j.at("wall_ns").get<std::int64_t>();
    return r;
}

/// Line-delimited report: a versioned header object followed by one record
/// object per line. nlohmann serializes doubles with shortest-round-trip
/// digits and sorted keys, so serialize -> parse -> serialize is
/// byte-identical.
struct Report {
    json header;
    std::vector<MetricsRecord> records;
};

inline std::string serialize_report(const Report& report) {
    std::ostringstream out;
    json header = report.header;
    header["format"] = "neuroada-report";
    header["version"] = 1;
    out << header.dump() << "\n";
    for (const auto& r : report.records) {
        out << to_json(r).dump() << "\n";
    }
    return out.str();
}

inline Report parse_report(std::istream& in, const std::string& origin = "report") {
    Report report;
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError(origin + ": empty report");
    }
    report.header = json::parse(line);
    if (report.header.value("format", "") != "neuroada-report" ||
        report.header.value("version", 0) != 1) {
        throw ConfigError(origin + ": not a version-1 neuroada report");
    }
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        report.records.push_back(record_from_json(json::parse(line)));
    }
    return report;
}

inline Report parse_report_string(const std::string& text, const std::string& origin = "report") {
    std::istringstream in(text);
    return parse_report(in, origin);
}

/// The same report with wall-clock fields zeroed: the canonical form that
/// identical runs must reproduce byte for byte (wall time is the one
/// physically nondeterministic field in a record).
inline std::string canonical_report(const Report& report) {
    Report c = report;
    for (auto& r : c.records) {
        r.wall_ns = 0;
    }
    return serialize_report(c);
}

}  // namespace neuroada
