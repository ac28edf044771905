#pragma once

// Planted-signal datasets for tests, demos and the acceptance suite.
//
// Every parameter is white noise around a per-parameter baseline. For
// positive (flaring) instances exactly one parameter has its mean shifted by
// `shift` over [signal_start, signal_end). Partitions are contiguous blocks
// in time with an equal share of positives.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "slimtsf/data.hpp"
#include "slimtsf/rng.hpp"

namespace slimtsf {

struct PlantedSignalSpec {
    std::size_t n_instances = 500;
    std::size_t n_parameters = 10;
    std::size_t length = 60;
    double positive_fraction = 0.2;
    std::size_t n_partitions = 5;
    std::size_t planted_parameter = 0;
    std::size_t signal_start = 24;
    std::size_t signal_end = 36;
    double shift = 3.0;
    double noise = 1.0;
    /// Probability that any single value is replaced by NaN (exercises imputation).
    double missing_rate = 0.0;
    std::uint64_t seed = 0;
};

inline std::string synthetic_parameter_name(std::size_t p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "param%02zu", p);
    return buf;
}

inline Dataset make_planted_dataset(const PlantedSignalSpec& spec) {
    if (spec.n_partitions < 1 || spec.n_instances < spec.n_partitions || spec.length < 2 ||
        spec.planted_parameter >= spec.n_parameters || spec.signal_end > spec.length || spec.signal_start >= spec.signal_end)
        throw ArgumentError("invalid planted-signal spec");
    Rng rng(spec.seed);
    std::vector<std::string> names;
    for (std::size_t p = 0; p < spec.n_parameters; ++p) names.push_back(synthetic_parameter_name(p));

    const std::int64_t cadence = 12 * 60; // 12-minute steps
    const std::int64_t epoch = 1262304000; // 2010-01-01
    std::vector<TimeSeriesInstance> out;
    std::size_t next_id = 0;
    for (std::size_t part = 0; part < spec.n_partitions; ++part) {
        const std::size_t begin = spec.n_instances * part / spec.n_partitions;
        const std::size_t end = spec.n_instances * (part + 1) / spec.n_partitions;
        const std::size_t m = end - begin;
        const auto n_pos = static_cast<std::size_t>(std::llround(spec.positive_fraction * static_cast<double>(m)));
        std::vector<bool> positive(m, false);
        for (std::size_t i = 0; i < n_pos && i < m; ++i) positive[i] = true;
        rng.shuffle(positive);
        for (std::size_t j = 0; j < m; ++j) {
            TimeSeriesInstance inst;
            char id[32];
            std::snprintf(id, sizeof(id), "inst%05zu", next_id++);
            inst.instance_id = id;
            inst.ar_number = static_cast<std::int64_t>(11000 + (next_id % 97));
            inst.partition_id = "P" + std::to_string(part + 1);
            const std::int64_t start = epoch + static_cast<std::int64_t>(part) * 86400 * 365 +
                                       static_cast<std::int64_t>(j) * 3600;
            inst.start_ts = format_utc_seconds(start);
            inst.end_ts = format_utc_seconds(start + cadence * static_cast<std::int64_t>(spec.length - 1));
            inst.parameter_names = names;
            for (std::size_t t = 0; t < spec.length; ++t)
                inst.timestamps.push_back(format_utc_seconds(start + cadence * static_cast<std::int64_t>(t)));
            inst.raw_label = positive[j] ? FlareLabel{FlareClass::M, 1.5}
                             : (j % 3 == 0) ? FlareLabel{FlareClass::C, 2.0}
                             : (j % 3 == 1) ? FlareLabel{FlareClass::B, 1.0}
                                            : FlareLabel{FlareClass::FQ, std::nullopt};
            inst.label = binarize_label(inst.raw_label);
            inst.values.resize(spec.n_parameters * spec.length);
            for (std::size_t p = 0; p < spec.n_parameters; ++p) {
                const double base = 10.0 * static_cast<double>(p);
                for (std::size_t t = 0; t < spec.length; ++t) {
                    double v = base + spec.noise * rng.normal();
                    if (positive[j] && p == spec.planted_parameter && t >= spec.signal_start && t < spec.signal_end)
                        v += spec.shift;
                    if (spec.missing_rate > 0.0 && rng.uniform() < spec.missing_rate)
                        v = std::numeric_limits<double>::quiet_NaN();
                    inst.values[p * spec.length + t] = v;
                }
            }
            out.push_back(std::move(inst));
        }
    }
    return Dataset(std::move(out));
}

} // namespace slimtsf
