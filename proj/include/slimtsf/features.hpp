#pragma once

// Multi-scale sliding-window interval features.
//
// For every parameter and every window scale the featurizer emits
// (mean, std, slope) for each interval, followed by the max/min/mean pooling
// of each statistic across intervals. Every output column carries a
// FeatureDescriptor whose canonical id is stable across runs.

#include <algorithm>
#include <array>
#include <cmath>
#include <charconv>
#include <compare>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "slimtsf/data.hpp"
#include "slimtsf/error.hpp"
#include "slimtsf/io.hpp"
#include "slimtsf/parallel.hpp"

namespace slimtsf {

struct WindowConfig {
    std::size_t window = 2;
    std::size_t step = 1;

    auto operator<=>(const WindowConfig&) const = default;

    /// Throws ArgumentError unless 2 <= window <= T and step >= 1.
    void validate(std::size_t series_length) const {
        if (window < 2) throw ArgumentError("window size must be >= 2, got " + std::to_string(window));
        if (step < 1) throw ArgumentError("step size must be >= 1");
        if (window > series_length)
            throw ArgumentError("window size " + std::to_string(window) + " exceeds series length " +
                                std::to_string(series_length));
    }

    std::string tag() const { return "w" + std::to_string(window) + "s" + std::to_string(step); }
};

using ScaleGrid = std::vector<WindowConfig>;

inline void validate_scale_grid(const ScaleGrid& grid) {
    if (grid.empty()) throw ArgumentError("scale grid must not be empty");
    std::set<WindowConfig> seen;
    for (const auto& cfg : grid) {
        if (cfg.window < 2 || cfg.step < 1)
            throw ArgumentError("invalid window " + std::to_string(cfg.window) + ":" + std::to_string(cfg.step));
        if (!seen.insert(cfg).second) throw ArgumentError("duplicate window config " + cfg.tag());
    }
}

/// Parses "w:s,w:s,...".
inline ScaleGrid parse_scale_grid(std::string_view spec) {
    ScaleGrid grid;
    for (const auto& item : io::split(spec, ',')) {
        const auto colon = item.find(':');
        std::size_t w = 0, s = 0;
        auto parse = [](std::string_view t, std::size_t& out) {
            auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
            return !t.empty() && ec == std::errc{} && p == t.data() + t.size();
        };
        if (colon == std::string::npos || !parse(std::string_view(item).substr(0, colon), w) ||
            !parse(std::string_view(item).substr(colon + 1), s))
            throw ArgumentError("malformed window spec '" + item + "' (expected w:s)");
        grid.push_back({w, s});
    }
    validate_scale_grid(grid);
    return grid;
}

inline std::string format_scale_grid(const ScaleGrid& grid) {
    std::string out;
    for (const auto& c : grid) out += (out.empty() ? "" : ",") + std::to_string(c.window) + ":" + std::to_string(c.step);
    return out;
}

/// Fixture default: windows T/5, T/3, T/2 (floored, at least 2) with step w/2.
inline ScaleGrid default_scale_grid(std::size_t series_length) {
    ScaleGrid grid;
    for (std::size_t div : {5, 3, 2}) {
        const std::size_t w = std::max<std::size_t>(2, series_length / div);
        const WindowConfig cfg{w, std::max<std::size_t>(1, w / 2)};
        if (w <= series_length && std::find(grid.begin(), grid.end(), cfg) == grid.end()) grid.push_back(cfg);
    }
    return grid;
}

/// Half-open index range [start, end).
struct Interval {
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const Interval&, const Interval&) = default;
};

inline std::vector<Interval> generate_intervals(std::size_t series_length, const WindowConfig& cfg) {
    cfg.validate(series_length);
    std::vector<Interval> out;
    out.reserve((series_length - cfg.window) / cfg.step + 1);
    for (std::size_t start = 0; start + cfg.window <= series_length; start += cfg.step)
        out.push_back({start, start + cfg.window});
    return out;
}

enum class Statistic { Mean, Std, Slope };
enum class Pool { Max, Min, Mean };
enum class FeatureKind { Interval, Pooled };

inline constexpr std::array<Statistic, 3> kStatistics{Statistic::Mean, Statistic::Std, Statistic::Slope};
inline constexpr std::array<Pool, 3> kPools{Pool::Max, Pool::Min, Pool::Mean};

inline const char* to_string(Statistic s) {
    switch (s) {
    case Statistic::Mean: return "mean";
    case Statistic::Std: return "std";
    case Statistic::Slope: return "slope";
    }
    return "?";
}

inline const char* to_string(Pool p) {
    switch (p) {
    case Pool::Max: return "max";
    case Pool::Min: return "min";
    case Pool::Mean: return "mean";
    }
    return "?";
}

struct IntervalStats {
    double mean = 0.0;
    double std = 0.0;   // sample standard deviation, divisor n - 1
    double slope = 0.0; // OLS slope against the local timestep index

    double get(Statistic s) const {
        switch (s) {
        case Statistic::Mean: return mean;
        case Statistic::Std: return std;
        case Statistic::Slope: return slope;
        }
        return 0.0;
    }
};

inline IntervalStats interval_stats(std::span<const double> series, Interval interval) {
    if (interval.end > series.size() || interval.start >= interval.end)
        throw ArgumentError("interval out of range");
    const std::size_t n = interval.end - interval.start;
    if (n < 2) throw ArgumentError("interval must span at least 2 timesteps");
    const auto x = series.subspan(interval.start, n);
    double sum = 0.0;
    for (double v : x) sum += v;
    const double mean = sum / static_cast<double>(n);
    const double t_mean = static_cast<double>(n - 1) / 2.0;
    double ss = 0.0, sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mean;
        const double dt = static_cast<double>(i) - t_mean;
        ss += dx * dx;
        sxy += dt * dx;
        sxx += dt * dt;
    }
    return {mean, std::sqrt(ss / static_cast<double>(n - 1)), sxy / sxx};
}

/// Nine pooled values, statistic-major: for mean, std, slope in turn: max, min, mean.
using PooledStats = std::array<double, 9>;

inline std::size_t pooled_index(Statistic s, Pool p) {
    return static_cast<std::size_t>(s) * 3 + static_cast<std::size_t>(p);
}

inline PooledStats pool_stats(std::span<const IntervalStats> per_interval) {
    if (per_interval.empty()) throw ArgumentError("pool_stats needs at least one interval");
    PooledStats out{};
    for (auto stat : kStatistics) {
        double hi = per_interval.front().get(stat), lo = hi, sum = 0.0;
        for (const auto& s : per_interval) {
            const double v = s.get(stat);
            hi = std::max(hi, v);
            lo = std::min(lo, v);
            sum += v;
        }
        // Rounding in the sum can push the average a ulp outside [lo, hi].
        const double avg = std::clamp(sum / static_cast<double>(per_interval.size()), lo, hi);
        out[pooled_index(stat, Pool::Max)] = hi;
        out[pooled_index(stat, Pool::Min)] = lo;
        out[pooled_index(stat, Pool::Mean)] = avg;
    }
    return out;
}

/// Provenance of a single feature column.
struct FeatureDescriptor {
    std::string parameter_name;
    WindowConfig scale;
    FeatureKind kind = FeatureKind::Interval;
    std::optional<std::size_t> interval_index; // Interval only
    Statistic statistic = Statistic::Mean;
    std::optional<Pool> pool;                  // Pooled only

    /// `param|w{w}s{s}|int{i}|stat` or `param|w{w}s{s}|pool{p}|stat`.
    std::string canonical_id() const { return parameter_name + "|" + scale.tag() + "|" + slot() + "|" + to_string(statistic); }

    /// The interval-or-pool component of the id, e.g. "int3" or "poolmax".
    std::string slot() const {
        return kind == FeatureKind::Interval ? "int" + std::to_string(interval_index.value_or(0))
                                             : std::string("pool") + to_string(pool.value_or(Pool::Max));
    }

    static FeatureDescriptor parse(std::string_view id) {
        const auto parts = io::split(id, '|');
        auto fail = [&]() -> FeatureDescriptor { throw ValidationError("malformed feature id '" + std::string(id) + "'"); };
        if (parts.size() != 4 || parts[0].empty()) return fail();
        FeatureDescriptor d;
        d.parameter_name = parts[0];
        std::size_t w = 0, s = 0;
        if (std::sscanf(parts[1].c_str(), "w%zus%zu", &w, &s) != 2 || "w" + std::to_string(w) + "s" + std::to_string(s) != parts[1])
            return fail();
        d.scale = {w, s};
        const std::string& slot = parts[2];
        if (slot.rfind("int", 0) == 0) {
            std::size_t i = 0;
            const auto digits = std::string_view(slot).substr(3);
            auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
            if (digits.empty() || ec != std::errc{} || p != digits.data() + digits.size()) return fail();
            d.kind = FeatureKind::Interval;
            d.interval_index = i;
        } else if (slot == "poolmax" || slot == "poolmin" || slot == "poolmean") {
            d.kind = FeatureKind::Pooled;
            d.pool = slot == "poolmax" ? Pool::Max : slot == "poolmin" ? Pool::Min : Pool::Mean;
        } else {
            return fail();
        }
        if (parts[3] == "mean") d.statistic = Statistic::Mean;
        else if (parts[3] == "std") d.statistic = Statistic::Std;
        else if (parts[3] == "slope") d.statistic = Statistic::Slope;
        else return fail();
        return d;
    }

    friend bool operator==(const FeatureDescriptor&, const FeatureDescriptor&) = default;
};

/// Column layout for P parameters of length T under `grid`:
/// parameters outer, scales inner; per scale all interval stats then the 9 pooled values.
inline std::vector<FeatureDescriptor> describe_features(std::span<const std::string> parameters,
                                                        std::size_t series_length, const ScaleGrid& grid) {
    validate_scale_grid(grid);
    std::vector<FeatureDescriptor> out;
    for (const auto& param : parameters) {
        for (const auto& cfg : grid) {
            const std::size_t n_intervals = generate_intervals(series_length, cfg).size();
            for (std::size_t i = 0; i < n_intervals; ++i)
                for (auto stat : kStatistics)
                    out.push_back({param, cfg, FeatureKind::Interval, i, stat, std::nullopt});
            for (auto stat : kStatistics)
                for (auto pool : kPools)
                    out.push_back({param, cfg, FeatureKind::Pooled, std::nullopt, stat, pool});
        }
    }
    return out;
}

/// sum over scales of P * (3 * intervals + 9).
inline std::size_t feature_count(std::size_t n_parameters, std::size_t series_length, const ScaleGrid& grid) {
    std::size_t per_param = 0;
    for (const auto& cfg : grid) per_param += 3 * generate_intervals(series_length, cfg).size() + 9;
    return n_parameters * per_param;
}

struct FeatureVector {
    std::vector<double> values;
    std::vector<FeatureDescriptor> descriptors;
};

namespace detail {

inline void featurize_values(const TimeSeriesInstance& inst, const ScaleGrid& grid, std::vector<double>& out) {
    const std::size_t t = inst.length();
    std::vector<IntervalStats> stats;
    for (std::size_t p = 0; p < inst.parameter_count(); ++p) {
        const auto series = inst.series(p);
        for (const auto& cfg : grid) {
            stats.clear();
            for (const auto& iv : generate_intervals(t, cfg)) stats.push_back(interval_stats(series, iv));
            for (const auto& s : stats) {
                out.push_back(s.mean);
                out.push_back(s.std);
                out.push_back(s.slope);
            }
            const auto pooled = pool_stats(stats);
            out.insert(out.end(), pooled.begin(), pooled.end());
        }
    }
}

} // namespace detail

inline FeatureVector featurize_instance(const TimeSeriesInstance& inst, const ScaleGrid& grid) {
    validate_scale_grid(grid);
    for (const auto& cfg : grid) cfg.validate(inst.length());
    if (!inst.is_complete())
        throw ValidationError("instance " + inst.instance_id + " contains NaN/Inf; impute before featurizing");
    FeatureVector fv;
    fv.descriptors = describe_features(inst.parameter_names, inst.length(), grid);
    fv.values.reserve(fv.descriptors.size());
    detail::featurize_values(inst, grid, fv.values);
    return fv;
}

/// Instances x features table; rows stored row-major.
struct FeatureMatrix {
    std::vector<FeatureDescriptor> descriptors;
    std::vector<std::string> instance_ids;
    std::vector<BinaryLabel> labels;
    std::vector<double> values;

    std::size_t rows() const { return instance_ids.size(); }
    std::size_t cols() const { return descriptors.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols(), cols()}; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(descriptors.size());
        for (const auto& d : descriptors) out.push_back(d.canonical_id());
        return out;
    }

    /// Matrix holding the given rows (duplicates allowed) in the given order.
    FeatureMatrix take_rows(std::span<const std::size_t> indices) const {
        FeatureMatrix out;
        out.descriptors = descriptors;
        out.values.reserve(indices.size() * cols());
        for (auto i : indices) {
            out.instance_ids.push_back(instance_ids[i]);
            out.labels.push_back(labels[i]);
            const auto r = row(i);
            out.values.insert(out.values.end(), r.begin(), r.end());
        }
        return out;
    }
};

inline FeatureMatrix featurize_dataset(const Dataset& ds, const ScaleGrid& grid, std::size_t workers = 1) {
    validate_scale_grid(grid);
    FeatureMatrix fm;
    if (ds.empty()) return fm;
    const std::size_t t = ds[0].length();
    for (const auto& inst : ds.instances()) {
        if (inst.length() != t)
            throw ValidationError("mixed series lengths: " + inst.instance_id + " has T=" + std::to_string(inst.length()) +
                                  ", expected " + std::to_string(t));
        if (!inst.is_complete())
            throw ValidationError("instance " + inst.instance_id + " contains NaN/Inf; impute before featurizing");
    }
    for (const auto& cfg : grid) cfg.validate(t);
    fm.descriptors = describe_features(ds.parameter_names(), t, grid);
    const std::size_t cols = fm.descriptors.size();
    fm.values.resize(ds.size() * cols);
    parallel_for(ds.size(), workers, [&](std::size_t i) {
        std::vector<double> row;
        row.reserve(cols);
        detail::featurize_values(ds[i], grid, row);
        std::copy(row.begin(), row.end(), fm.values.begin() + static_cast<std::ptrdiff_t>(i * cols));
    });
    for (const auto& inst : ds.instances()) {
        fm.instance_ids.push_back(inst.instance_id);
        fm.labels.push_back(inst.label);
    }
    return fm;
}

/// Column subset in original column order.
inline FeatureMatrix select_columns(const FeatureMatrix& fm, const std::set<std::string>& keep) {
    if (keep.empty()) throw ArgumentError("cannot select an empty feature set");
    std::vector<std::size_t> cols;
    std::set<std::string> found;
    for (std::size_t j = 0; j < fm.cols(); ++j) {
        auto id = fm.descriptors[j].canonical_id();
        if (keep.count(id)) {
            cols.push_back(j);
            found.insert(std::move(id));
        }
    }
    for (const auto& id : keep)
        if (!found.count(id)) throw ArgumentError("unknown feature id: " + id);
    FeatureMatrix out;
    out.instance_ids = fm.instance_ids;
    out.labels = fm.labels;
    for (auto j : cols) out.descriptors.push_back(fm.descriptors[j]);
    out.values.reserve(fm.rows() * cols.size());
    for (std::size_t i = 0; i < fm.rows(); ++i)
        for (auto j : cols) out.values.push_back(fm.at(i, j));
    return out;
}

inline nlohmann::json descriptor_to_json(const FeatureDescriptor& d) {
    nlohmann::json j;
    j["id"] = d.canonical_id();
    j["parameter"] = d.parameter_name;
    j["window"] = d.scale.window;
    j["step"] = d.scale.step;
    j["kind"] = d.kind == FeatureKind::Interval ? "interval" : "pooled";
    if (d.interval_index) j["interval_index"] = *d.interval_index;
    if (d.pool) j["pool"] = to_string(*d.pool);
    j["statistic"] = to_string(d.statistic);
    return j;
}

/// Writes features.csv (header = canonical ids) and the features.json sidecar.
inline void save_feature_matrix(const FeatureMatrix& fm, const std::filesystem::path& dir) {
    std::string csv;
    const auto ids = fm.ids();
    for (std::size_t j = 0; j < ids.size(); ++j) csv += (j ? "," : "") + ids[j];
    csv += '\n';
    for (std::size_t i = 0; i < fm.rows(); ++i) {
        for (std::size_t j = 0; j < fm.cols(); ++j) {
            if (j) csv += ',';
            csv += io::format_double(fm.at(i, j));
        }
        csv += '\n';
    }
    io::write_file_atomic(dir / "features.csv", csv);

    nlohmann::json side;
    side["instance_ids"] = fm.instance_ids;
    nlohmann::json labels = nlohmann::json::array();
    for (auto l : fm.labels) labels.push_back(to_string(l));
    side["labels"] = labels;
    nlohmann::json descs = nlohmann::json::array();
    for (const auto& d : fm.descriptors) descs.push_back(descriptor_to_json(d));
    side["descriptors"] = descs;
    io::write_file_atomic(dir / "features.json", side.dump(2) + "\n");
}

inline FeatureMatrix load_feature_matrix(const std::filesystem::path& dir) {
    const auto side = nlohmann::json::parse(io::read_file(dir / "features.json"));
    FeatureMatrix fm;
    fm.instance_ids = side.at("instance_ids").get<std::vector<std::string>>();
    for (const auto& l : side.at("labels")) {
        const auto s = l.get<std::string>();
        if (s != "flaring" && s != "nonflaring") throw ValidationError("bad label in features.json: " + s);
        fm.labels.push_back(s == "flaring" ? BinaryLabel::Flaring : BinaryLabel::NonFlaring);
    }
    for (const auto& d : side.at("descriptors")) fm.descriptors.push_back(FeatureDescriptor::parse(d.at("id").get<std::string>()));

    const std::string csv = io::read_file(dir / "features.csv");
    std::size_t pos = csv.find('\n');
    if (pos == std::string::npos) throw ValidationError("features.csv has no header");
    const auto header = io::split(std::string_view(csv).substr(0, pos), ',');
    if (header != fm.ids() && !(header.size() == 1 && header[0].empty() && fm.cols() == 0))
        throw ValidationError("features.csv header does not match features.json descriptors");
    ++pos;
    while (pos < csv.size()) {
        auto end = csv.find('\n', pos);
        if (end == std::string::npos) end = csv.size();
        const auto cells = io::split(std::string_view(csv).substr(pos, end - pos), ',');
        if (cells.size() != fm.cols()) throw ValidationError("features.csv row has wrong column count");
        for (const auto& c : cells) {
            double v = 0.0;
            if (!io::parse_double(c, v) || !std::isfinite(v)) throw ValidationError("non-finite value in features.csv");
            fm.values.push_back(v);
        }
        pos = end + 1;
    }
    if (fm.values.size() != fm.rows() * fm.cols()) throw ValidationError("features.csv row count does not match features.json");
    return fm;
}

} // namespace slimtsf
