#pragma once

// Multivariate time-series datasets: flare labels, instance loading from a
// JSON manifest plus one delimited file per instance, imputation, and
// partition-based splitting.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slimtsf/error.hpp"
#include "slimtsf/io.hpp"
#include "slimtsf/parallel.hpp"

namespace slimtsf {

enum class FlareClass { X, M, C, B, A, FQ };

inline const char* to_string(FlareClass c) {
    switch (c) {
    case FlareClass::X: return "X";
    case FlareClass::M: return "M";
    case FlareClass::C: return "C";
    case FlareClass::B: return "B";
    case FlareClass::A: return "A";
    case FlareClass::FQ: return "FQ";
    }
    return "?";
}

/// GOES flare class as it appears in source data, e.g. "M1.0", "C9.9", "FQ".
struct FlareLabel {
    FlareClass letter = FlareClass::FQ;
    std::optional<double> magnitude;

    static FlareLabel parse(std::string_view text) {
        while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
        while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
        const std::string original(text);
        if (text == "FQ" || text == "fq") return FlareLabel{FlareClass::FQ, std::nullopt};
        if (text.empty()) throw LabelError("empty flare label");
        FlareLabel label;
        switch (std::toupper(static_cast<unsigned char>(text.front()))) {
        case 'X': label.letter = FlareClass::X; break;
        case 'M': label.letter = FlareClass::M; break;
        case 'C': label.letter = FlareClass::C; break;
        case 'B': label.letter = FlareClass::B; break;
        case 'A': label.letter = FlareClass::A; break;
        default: throw LabelError("unparseable flare label: '" + original + "'");
        }
        text.remove_prefix(1);
        if (!text.empty()) {
            double m = 0.0;
            if (!io::parse_double(text, m) || !std::isfinite(m) || m < 0.0)
                throw LabelError("unparseable flare label: '" + original + "'");
            label.magnitude = m;
        }
        return label;
    }

    std::string str() const {
        std::string s = to_string(letter);
        if (magnitude) {
            std::string m = io::format_double(*magnitude);
            if (m.find_first_of(".e") == std::string::npos) m += ".0";
            s += m;
        }
        return s;
    }

    friend bool operator==(const FlareLabel&, const FlareLabel&) = default;
};

enum class BinaryLabel : std::uint8_t { NonFlaring = 0, Flaring = 1 };

inline const char* to_string(BinaryLabel b) {
    return b == BinaryLabel::Flaring ? "flaring" : "nonflaring";
}

/// M- and X-class are the positive class; everything below M1.0 is negative.
inline BinaryLabel binarize_label(const FlareLabel& raw) {
    return (raw.letter == FlareClass::M || raw.letter == FlareClass::X) ? BinaryLabel::Flaring
                                                                       : BinaryLabel::NonFlaring;
}

/// Seconds since the Unix epoch for "YYYY-MM-DD[ T]HH:MM:SS[.fff][Z]" (UTC).
inline std::optional<std::int64_t> parse_utc_seconds(std::string_view text) {
    auto num = [&](std::size_t pos, std::size_t len, int& out) {
        if (pos + len > text.size()) return false;
        auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        return ec == std::errc{} && p == text.data() + pos + len;
    };
    while (!text.empty() && (text.back() == ' ' || text.back() == '\r' || text.back() == '"')) text.remove_suffix(1);
    while (!text.empty() && (text.front() == ' ' || text.front() == '"')) text.remove_prefix(1);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    if (text.size() < 10 || !num(0, 4, y) || text[4] != '-' || !num(5, 2, mo) || text[7] != '-' || !num(8, 2, d))
        return std::nullopt;
    if (text.size() > 10) {
        if (text.size() < 19 || (text[10] != 'T' && text[10] != ' ') || !num(11, 2, h) || text[13] != ':' ||
            !num(14, 2, mi) || text[16] != ':' || !num(17, 2, s))
            return std::nullopt;
        std::string_view rest = text.substr(19);
        if (!rest.empty() && rest.front() == '.') {
            rest.remove_prefix(1);
            while (!rest.empty() && std::isdigit(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
        }
        if (rest == "Z") rest.remove_prefix(1);
        if (!rest.empty()) return std::nullopt;
    }
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return std::nullopt;
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

/// "YYYY-MM-DD HH:MM:SS" for seconds since the Unix epoch (UTC).
inline std::string format_utc_seconds(std::int64_t seconds) {
    using namespace std::chrono;
    const auto days = static_cast<std::int64_t>(std::floor(static_cast<double>(seconds) / 86400.0));
    const std::int64_t rem = seconds - days * 86400;
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                  static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
    return buf;
}

/// One observation-window slice: P parameter series of common length T.
struct TimeSeriesInstance {
    std::string instance_id;
    std::optional<std::int64_t> ar_number;
    std::string partition_id;
    std::string start_ts;
    std::string end_ts;
    std::vector<std::string> parameter_names;
    std::vector<std::string> timestamps;  // one per timestep, ascending
    std::vector<double> values;           // P x T, row-major by parameter
    BinaryLabel label = BinaryLabel::NonFlaring;
    FlareLabel raw_label;
    /// Parameters that were entirely missing and zero-filled by imputation.
    std::vector<std::string> flagged_parameters;

    std::size_t parameter_count() const { return parameter_names.size(); }
    std::size_t length() const { return parameter_names.empty() ? 0 : values.size() / parameter_names.size(); }

    std::span<const double> series(std::size_t p) const {
        const std::size_t t = length();
        return {values.data() + p * t, t};
    }
    std::span<double> series(std::size_t p) {
        const std::size_t t = length();
        return {values.data() + p * t, t};
    }

    bool is_complete() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
    }
};

/// Instances sharing one ordered parameter list, sorted by instance_id.
class Dataset {
public:
    Dataset() = default;

    explicit Dataset(std::vector<TimeSeriesInstance> instances) : instances_(std::move(instances)) {
        std::sort(instances_.begin(), instances_.end(),
                  [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
        for (std::size_t i = 1; i < instances_.size(); ++i)
            if (instances_[i].instance_id == instances_[i - 1].instance_id)
                throw ValidationError("duplicate instance_id: " + instances_[i].instance_id);
        if (!instances_.empty()) parameter_names_ = instances_.front().parameter_names;
        std::set<std::string> seen;
        for (const auto& name : parameter_names_)
            if (!seen.insert(name).second) throw SchemaError("duplicate parameter name: " + name);
        for (const auto& inst : instances_) {
            if (inst.parameter_names != parameter_names_)
                throw SchemaError("instance " + inst.instance_id + " has a different parameter list");
            if (inst.values.size() != inst.parameter_count() * inst.timestamps.size() || inst.length() < 2)
                throw ValidationError("instance " + inst.instance_id + " needs at least 2 timesteps per parameter");
        }
    }

    const std::vector<TimeSeriesInstance>& instances() const { return instances_; }
    const std::vector<std::string>& parameter_names() const { return parameter_names_; }
    std::size_t size() const { return instances_.size(); }
    bool empty() const { return instances_.empty(); }
    const TimeSeriesInstance& operator[](std::size_t i) const { return instances_[i]; }

    std::set<std::string> partitions() const {
        std::set<std::string> out;
        for (const auto& inst : instances_) out.insert(inst.partition_id);
        return out;
    }

    template <class Pred>
    Dataset filter(Pred&& keep) const {
        std::vector<TimeSeriesInstance> out;
        for (const auto& inst : instances_)
            if (keep(inst)) out.push_back(inst);
        Dataset ds(std::move(out));
        if (ds.parameter_names_.empty()) ds.parameter_names_ = parameter_names_;
        return ds;
    }

private:
    std::vector<TimeSeriesInstance> instances_;
    std::vector<std::string> parameter_names_;
};

/// Column naming for instance files. An empty parameter list means "every
/// column of the first file except the timestamp".
struct IngestSchema {
    std::string timestamp_column = "Timestamp";
    std::vector<std::string> parameter_columns;
};

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& entry, const char* key, std::size_t index) {
    if (!entry.is_object() || !entry.contains(key))
        throw SchemaError("manifest entry " + std::to_string(index) + " is missing required key '" + key + "'");
    return entry.at(key);
}

inline std::string json_text(const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
}

inline void check_parameter_name(const std::string& name) {
    if (name.empty() || name.find_first_of("|,\t\n\r") != std::string::npos)
        throw SchemaError("invalid parameter name '" + name + "' (must be non-empty, without '|', ',' or whitespace separators)");
}

struct ParsedFile {
    std::vector<std::string> timestamps;
    std::vector<double> values;
    bool ragged = false;
};

inline ParsedFile parse_instance_file(const std::filesystem::path& file, const IngestSchema& schema,
                                      const std::vector<std::string>& params) {
    const std::string text = io::read_file(file);
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
        start = end + 1;
    }
    if (lines.empty()) throw SchemaError("empty instance file: " + file.string());
    const char delim = lines.front().find('\t') != std::string_view::npos ? '\t' : ',';
    const auto header = io::split(lines.front(), delim);
    auto column_of = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw SchemaError("missing column '" + name + "' in " + file.string());
    };
    const std::size_t ts_col = column_of(schema.timestamp_column);
    std::vector<std::size_t> cols;
    cols.reserve(params.size());
    for (const auto& p : params) cols.push_back(column_of(p));

    struct Row {
        std::int64_t ts;
        std::string ts_text;
        std::vector<double> cells;
    };
    ParsedFile out;
    std::vector<Row> rows;
    rows.reserve(lines.size() - 1);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto cells = io::split(lines[li], delim);
        if (cells.size() != header.size()) {
            out.ragged = true;
            return out;
        }
        Row row;
        row.ts_text = cells[ts_col];
        const auto ts = parse_utc_seconds(row.ts_text);
        if (!ts) throw ValidationError("unparseable timestamp '" + row.ts_text + "' in " + file.string());
        row.ts = *ts;
        row.cells.reserve(cols.size());
        for (auto c : cols) {
            double v = 0.0;
            if (!io::parse_double(cells[c], v))
                throw ValidationError("unparseable value '" + cells[c] + "' in " + file.string());
            row.cells.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
    const std::size_t t = rows.size();
    out.values.assign(params.size() * t, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
        out.timestamps.push_back(rows[i].ts_text);
        for (std::size_t p = 0; p < params.size(); ++p) out.values[p * t + i] = rows[i].cells[p];
    }
    return out;
}

inline std::vector<std::string> header_parameters(const std::filesystem::path& file, const IngestSchema& schema) {
    const std::string text = io::read_file(file);
    std::string_view first(text.data(), std::min(text.find('\n'), text.size()));
    if (!first.empty() && first.back() == '\r') first.remove_suffix(1);
    const char delim = first.find('\t') != std::string_view::npos ? '\t' : ',';
    std::vector<std::string> params;
    bool has_ts = false;
    for (auto& name : io::split(first, delim)) {
        if (name == schema.timestamp_column) has_ts = true;
        else params.push_back(name);
    }
    if (!has_ts) throw SchemaError("missing column '" + schema.timestamp_column + "' in " + file.string());
    return params;
}

} // namespace detail

/// Reads a manifest (or a directory holding manifest.json) and its instance
/// files. Values may still contain NaN; see impute_missing.
inline Dataset load_dataset(const std::filesystem::path& path, const IngestSchema& schema = {},
                            std::size_t workers = 1) {
    namespace fs = std::filesystem;
    fs::path manifest_path = path;
    if (fs::is_directory(manifest_path)) manifest_path /= "manifest.json";
    if (!fs::exists(manifest_path)) throw IoError("manifest not found: " + manifest_path.string(), manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(io::read_file(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("manifest is not valid JSON: " + std::string(e.what()));
    }
    if (!manifest.is_array()) throw SchemaError("manifest must be a JSON array of instance entries");
    const fs::path base = manifest_path.parent_path();

    std::vector<TimeSeriesInstance> instances(manifest.size());
    std::vector<fs::path> files(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& e = manifest[i];
        auto& inst = instances[i];
        inst.instance_id = detail::json_text(detail::require_key(e, "instance_id", i));
        files[i] = base / detail::require_key(e, "file", i).get<std::string>();
        inst.partition_id = detail::json_text(detail::require_key(e, "partition_id", i));
        inst.raw_label = FlareLabel::parse(detail::json_text(detail::require_key(e, "label", i)));
        inst.label = binarize_label(inst.raw_label);
        inst.start_ts = detail::json_text(detail::require_key(e, "start_ts", i));
        inst.end_ts = detail::json_text(detail::require_key(e, "end_ts", i));
        if (e.contains("ar_number") && !e["ar_number"].is_null()) {
            const auto& ar = e["ar_number"];
            if (!ar.is_number_integer()) throw SchemaError("ar_number must be an integer for " + inst.instance_id);
            inst.ar_number = ar.get<std::int64_t>();
        }
        if (e.contains("flagged_parameters"))
            inst.flagged_parameters = e["flagged_parameters"].get<std::vector<std::string>>();
        const auto start = parse_utc_seconds(inst.start_ts);
        const auto end = parse_utc_seconds(inst.end_ts);
        if (!start || !end) throw ValidationError("unparseable start_ts/end_ts for " + inst.instance_id);
        if (!(*start < *end)) throw ValidationError("start_ts must precede end_ts for " + inst.instance_id);
        if (!fs::exists(files[i])) throw IoError("instance file not found: " + files[i].string(), files[i].string());
    }

    std::vector<std::string> params = schema.parameter_columns;
    if (params.empty() && !files.empty()) params = detail::header_parameters(files.front(), schema);
    for (const auto& p : params) detail::check_parameter_name(p);

    std::vector<detail::ParsedFile> parsed(files.size());
    parallel_for(files.size(), workers, [&](std::size_t i) {
        parsed[i] = detail::parse_instance_file(files[i], schema, params);
    });
    std::vector<std::string> ragged;
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        if (parsed[i].ragged || parsed[i].timestamps.size() < 2) ragged.push_back(instances[i].instance_id);
        instances[i].parameter_names = params;
        instances[i].timestamps = std::move(parsed[i].timestamps);
        instances[i].values = std::move(parsed[i].values);
    }
    if (!ragged.empty()) {
        std::sort(ragged.begin(), ragged.end());
        std::string ids;
        for (const auto& id : ragged) ids += (ids.empty() ? "" : ", ") + id;
        throw ValidationError("ragged or too-short series (need uniform rows and T >= 2) in instances: " + ids);
    }
    return Dataset(std::move(instances));
}

/// Writes a dataset as manifest.json plus instances/<id>.csv under `dir`.
/// Values use shortest round-trip formatting, so reloading is bit-exact.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "instances");
    nlohmann::json manifest = nlohmann::json::array();
    std::set<std::string> used;
    for (const auto& inst : ds.instances()) {
        std::string stem;
        for (char c : inst.instance_id)
            stem += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
        std::string name = stem;
        for (int n = 1; !used.insert(name).second; ++n) name = stem + "~" + std::to_string(n);
        const std::string rel = "instances/" + name + ".csv";

        std::string body = "Timestamp";
        for (const auto& p : inst.parameter_names) body += "," + p;
        body += '\n';
        const std::size_t t = inst.length();
        for (std::size_t i = 0; i < t; ++i) {
            body += inst.timestamps[i];
            for (std::size_t p = 0; p < inst.parameter_count(); ++p) {
                body += ',';
                body += io::format_double(inst.values[p * t + i]);
            }
            body += '\n';
        }
        io::write_file_atomic(dir / rel, body);

        nlohmann::json e;
        e["instance_id"] = inst.instance_id;
        e["file"] = rel;
        e["partition_id"] = inst.partition_id;
        e["label"] = inst.raw_label.str();
        if (inst.ar_number) e["ar_number"] = *inst.ar_number;
        e["start_ts"] = inst.start_ts;
        e["end_ts"] = inst.end_ts;
        if (!inst.flagged_parameters.empty()) e["flagged_parameters"] = inst.flagged_parameters;
        manifest.push_back(std::move(e));
    }
    io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

enum class ImputePolicy {
    /// Linear interpolation between nearest valid neighbours, edge fill,
    /// zero-fill (and flag) for parameters with no valid value.
    LinearInterpolate,
    /// Replace every missing value with 0; all-missing parameters are flagged.
    ZeroFill,
};

inline ImputePolicy parse_impute_policy(std::string_view name) {
    if (name == "linear") return ImputePolicy::LinearInterpolate;
    if (name == "zero") return ImputePolicy::ZeroFill;
    throw ArgumentError("unknown impute policy '" + std::string(name) + "' (expected linear|zero)");
}

struct ImputeResult {
    TimeSeriesInstance instance;
    /// Parameters zero-filled by this call because they had no valid value.
    std::vector<std::string> flagged;
};

/// Removes NaN/Inf from every series. Total: never fails.
inline ImputeResult impute_missing(TimeSeriesInstance inst, ImputePolicy policy = ImputePolicy::LinearInterpolate) {
    ImputeResult result;
    for (std::size_t p = 0; p < inst.parameter_count(); ++p) {
        auto s = inst.series(p);
        std::vector<std::size_t> valid;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (std::isfinite(s[i])) valid.push_back(i);
        if (valid.size() == s.size()) continue;
        if (valid.empty()) {
            std::fill(s.begin(), s.end(), 0.0);
            result.flagged.push_back(inst.parameter_names[p]);
            continue;
        }
        if (policy == ImputePolicy::ZeroFill) {
            for (auto& v : s)
                if (!std::isfinite(v)) v = 0.0;
            continue;
        }
        for (std::size_t i = 0; i < valid.front(); ++i) s[i] = s[valid.front()];
        for (std::size_t i = valid.back() + 1; i < s.size(); ++i) s[i] = s[valid.back()];
        for (std::size_t k = 0; k + 1 < valid.size(); ++k) {
            const std::size_t a = valid[k], b = valid[k + 1];
            for (std::size_t i = a + 1; i < b; ++i) {
                const double frac = static_cast<double>(i - a) / static_cast<double>(b - a);
                s[i] = s[a] + (s[b] - s[a]) * frac;
            }
        }
    }
    for (const auto& f : result.flagged)
        if (std::find(inst.flagged_parameters.begin(), inst.flagged_parameters.end(), f) == inst.flagged_parameters.end())
            inst.flagged_parameters.push_back(f);
    std::sort(inst.flagged_parameters.begin(), inst.flagged_parameters.end());
    result.instance = std::move(inst);
    return result;
}

struct DatasetImputeResult {
    Dataset dataset;
    /// instance_id -> parameters zero-filled in this pass.
    std::map<std::string, std::vector<std::string>> flagged;
};

inline DatasetImputeResult impute_dataset(const Dataset& ds, ImputePolicy policy = ImputePolicy::LinearInterpolate) {
    DatasetImputeResult out;
    std::vector<TimeSeriesInstance> instances;
    instances.reserve(ds.size());
    for (const auto& inst : ds.instances()) {
        auto r = impute_missing(inst, policy);
        if (!r.flagged.empty()) out.flagged[inst.instance_id] = r.flagged;
        instances.push_back(std::move(r.instance));
    }
    out.dataset = Dataset(std::move(instances));
    return out;
}

/// Splits by partition id. Partition sets must be disjoint, nonempty and present in `ds`.
inline std::pair<Dataset, Dataset> partition_split(const Dataset& ds, const std::set<std::string>& train_parts,
                                                   const std::set<std::string>& test_parts) {
    if (train_parts.empty() || test_parts.empty()) throw ArgumentError("train and test partition sets must be nonempty");
    const auto present = ds.partitions();
    for (const auto* parts : {&train_parts, &test_parts})
        for (const auto& p : *parts) {
            if (!present.count(p)) throw ArgumentError("unknown partition id: " + p);
        }
    for (const auto& p : train_parts)
        if (test_parts.count(p)) throw ArgumentError("partition " + p + " is in both train and test sets");
    return {ds.filter([&](const auto& i) { return train_parts.count(i.partition_id) > 0; }),
            ds.filter([&](const auto& i) { return test_parts.count(i.partition_id) > 0; })};
}

struct ClassRatio {
    std::size_t flaring = 0;
    std::size_t nonflaring = 0;
    /// nonflaring / flaring; +infinity when there are no flaring instances.
    double imbalance_ratio = 0.0;
};

inline ClassRatio class_ratio(const Dataset& ds) {
    if (ds.empty()) throw ArgumentError("class_ratio of an empty dataset");
    ClassRatio r;
    for (const auto& inst : ds.instances()) (inst.label == BinaryLabel::Flaring ? r.flaring : r.nonflaring)++;
    r.imbalance_ratio = r.flaring == 0 ? std::numeric_limits<double>::infinity()
                                       : static_cast<double>(r.nonflaring) / static_cast<double>(r.flaring);
    return r;
}

/// The 24 SWAN-SF active-region parameters.
inline const std::vector<std::string>& swan_sf_parameters() {
    static const std::vector<std::string> names = {
        "TOTUSJH", "TOTBSQ",  "TOTPOT",  "TOTUSJZ", "ABSNJZH", "SAVNCPP", "USFLUX",  "TOTFZ",
        "MEANPOT", "EPSZ",    "MEANSHR", "SHRGT45", "MEANGAM", "MEANGBT", "MEANGBZ", "MEANGBH",
        "MEANJZH", "TOTFY",   "MEANJZD", "MEANALP", "TOTFX",   "EPSY",    "EPSX",    "R_VALUE"};
    return names;
}

} // namespace slimtsf
