#pragma once

// Feature ranking and cross-experiment aggregation of selected feature sets.
//
// Each experiment ranks its features by importance and keeps the top k as a
// membership vector. Summing membership vectors over experiments gives the
// SFS count per feature; the final selection takes the top k by count.
// All ties break by ascending canonical id.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slimtsf/error.hpp"
#include "slimtsf/features.hpp"

namespace slimtsf {

struct RankedFeature {
    std::string id;
    double importance = 0.0;
    friend bool operator==(const RankedFeature&, const RankedFeature&) = default;
};

/// Position i (0-based) holds the feature of rank i + 1.
using FeatureRanking = std::vector<RankedFeature>;

inline FeatureRanking rank_features(std::span<const std::string> ids, std::span<const double> importances) {
    if (ids.size() != importances.size()) throw ArgumentError("ids and importances differ in length");
    if (ids.empty()) throw ArgumentError("cannot rank an empty feature set");
    FeatureRanking out;
    out.reserve(ids.size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!std::isfinite(importances[i]) || importances[i] < 0.0)
            throw ValidationError("importance of " + ids[i] + " is not a finite non-negative number");
        if (!seen.insert(ids[i]).second) throw ValidationError("duplicate feature id " + ids[i]);
        out.push_back({ids[i], importances[i]});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.importance != b.importance ? a.importance > b.importance : a.id < b.id;
    });
    return out;
}

inline FeatureRanking rank_features(const std::map<std::string, double>& importances) {
    std::vector<std::string> ids;
    std::vector<double> vals;
    for (const auto& [id, v] : importances) {
        ids.push_back(id);
        vals.push_back(v);
    }
    return rank_features(ids, vals);
}

struct MembershipVector {
    std::string experiment_id;
    std::size_t k = 0;
    std::set<std::string> members;
};

inline MembershipVector top_k(const FeatureRanking& ranking, std::size_t k, std::string experiment_id = {}) {
    if (k < 1) throw ArgumentError("k must be >= 1");
    MembershipVector mv{std::move(experiment_id), k, {}};
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) mv.members.insert(ranking[i].id);
    return mv;
}

/// Summed top-k membership over experiments.
struct SFSVector {
    std::map<std::string, std::size_t> counts;
    std::size_t n_experiments = 0;
};

inline SFSVector aggregate_sfs(std::span<const MembershipVector> members) {
    SFSVector sfs;
    sfs.n_experiments = members.size();
    for (const auto& mv : members)
        for (const auto& id : mv.members) ++sfs.counts[id];
    return sfs;
}

/// max(1, floor(log2(n_features))).
inline std::size_t log_filter_k(std::size_t n_features) {
    if (n_features < 1) throw ArgumentError("log filter needs at least one feature");
    std::size_t k = 0;
    while ((n_features >> (k + 1)) != 0) ++k;
    return std::max<std::size_t>(1, k);
}

/// Top k ids by SFS count, ties by ascending id.
inline std::vector<std::string> select_final(const SFSVector& sfs, std::size_t k) {
    if (k < 1) throw ArgumentError("k must be >= 1");
    std::vector<std::pair<std::string, std::size_t>> items(sfs.counts.begin(), sfs.counts.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, items.size()); ++i) out.push_back(items[i].first);
    return out;
}

/// (parameter, scale, interval-or-pool) slot of a feature id.
struct IntervalSlot {
    std::string parameter;
    WindowConfig scale;
    std::string slot; // "int{i}" or "pool{max|min|mean}"

    auto operator<=>(const IntervalSlot& o) const {
        return std::tie(parameter, scale, slot) <=> std::tie(o.parameter, o.scale, o.slot);
    }
    bool operator==(const IntervalSlot&) const = default;

    std::string str() const { return parameter + "|" + scale.tag() + "|" + slot; }
};

using CountingVector = std::map<IntervalSlot, std::size_t>;

/// Sums SFS counts across statistics for each interval slot.
inline CountingVector counting_vector(const SFSVector& sfs) {
    CountingVector ct;
    for (const auto& [id, count] : sfs.counts) {
        const auto d = FeatureDescriptor::parse(id);
        ct[{d.parameter_name, d.scale, d.slot()}] += count;
    }
    return ct;
}

/// As above, additionally requiring every id to appear in `descriptors`.
inline CountingVector counting_vector(const SFSVector& sfs, std::span<const FeatureDescriptor> descriptors) {
    std::set<std::string> known;
    for (const auto& d : descriptors) known.insert(d.canonical_id());
    for (const auto& [id, count] : sfs.counts)
        if (!known.count(id)) throw ValidationError("feature id not among descriptors: " + id);
    return counting_vector(sfs);
}

/// Parameter names touched by a set of feature ids.
template <class Range>
std::set<std::string> parameters_of(const Range& ids) {
    std::set<std::string> out;
    for (const auto& id : ids) out.insert(FeatureDescriptor::parse(id).parameter_name);
    return out;
}

/// Fraction of runs in which any feature of each parameter was selected.
inline std::map<std::string, double> participation_ratio(std::span<const std::set<std::string>> selected_parameters,
                                                         std::size_t n_runs) {
    if (n_runs < 1) throw ArgumentError("participation ratio needs n_runs >= 1");
    std::map<std::string, std::size_t> hits;
    for (const auto& run : selected_parameters)
        for (const auto& p : run) ++hits[p];
    std::map<std::string, double> out;
    for (const auto& [p, h] : hits) out[p] = static_cast<double>(h) / static_cast<double>(n_runs);
    return out;
}

inline nlohmann::json to_json(const FeatureRanking& r) {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t i = 0; i < r.size(); ++i) j.push_back({{"rank", i + 1}, {"id", r[i].id}, {"importance", r[i].importance}});
    return j;
}

inline nlohmann::json to_json(const SFSVector& s) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [id, c] : s.counts) counts[id] = c;
    return {{"n_experiments", s.n_experiments}, {"counts", counts}};
}

inline SFSVector sfs_from_json(const nlohmann::json& j) {
    SFSVector s;
    s.n_experiments = j.at("n_experiments").get<std::size_t>();
    for (const auto& [id, c] : j.at("counts").items()) s.counts[id] = c.get<std::size_t>();
    return s;
}

} // namespace slimtsf
