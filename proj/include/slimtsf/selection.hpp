#pragma once

// Partition-aware grid search.
//
// Folds are built from whole dataset partitions, never from random row
// sampling, so time-adjacent (overlapping) windows cannot land on both sides
// of a fold. Each grid point is scored with a skill score and recorded in a
// content-addressed index keyed by a digest of its canonical configuration.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "slimtsf/data.hpp"
#include "slimtsf/error.hpp"
#include "slimtsf/features.hpp"
#include "slimtsf/forest.hpp"
#include "slimtsf/metrics.hpp"
#include "slimtsf/parallel.hpp"

namespace slimtsf {

struct Fold {
    std::set<std::string> train;
    std::set<std::string> validation;
    friend bool operator==(const Fold&, const Fold&) = default;
};

struct PartitionFoldPlan {
    std::vector<Fold> folds;

    void validate() const {
        if (folds.empty()) throw ArgumentError("fold plan has no folds");
        for (const auto& f : folds) {
            if (f.train.empty() || f.validation.empty())
                throw ArgumentError("every fold needs nonempty train and validation partition sets");
            for (const auto& p : f.train)
                if (f.validation.count(p)) throw ArgumentError("partition " + p + " is in both train and validation");
        }
    }
};

/// Leave-one-partition-out: one fold per partition, validated on that partition.
inline PartitionFoldPlan make_fold_plan(const Dataset& ds) {
    const auto parts = ds.partitions();
    if (parts.size() < 2) throw ArgumentError("partition folds need at least 2 partitions");
    PartitionFoldPlan plan;
    for (const auto& held_out : parts) {
        Fold f;
        f.validation = {held_out};
        for (const auto& p : parts)
            if (p != held_out) f.train.insert(p);
        plan.folds.push_back(std::move(f));
    }
    return plan;
}

/// Explicit folds, checked against the dataset.
inline PartitionFoldPlan make_fold_plan(const Dataset& ds, std::vector<Fold> folds) {
    const auto parts = ds.partitions();
    if (parts.size() < 2) throw ArgumentError("partition folds need at least 2 partitions");
    PartitionFoldPlan plan{std::move(folds)};
    plan.validate();
    for (const auto& f : plan.folds)
        for (const auto* side : {&f.train, &f.validation})
            for (const auto& p : *side)
                if (!parts.count(p)) throw ArgumentError("unknown partition id in fold plan: " + p);
    return plan;
}

/// Parses "P1,P2:P3;P1,P3:P2" (train:validation, folds separated by ';').
inline std::vector<Fold> parse_folds(std::string_view spec) {
    std::vector<Fold> folds;
    for (const auto& item : io::split(spec, ';')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ArgumentError("malformed fold '" + item + "' (expected train:validation)");
        Fold f;
        for (const auto& p : io::split(std::string_view(item).substr(0, colon), ','))
            if (!p.empty()) f.train.insert(p);
        for (const auto& p : io::split(std::string_view(item).substr(colon + 1), ','))
            if (!p.empty()) f.validation.insert(p);
        folds.push_back(std::move(f));
    }
    return folds;
}

struct Scorer {
    enum class Kind { Tss, Hss, WeightedTss };
    Kind kind = Kind::Tss;
    double alpha = 1.0;

    double operator()(const ContingencyTable& t) const {
        switch (kind) {
        case Kind::Tss: return tss(t);
        case Kind::Hss: return hss(t);
        case Kind::WeightedTss: return weighted_tss(t, alpha);
        }
        return tss(t);
    }

    std::string str() const {
        switch (kind) {
        case Kind::Tss: return "tss";
        case Kind::Hss: return "hss";
        case Kind::WeightedTss: return "wtss:" + alpha_key(alpha);
        }
        return "tss";
    }

    /// "tss", "hss" or "wtss:<alpha>".
    static Scorer parse(std::string_view s) {
        if (s == "tss") return {Kind::Tss, 1.0};
        if (s == "hss") return {Kind::Hss, 1.0};
        if (s.rfind("wtss:", 0) == 0) {
            double a = 0.0;
            if (!io::parse_double(s.substr(5), a) || !(a > 0.0 && a < 2.0))
                throw ArgumentError("wtss alpha must lie in (0, 2)");
            return {Kind::WeightedTss, a};
        }
        throw ArgumentError("unknown scorer '" + std::string(s) + "' (expected tss, hss or wtss:<alpha>)");
    }
};

/// Cartesian product axes. Every axis must be nonempty.
struct SearchGrid {
    std::vector<ScaleGrid> scale_grids;
    std::vector<std::size_t> n_trees{100};
    std::vector<std::optional<std::size_t>> max_depth{std::optional<std::size_t>{8}};
    std::vector<std::size_t> min_samples_leaf{5};
    std::vector<MaxFeatures> max_features{MaxFeatures{}};
    std::vector<double> class_weights{1.0};
    std::vector<bool> bootstrap_rows{true};
    /// nullopt = all features of the scale grid; otherwise a canonical-id subset.
    std::vector<std::optional<std::vector<std::string>>> feature_subsets{std::nullopt};
    Scorer scorer;
};

struct GridPoint {
    ScaleGrid scales;
    ForestParams params;
    std::optional<std::vector<std::string>> features;
};

/// Canonical JSON for a grid point; keys are sorted, numbers normalized, ids sorted.
inline nlohmann::json canonical_config(const GridPoint& g) {
    nlohmann::json scales = nlohmann::json::array();
    for (const auto& c : g.scales) scales.push_back({c.window, c.step});
    nlohmann::json j;
    j["scale_grid"] = scales;
    j["forest"] = to_json(g.params);
    j["forest"]["class_weight_positive"] = static_cast<double>(g.params.class_weight_positive);
    if (g.features) {
        auto ids = *g.features;
        std::sort(ids.begin(), ids.end());
        j["features"] = ids;
    } else {
        j["features"] = "all";
    }
    return j;
}

/// Hex SHA-256 of the canonical (sorted-key, compact) JSON text.
inline std::string config_digest(const nlohmann::json& config) {
    const std::string text = config.dump();
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

inline std::string config_digest(const GridPoint& g) { return config_digest(canonical_config(g)); }

struct ModelIndexEntry {
    std::string config_digest;
    nlohmann::json config;
    std::string scorer;
    /// Mean over defined folds; nullopt when every fold was undefined.
    std::optional<double> mean_score;
    std::vector<std::optional<double>> per_fold_scores;
    std::optional<double> mean_hss;
    std::vector<std::optional<double>> per_fold_hss;
    /// Folds whose score was undefined (e.g. no positives) and excluded from the mean.
    std::size_t undefined_folds = 0;
    std::size_t n_features = 0;
    std::string model_bundle_path; // relative to SearchOptions::model_dir; empty when no models were saved
};

inline nlohmann::json to_json(const ModelIndexEntry& e) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json folds = nlohmann::json::array(), hss_folds = nlohmann::json::array();
    for (const auto& v : e.per_fold_scores) folds.push_back(opt(v));
    for (const auto& v : e.per_fold_hss) hss_folds.push_back(opt(v));
    return {{"config_digest", e.config_digest}, {"config", e.config},         {"scorer", e.scorer},
            {"mean_score", opt(e.mean_score)},  {"per_fold_scores", folds},   {"mean_hss", opt(e.mean_hss)},
            {"per_fold_hss", hss_folds},        {"undefined_folds", e.undefined_folds},
            {"n_features", e.n_features},       {"model_bundle_path", e.model_bundle_path}};
}

inline ModelIndexEntry index_entry_from_json(const nlohmann::json& j) {
    auto opt = [](const nlohmann::json& v) { return v.is_null() ? std::optional<double>{} : v.get<double>(); };
    ModelIndexEntry e;
    e.config_digest = j.at("config_digest").get<std::string>();
    e.config = j.at("config");
    e.scorer = j.at("scorer").get<std::string>();
    e.mean_score = opt(j.at("mean_score"));
    for (const auto& v : j.at("per_fold_scores")) e.per_fold_scores.push_back(opt(v));
    e.mean_hss = opt(j.at("mean_hss"));
    for (const auto& v : j.at("per_fold_hss")) e.per_fold_hss.push_back(opt(v));
    e.undefined_folds = j.at("undefined_folds").get<std::size_t>();
    e.n_features = j.at("n_features").get<std::size_t>();
    e.model_bundle_path = j.at("model_bundle_path").get<std::string>();
    return e;
}

/// Instance ids seen on each side of one fold for one grid point.
struct FoldObservation {
    std::size_t grid_point = 0;
    std::size_t fold = 0;
    const std::vector<std::string>& train_ids;
    const std::vector<std::string>& validation_ids;
};

struct SearchOptions {
    std::size_t workers = 1;
    /// When set, each grid point's model (trained on every plan partition) is
    /// saved to <model_dir>/<digest>/model.json.
    std::optional<std::filesystem::path> model_dir;
    /// Called once per (grid point, fold); may be invoked from worker threads.
    std::function<void(const FoldObservation&)> observer;
};

struct SearchResult {
    ModelIndexEntry best;
    std::vector<ModelIndexEntry> index; // sorted by config_digest
};

inline std::vector<GridPoint> expand_grid(const SearchGrid& grid, std::uint64_t seed) {
    if (grid.scale_grids.empty() || grid.n_trees.empty() || grid.max_depth.empty() || grid.min_samples_leaf.empty() ||
        grid.max_features.empty() || grid.class_weights.empty() || grid.bootstrap_rows.empty() ||
        grid.feature_subsets.empty())
        throw ArgumentError("every search grid axis must be nonempty");
    std::vector<GridPoint> points;
    for (const auto& sg : grid.scale_grids)
        for (auto nt : grid.n_trees)
            for (const auto& md : grid.max_depth)
                for (auto msl : grid.min_samples_leaf)
                    for (const auto& mf : grid.max_features)
                        for (auto cw : grid.class_weights)
                            for (bool bs : grid.bootstrap_rows)
                                for (const auto& fs : grid.feature_subsets) {
                                    validate_scale_grid(sg);
                                    ForestParams p{nt, md, msl, mf, cw, bs, seed};
                                    p.validate();
                                    points.push_back({sg, p, fs});
                                }
    return points;
}

/// Ordering used to pick the best entry: higher mean score, then fewer
/// features, then lexicographically smaller digest. Undefined means rank last.
inline bool ranks_before(const ModelIndexEntry& a, const ModelIndexEntry& b) {
    if (a.mean_score.has_value() != b.mean_score.has_value()) return a.mean_score.has_value();
    if (a.mean_score && std::abs(*a.mean_score - *b.mean_score) > 1e-12) return *a.mean_score > *b.mean_score;
    if (a.n_features != b.n_features) return a.n_features < b.n_features;
    return a.config_digest < b.config_digest;
}

inline SearchResult grid_search(const Dataset& ds, const SearchGrid& grid, const PartitionFoldPlan& plan,
                                std::uint64_t seed, const SearchOptions& options = {}) {
    plan.validate();
    if (ds.empty()) throw ArgumentError("grid search on an empty dataset");
    const auto points = expand_grid(grid, seed);
    const auto present = ds.partitions();
    for (const auto& f : plan.folds)
        for (const auto* side : {&f.train, &f.validation})
            for (const auto& p : *side)
                if (!present.count(p)) throw ArgumentError("unknown partition id in fold plan: " + p);

    // Features depend only on the instance itself, so one featurization per
    // distinct scale grid is shared by every fold.
    std::map<ScaleGrid, FeatureMatrix> matrices;
    for (const auto& g : points)
        if (!matrices.count(g.scales)) matrices.emplace(g.scales, featurize_dataset(ds, g.scales, options.workers));

    struct FoldRows {
        std::vector<std::size_t> train, validation;
        std::vector<std::string> train_ids, validation_ids;
    };
    std::vector<FoldRows> fold_rows(plan.folds.size());
    std::vector<std::size_t> all_plan_rows;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto& part = ds[i].partition_id;
            if (plan.folds[f].train.count(part)) {
                fold_rows[f].train.push_back(i);
                fold_rows[f].train_ids.push_back(ds[i].instance_id);
            } else if (plan.folds[f].validation.count(part)) {
                fold_rows[f].validation.push_back(i);
                fold_rows[f].validation_ids.push_back(ds[i].instance_id);
            }
        }
    }
    std::set<std::string> plan_parts;
    for (const auto& f : plan.folds) {
        plan_parts.insert(f.train.begin(), f.train.end());
        plan_parts.insert(f.validation.begin(), f.validation.end());
    }
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (plan_parts.count(ds[i].partition_id)) all_plan_rows.push_back(i);

    std::vector<ModelIndexEntry> entries(points.size());
    parallel_for(points.size(), options.workers, [&](std::size_t gi) {
        const auto& point = points[gi];
        FeatureMatrix full = matrices.at(point.scales);
        if (point.features) full = select_columns(full, std::set<std::string>(point.features->begin(), point.features->end()));

        ModelIndexEntry& e = entries[gi];
        e.config = canonical_config(point);
        e.config_digest = config_digest(e.config);
        e.scorer = grid.scorer.str();
        e.n_features = full.cols();
        double sum = 0.0, hss_sum = 0.0;
        std::size_t defined = 0, hss_defined = 0;
        for (std::size_t f = 0; f < plan.folds.size(); ++f) {
            const auto& rows = fold_rows[f];
            if (options.observer) options.observer({gi, f, rows.train_ids, rows.validation_ids});
            std::optional<double> score, h;
            const auto train = full.take_rows(rows.train);
            const auto val = full.take_rows(rows.validation);
            const auto n_pos = std::count(train.labels.begin(), train.labels.end(), BinaryLabel::Flaring);
            if (val.rows() > 0 && n_pos > 0 && static_cast<std::size_t>(n_pos) < train.rows()) {
                const auto model = train_forest(train, point.params);
                std::vector<BinaryLabel> pred;
                for (const auto& p : predict_dataset(model, val)) pred.push_back(p.label);
                const auto table = contingency(val.labels, pred);
                try {
                    score = grid.scorer(table);
                } catch (const UndefinedScoreError&) {
                }
                try {
                    h = hss(table);
                } catch (const UndefinedScoreError&) {
                }
            }
            e.per_fold_scores.push_back(score);
            e.per_fold_hss.push_back(h);
            if (score) {
                sum += *score;
                ++defined;
            } else {
                ++e.undefined_folds;
            }
            if (h) {
                hss_sum += *h;
                ++hss_defined;
            }
        }
        if (defined) e.mean_score = sum / static_cast<double>(defined);
        if (hss_defined) e.mean_hss = hss_sum / static_cast<double>(hss_defined);

        if (options.model_dir) {
            const auto rel = std::filesystem::path(e.config_digest) / "model.json";
            const auto all = full.take_rows(all_plan_rows);
            save_forest(train_forest(all, point.params), *options.model_dir / rel);
            e.model_bundle_path = rel.generic_string();
        }
    });

    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.config_digest < b.config_digest; });
    for (std::size_t i = 1; i < entries.size(); ++i)
        if (entries[i].config_digest == entries[i - 1].config_digest)
            throw ArgumentError("search grid contains duplicate configurations");
    SearchResult result;
    result.index = entries;
    result.best = *std::min_element(entries.begin(), entries.end(), ranks_before);
    return result;
}

inline std::string index_to_jsonl(const std::vector<ModelIndexEntry>& index) {
    std::string out;
    for (const auto& e : index) out += to_json(e).dump() + "\n";
    return out;
}

} // namespace slimtsf
