#pragma once

// Bootstrap campaigns: repeated subsample / train / evaluate / rank runs,
// aggregated into error bars, an SFS count vector, a log2-filtered final
// feature set and per-parameter participation ratios.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slimtsf/data.hpp"
#include "slimtsf/error.hpp"
#include "slimtsf/features.hpp"
#include "slimtsf/forest.hpp"
#include "slimtsf/io.hpp"
#include "slimtsf/metrics.hpp"
#include "slimtsf/parallel.hpp"
#include "slimtsf/ranking.hpp"
#include "slimtsf/rng.hpp"

namespace slimtsf {

/// Top-k size rule: log2 of the feature count, or a fixed k.
struct KRule {
    enum class Kind { Log2, Fixed };
    Kind kind = Kind::Log2;
    std::size_t k = 0;

    std::size_t resolve(std::size_t n_features) const {
        return kind == Kind::Log2 ? log_filter_k(n_features) : std::max<std::size_t>(1, k);
    }
    std::string str() const { return kind == Kind::Log2 ? "log2" : std::to_string(k); }

    static KRule parse(std::string_view s) {
        if (s == "log2") return {Kind::Log2, 0};
        std::size_t k = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), k);
        if (s.empty() || ec != std::errc{} || p != s.data() + s.size() || k == 0)
            throw ArgumentError("k rule must be 'log2' or a positive integer, got '" + std::string(s) + "'");
        return {Kind::Fixed, k};
    }
};

struct BootstrapConfig {
    std::size_t n_runs = 10;
    double subsample_fraction = 1.0;
    bool with_replacement = true;
    ForestParams forest;
    ScaleGrid scales;
    /// One campaign per class weight; forest.class_weight_positive is ignored.
    std::vector<double> class_weights{1.0};
    KRule run_k;
    KRule final_k;
    std::vector<double> alphas{1.0};
    std::uint64_t master_seed = 0;

    void validate() const {
        if (n_runs < 1) throw ArgumentError("n_runs must be >= 1");
        if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
            throw ArgumentError("subsample_fraction must lie in (0, 1]");
        if (class_weights.empty()) throw ArgumentError("class weight grid must not be empty");
        for (double cw : class_weights)
            if (!(cw > 0.0) || !std::isfinite(cw)) throw ArgumentError("class weights must be positive");
        for (double a : alphas)
            if (!(a > 0.0 && a < 2.0)) throw ArgumentError("alphas must lie in (0, 2)");
        validate_scale_grid(scales);
        forest.validate();
    }
};

inline nlohmann::json to_json(const BootstrapConfig& c) {
    nlohmann::json scales = nlohmann::json::array();
    for (const auto& s : c.scales) scales.push_back({s.window, s.step});
    return {{"n_runs", c.n_runs},
            {"subsample_fraction", c.subsample_fraction},
            {"with_replacement", c.with_replacement},
            {"forest", to_json(c.forest)},
            {"scale_grid", scales},
            {"class_weights", c.class_weights},
            {"run_k", c.run_k.str()},
            {"final_k", c.final_k.str()},
            {"alphas", c.alphas},
            {"master_seed", c.master_seed}};
}

inline BootstrapConfig bootstrap_config_from_json(const nlohmann::json& j) {
    BootstrapConfig c;
    c.n_runs = j.at("n_runs").get<std::size_t>();
    c.subsample_fraction = j.at("subsample_fraction").get<double>();
    c.with_replacement = j.at("with_replacement").get<bool>();
    c.forest = forest_params_from_json(j.at("forest"));
    for (const auto& s : j.at("scale_grid")) c.scales.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    c.class_weights = j.at("class_weights").get<std::vector<double>>();
    c.run_k = KRule::parse(j.at("run_k").get<std::string>());
    c.final_k = KRule::parse(j.at("final_k").get<std::string>());
    c.alphas = j.at("alphas").get<std::vector<double>>();
    c.master_seed = j.at("master_seed").get<std::uint64_t>();
    c.validate();
    return c;
}

/// Skill scores of one split; nullopt marks an undefined score.
struct ScoreSet {
    std::optional<double> tss;
    std::optional<double> hss;
    std::map<double, std::optional<double>> wtss;

    friend bool operator==(const ScoreSet&, const ScoreSet&) = default;
};

inline ScoreSet score_set(const ContingencyTable& t, std::span<const double> alphas) {
    ScoreSet s;
    auto guarded = [](auto&& fn) -> std::optional<double> {
        try {
            return fn();
        } catch (const UndefinedScoreError&) {
            return std::nullopt;
        }
    };
    s.tss = guarded([&] { return tss(t); });
    s.hss = guarded([&] { return hss(t); });
    for (double a : alphas) s.wtss[a] = guarded([&] { return weighted_tss(t, a); });
    return s;
}

struct BootstrapRunResult {
    std::size_t run_index = 0;
    std::uint64_t seed = 0;
    double class_weight = 1.0;
    /// Subsample was single-class even after one retry; excluded from the summary.
    bool failed = false;
    /// The first subsample was single-class and a retry seed was used.
    bool resampled = false;
    std::size_t n_features = 0;
    ScoreSet train;
    ScoreSet test;
    MembershipVector selected;
};

struct ErrorBar {
    double class_weight = 1.0;
    std::string metric; // "tss", "hss", "wtss_<alpha>"
    std::string split;  // "train" | "test"
    std::optional<double> mean;
    std::optional<double> std;
    std::size_t n = 0;        // runs contributing a defined value
    std::size_t excluded = 0; // failed runs plus runs with an undefined value
};

struct BootstrapSummary {
    std::size_t n_runs_total = 0;
    std::size_t n_failed = 0;
    std::vector<ErrorBar> error_bars;
    SFSVector sfs;
    std::size_t final_k = 0;
    std::vector<std::string> final_selection;
    std::map<std::string, double> participation;
};

struct ScoreSummary {
    double mean = 0.0;
    double std = 0.0;
};

/// Arithmetic mean and sample standard deviation (n - 1); std = 0 for one value.
/// Values are summed in sorted order, so the result does not depend on input order.
inline ScoreSummary summarize_scores(std::span<const double> values) {
    if (values.empty()) throw TrainingError("no successful runs to summarize");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() == 1) return {mean, 0.0};
    std::vector<double> sq;
    sq.reserve(v.size());
    for (double x : v) sq.push_back((x - mean) * (x - mean));
    std::sort(sq.begin(), sq.end());
    double ss = 0.0;
    for (double x : sq) ss += x;
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

/// Derives the summary solely from run results (and the config's k / alpha settings).
inline BootstrapSummary summarize_runs(std::span<const BootstrapRunResult> runs, const BootstrapConfig& cfg) {
    BootstrapSummary s;
    s.n_runs_total = runs.size();
    std::vector<MembershipVector> members;
    std::vector<std::set<std::string>> params;
    std::size_t n_features = 0;
    for (const auto& r : runs) {
        if (r.failed) {
            ++s.n_failed;
            continue;
        }
        members.push_back(r.selected);
        params.push_back(parameters_of(r.selected.members));
        n_features = std::max(n_features, r.n_features);
    }
    if (members.empty()) throw TrainingError("all bootstrap runs failed");

    std::vector<std::string> metrics{"tss", "hss"};
    for (double a : cfg.alphas) metrics.push_back("wtss_" + alpha_key(a));
    for (double cw : cfg.class_weights) {
        for (const auto& metric : metrics) {
            for (const char* split : {"train", "test"}) {
                ErrorBar bar{cw, metric, split, std::nullopt, std::nullopt, 0, 0};
                std::vector<double> values;
                for (const auto& r : runs) {
                    if (r.class_weight != cw) continue;
                    if (r.failed) {
                        ++bar.excluded;
                        continue;
                    }
                    const ScoreSet& set = std::string(split) == "train" ? r.train : r.test;
                    std::optional<double> v;
                    if (metric == "tss") v = set.tss;
                    else if (metric == "hss") v = set.hss;
                    else
                        for (const auto& [a, w] : set.wtss)
                            if ("wtss_" + alpha_key(a) == metric) v = w;
                    if (v) values.push_back(*v);
                    else ++bar.excluded;
                }
                bar.n = values.size();
                if (!values.empty()) {
                    const auto sc = summarize_scores(values);
                    bar.mean = sc.mean;
                    bar.std = sc.std;
                }
                s.error_bars.push_back(bar);
            }
        }
    }
    s.sfs = aggregate_sfs(members);
    s.final_k = cfg.final_k.resolve(n_features);
    s.final_selection = select_final(s.sfs, s.final_k);
    s.participation = participation_ratio(params, members.size());
    return s;
}

namespace detail {

inline std::vector<std::size_t> draw_subsample(std::size_t n, double fraction, bool with_replacement, std::uint64_t seed) {
    const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
    Rng rng(seed);
    std::vector<std::size_t> rows;
    rows.reserve(m);
    if (with_replacement) {
        for (std::size_t i = 0; i < m; ++i) rows.push_back(static_cast<std::size_t>(rng.below(n)));
    } else {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
            std::swap(all[i], all[j]);
            rows.push_back(all[i]);
        }
        std::sort(rows.begin(), rows.end());
    }
    return rows;
}

inline bool has_both_classes(const FeatureMatrix& fm, std::span<const std::size_t> rows) {
    bool pos = false, neg = false;
    for (auto r : rows) (fm.labels[r] == BinaryLabel::Flaring ? pos : neg) = true;
    return pos && neg;
}

inline ContingencyTable evaluate(const ForestModel& model, const FeatureMatrix& fm) {
    std::vector<BinaryLabel> pred;
    pred.reserve(fm.rows());
    for (const auto& p : predict_dataset(model, fm)) pred.push_back(p.label);
    return contingency(fm.labels, pred);
}

} // namespace detail

/// Row indices (into the training matrix) used by run `seed`, after the
/// single-class retry rule. Empty when both attempts were single-class.
struct SubsampleDraw {
    std::vector<std::size_t> rows;
    bool resampled = false;
};

inline SubsampleDraw bootstrap_subsample(const FeatureMatrix& train, const BootstrapConfig& cfg, std::uint64_t seed) {
    SubsampleDraw d;
    d.rows = detail::draw_subsample(train.rows(), cfg.subsample_fraction, cfg.with_replacement, seed);
    if (detail::has_both_classes(train, d.rows)) return d;
    d.resampled = true;
    d.rows = detail::draw_subsample(train.rows(), cfg.subsample_fraction, cfg.with_replacement, derive_seed(seed, 1));
    if (!detail::has_both_classes(train, d.rows)) d.rows.clear();
    return d;
}

struct BootstrapOutcome {
    std::vector<BootstrapRunResult> runs;
    BootstrapSummary summary;
};

/// Runs one campaign per class weight, n_runs each, ordered by (class weight, run index).
/// Run r of every campaign uses seed derive_seed(master_seed, r) for both the
/// subsample and the forest.
inline BootstrapOutcome run_bootstrap(const Dataset& ds_train, const Dataset& ds_test, const BootstrapConfig& cfg,
                                      std::size_t workers = 1) {
    cfg.validate();
    if (ds_train.empty() || ds_test.empty()) throw ArgumentError("bootstrap needs nonempty train and test datasets");
    const FeatureMatrix train = featurize_dataset(ds_train, cfg.scales, workers);
    const FeatureMatrix test = featurize_dataset(ds_test, cfg.scales, workers);
    if (train.ids() != test.ids()) throw ValidationError("train and test feature layouts differ");
    const auto ids = train.ids();

    BootstrapOutcome out;
    out.runs.resize(cfg.class_weights.size() * cfg.n_runs);
    parallel_for(out.runs.size(), workers, [&](std::size_t job) {
        const std::size_t c = job / cfg.n_runs;
        const std::size_t r = job % cfg.n_runs;
        BootstrapRunResult& res = out.runs[job];
        res.run_index = r;
        res.seed = derive_seed(cfg.master_seed, r);
        res.class_weight = cfg.class_weights[c];
        res.n_features = train.cols();
        res.selected.experiment_id = "cw" + alpha_key(res.class_weight) + "/run" + std::to_string(r);
        res.selected.k = cfg.run_k.resolve(train.cols());

        const auto draw = bootstrap_subsample(train, cfg, res.seed);
        res.resampled = draw.resampled;
        if (draw.rows.empty()) {
            res.failed = true;
            return;
        }
        const FeatureMatrix sample = train.take_rows(draw.rows);
        ForestParams params = cfg.forest;
        params.class_weight_positive = res.class_weight;
        params.seed = res.seed;
        const ForestModel model = train_forest(sample, params);
        res.train = score_set(detail::evaluate(model, sample), cfg.alphas);
        res.test = score_set(detail::evaluate(model, test), cfg.alphas);
        res.selected = top_k(rank_features(ids, model.importances), res.selected.k, res.selected.experiment_id);
    });
    out.summary = summarize_runs(out.runs, cfg);
    return out;
}

/// Trains on the full training set restricted to `selection` and scores the test set.
inline SkillReport ex_ante_evaluate(const Dataset& ds_train, const Dataset& ds_test,
                                    const std::vector<std::string>& selection, const ScaleGrid& scales,
                                    const ForestParams& params, std::span<const double> alphas,
                                    std::size_t workers = 1) {
    if (selection.empty()) throw ArgumentError("ex-ante evaluation needs a nonempty feature selection");
    const std::set<std::string> keep(selection.begin(), selection.end());
    const auto train = select_columns(featurize_dataset(ds_train, scales, workers), keep);
    const auto test = select_columns(featurize_dataset(ds_test, scales, workers), keep);
    const auto model = train_forest(train, params, workers);
    return skill_report(detail::evaluate(model, test), alphas);
}

// ---- campaign serialization ------------------------------------------------

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
inline std::optional<double> opt_from(const nlohmann::json& v) {
    return v.is_null() ? std::optional<double>{} : v.get<double>();
}

inline nlohmann::json to_json(const ScoreSet& s) {
    nlohmann::json w = nlohmann::json::object();
    for (const auto& [a, v] : s.wtss) w[alpha_key(a)] = opt_json(v);
    return {{"tss", opt_json(s.tss)}, {"hss", opt_json(s.hss)}, {"wtss", w}};
}

inline ScoreSet score_set_from_json(const nlohmann::json& j) {
    ScoreSet s;
    s.tss = opt_from(j.at("tss"));
    s.hss = opt_from(j.at("hss"));
    for (const auto& [k, v] : j.at("wtss").items()) {
        double a = 0.0;
        if (!io::parse_double(k, a)) throw ValidationError("bad alpha key " + k);
        s.wtss[a] = opt_from(v);
    }
    return s;
}

} // namespace detail

inline nlohmann::json to_json(const BootstrapRunResult& r) {
    return {{"run_index", r.run_index},
            {"seed", r.seed},
            {"class_weight", r.class_weight},
            {"status", r.failed ? "failed" : "ok"},
            {"resampled", r.resampled},
            {"n_features", r.n_features},
            {"scores", {{"train", detail::to_json(r.train)}, {"test", detail::to_json(r.test)}}},
            {"selected", {{"experiment_id", r.selected.experiment_id}, {"k", r.selected.k}, {"ids", r.selected.members}}}};
}

inline BootstrapRunResult run_result_from_json(const nlohmann::json& j) {
    BootstrapRunResult r;
    r.run_index = j.at("run_index").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.class_weight = j.at("class_weight").get<double>();
    r.failed = j.at("status").get<std::string>() == "failed";
    r.resampled = j.at("resampled").get<bool>();
    r.n_features = j.at("n_features").get<std::size_t>();
    r.train = detail::score_set_from_json(j.at("scores").at("train"));
    r.test = detail::score_set_from_json(j.at("scores").at("test"));
    const auto& sel = j.at("selected");
    r.selected.experiment_id = sel.at("experiment_id").get<std::string>();
    r.selected.k = sel.at("k").get<std::size_t>();
    for (const auto& id : sel.at("ids")) r.selected.members.insert(id.get<std::string>());
    return r;
}

inline nlohmann::json to_json(const BootstrapSummary& s) {
    nlohmann::json bars = nlohmann::json::array();
    for (const auto& b : s.error_bars)
        bars.push_back({{"class_weight", b.class_weight}, {"metric", b.metric}, {"split", b.split},
                        {"mean", detail::opt_json(b.mean)}, {"std", detail::opt_json(b.std)},
                        {"n", b.n}, {"excluded", b.excluded}});
    nlohmann::json part = nlohmann::json::object();
    for (const auto& [p, v] : s.participation) part[p] = v;
    return {{"n_runs_total", s.n_runs_total}, {"n_failed", s.n_failed}, {"error_bars", bars},
            {"sfs", to_json(s.sfs)}, {"final_k", s.final_k}, {"final_selection", s.final_selection},
            {"participation", part}};
}

inline std::string errorbars_csv(const BootstrapSummary& s) {
    std::string out = "cw,metric,split,mean,std,n,excluded\n";
    auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); };
    for (const auto& b : s.error_bars)
        out += io::format_double(b.class_weight) + "," + b.metric + "," + b.split + "," + opt(b.mean) + "," +
               opt(b.std) + "," + std::to_string(b.n) + "," + std::to_string(b.excluded) + "\n";
    return out;
}

inline std::string participation_csv(const BootstrapSummary& s) {
    std::vector<std::pair<std::string, double>> rows(s.participation.begin(), s.participation.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::string out = "parameter,ratio\n";
    for (const auto& [p, v] : rows) out += p + "," + io::format_double(v) + "\n";
    return out;
}

/// One row per (run, split) with every score; undefined scores are left empty.
inline std::string skill_tables_csv(std::span<const BootstrapRunResult> runs, const BootstrapConfig& cfg) {
    std::string out = "cw,run_index,seed,status,resampled,split,tss,hss";
    for (double a : cfg.alphas) out += ",wtss_" + alpha_key(a);
    out += "\n";
    auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); };
    for (const auto& r : runs) {
        for (const char* split : {"train", "test"}) {
            const ScoreSet& s = std::string(split) == "train" ? r.train : r.test;
            out += io::format_double(r.class_weight) + "," + std::to_string(r.run_index) + "," + std::to_string(r.seed) +
                   "," + (r.failed ? "failed" : "ok") + "," + (r.resampled ? "true" : "false") + "," + split + "," +
                   opt(s.tss) + "," + opt(s.hss);
            for (double a : cfg.alphas) {
                auto it = s.wtss.find(a);
                out += "," + (it == s.wtss.end() ? std::string() : opt(it->second));
            }
            out += "\n";
        }
    }
    return out;
}

inline void write_campaign(const std::filesystem::path& dir, const BootstrapConfig& cfg, const BootstrapOutcome& outcome) {
    std::filesystem::create_directories(dir);
    io::write_file_atomic(dir / "config.json", to_json(cfg).dump(2) + "\n");
    std::string lines;
    for (const auto& r : outcome.runs) lines += to_json(r).dump() + "\n";
    io::write_file_atomic(dir / "runs.jsonl", lines);
    io::write_file_atomic(dir / "summary.json", to_json(outcome.summary).dump(2) + "\n");
    io::write_file_atomic(dir / "errorbars.csv", errorbars_csv(outcome.summary));
    io::write_file_atomic(dir / "participation.csv", participation_csv(outcome.summary));
}

struct Campaign {
    BootstrapConfig config;
    std::vector<BootstrapRunResult> runs;
};

/// Loads config.json and runs.jsonl; throws ValidationError listing any missing campaign files.
inline Campaign load_campaign(const std::filesystem::path& dir) {
    std::vector<std::string> missing;
    for (const char* f : {"config.json", "runs.jsonl", "summary.json"})
        if (!std::filesystem::exists(dir / f)) missing.push_back((dir / f).string());
    if (!missing.empty()) {
        std::string msg = "incomplete campaign, missing:";
        for (const auto& m : missing) msg += " " + m;
        throw ValidationError(msg);
    }
    Campaign c;
    c.config = bootstrap_config_from_json(nlohmann::json::parse(io::read_file(dir / "config.json")));
    const std::string text = io::read_file(dir / "runs.jsonl");
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        if (end > pos) c.runs.push_back(run_result_from_json(nlohmann::json::parse(text.substr(pos, end - pos))));
        pos = end + 1;
    }
    if (c.runs.size() != c.config.n_runs * c.config.class_weights.size())
        throw ValidationError("incomplete campaign: runs.jsonl has " + std::to_string(c.runs.size()) + " runs, expected " +
                              std::to_string(c.config.n_runs * c.config.class_weights.size()));
    return c;
}

} // namespace slimtsf
