// slimtsf command-line driver.
//
// Every subcommand writes its outputs under --out (or the campaign dir) plus
// a run_manifest.json with the resolved configuration. Errors are printed to
// stderr as one JSON object and mapped to exit codes:
//   1 internal, 2 usage / missing input, 3 data validation, 4 undefined score.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slimtsf/slimtsf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slimtsf;

namespace {

constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kUndefined = 4 };

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Argument:
    case ErrorKind::Io: return kUsage;
    case ErrorKind::Schema:
    case ErrorKind::Validation:
    case ErrorKind::Label:
    case ErrorKind::Training: return kData;
    case ErrorKind::UndefinedScore: return kUndefined;
    }
    return kInternal;
}

int report_error(const std::string& kind, const std::string& message, int code, const std::string& path = {}) {
    json err{{"kind", kind}, {"message", message}};
    if (!path.empty()) err["path"] = path;
    std::cerr << json{{"error", err}, {"exit_code", code}}.dump() << std::endl;
    return code;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> out;
    for (const auto& item : io::split(text, ',')) {
        double v = 0.0;
        if (item.empty() || !io::parse_double(item, v) || !std::isfinite(v))
            throw ArgumentError(std::string("malformed ") + what + " list '" + text + "'");
        out.push_back(v);
    }
    return out;
}

std::set<std::string> parse_id_set(const std::string& text) {
    std::set<std::string> out;
    for (const auto& item : io::split(text, ','))
        if (!item.empty()) out.insert(item);
    return out;
}

std::optional<std::size_t> parse_depth(const std::string& text) {
    if (text == "none") return std::nullopt;
    std::size_t d = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
    if (text.empty() || ec != std::errc{} || p != text.data() + text.size() || d == 0)
        throw ArgumentError("max depth must be a positive integer or 'none', got '" + text + "'");
    return d;
}

/// Flags shared by every command that trains a forest.
struct ForestFlags {
    std::size_t n_trees = 100;
    std::string max_depth = "8";
    std::size_t min_samples_leaf = 5;
    std::string max_features = "sqrt";
    double class_weight = 1.0;
    bool no_row_bootstrap = false;

    void add(CLI::App* app, bool with_class_weight = true) {
        app->add_option("--n-trees", n_trees, "Trees per forest");
        app->add_option("--max-depth", max_depth, "Maximum tree depth or 'none'");
        app->add_option("--min-samples-leaf", min_samples_leaf, "Minimum samples per leaf");
        app->add_option("--max-features", max_features, "Features per split: sqrt, log2, all or an integer");
        if (with_class_weight) app->add_option("--class-weight", class_weight, "Positive-class sample weight");
        app->add_flag("--no-row-bootstrap", no_row_bootstrap, "Train every tree on all rows");
    }

    ForestParams params(std::uint64_t seed) const {
        ForestParams p;
        p.n_trees = n_trees;
        p.max_depth = parse_depth(max_depth);
        p.min_samples_leaf = min_samples_leaf;
        p.max_features = MaxFeatures::parse(max_features);
        p.class_weight_positive = class_weight;
        p.bootstrap_rows = !no_row_bootstrap;
        p.seed = seed;
        p.validate();
        return p;
    }
};

json resolved_options(const CLI::App* app) {
    json out = json::object();
    for (const auto* opt : app->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const auto& name = opt->get_lnames().front();
        if (name == "help") continue;
        const auto& res = opt->results();
        if (res.empty()) out[name] = opt->get_default_str();
        else if (res.size() == 1) out[name] = res.front();
        else out[name] = res;
    }
    return out;
}

void write_run_manifest(const fs::path& dir, const CLI::App* sub, std::uint64_t seed, const json& inputs,
                        const json& outputs, std::chrono::steady_clock::time_point started) {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json m{{"command", sub->get_name()},
           {"config", resolved_options(sub)},
           {"inputs", inputs},
           {"outputs", outputs},
           {"seed", seed},
           {"tool_version", kToolVersion},
           {"wall_clock_seconds", seconds}};
    io::write_file_atomic(dir / "run_manifest.json", m.dump(2) + "\n");
}

Dataset load_bundle(const fs::path& bundle, std::size_t workers) {
    return load_dataset(bundle, IngestSchema{}, workers);
}

ScaleGrid grid_or_default(const std::string& windows, const Dataset& ds) {
    if (!windows.empty()) return parse_scale_grid(windows);
    if (ds.empty()) throw ArgumentError("cannot derive a default window grid from an empty dataset");
    return default_scale_grid(ds[0].length());
}

/// Inserts values from a JSON config file for options the command line did not set.
std::vector<std::string> apply_config(CLI::App& app, std::vector<std::string> args) {
    std::string config_path;
    for (std::size_t i = 1; i + 1 < args.size(); ++i)
        if (args[i] == "--config") config_path = args[i + 1];
    if (config_path.empty()) return args;
    json cfg;
    try {
        cfg = json::parse(io::read_file(config_path));
    } catch (const json::parse_error& e) {
        throw ArgumentError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!cfg.is_object()) throw ArgumentError("config file must hold a JSON object");

    CLI::App* sub = nullptr;
    std::size_t sub_pos = 0;
    for (std::size_t i = 1; i < args.size() && !sub; ++i)
        for (auto* s : app.get_subcommands([](CLI::App*) { return true; }))
            if (s->get_name() == args[i]) {
                sub = s;
                sub_pos = i;
            }
    if (!sub) return args;

    json merged = json::object();
    for (const auto& [k, v] : cfg.items())
        if (!v.is_object()) merged[k] = v;
    if (cfg.contains(sub->get_name()) && cfg[sub->get_name()].is_object())
        for (const auto& [k, v] : cfg[sub->get_name()].items()) merged[k] = v;

    std::vector<std::string> extra;
    for (const auto& [key, value] : merged.items()) {
        if (key == "config" || key == "workers") continue;
        const std::string flag = "--" + key;
        if (std::find(args.begin(), args.end(), flag) != args.end()) continue;
        const CLI::Option* opt = sub->get_option_no_throw(flag);
        if (!opt) throw ArgumentError("unknown config key '" + key + "' for command " + sub->get_name());
        auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        if (opt->get_expected_min() == 0) {
            if (value.is_boolean() && value.get<bool>()) extra.push_back(flag);
        } else if (value.is_array()) {
            for (const auto& v : value) {
                extra.push_back(flag);
                extra.push_back(text(v));
            }
        } else {
            extra.push_back(flag);
            extra.push_back(text(value));
        }
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, extra.begin(), extra.end());
    if (cfg.contains("workers") && std::find(args.begin(), args.end(), "--workers") == args.end()) {
        args.insert(args.begin() + 1, {"--workers", cfg["workers"].dump()});
    }
    return args;
}

std::string predictions_csv(const std::vector<InstancePrediction>& preds) {
    std::string out = "instance_id,label,score\n";
    for (const auto& p : preds) out += p.instance_id + "," + to_string(p.label) + "," + io::format_double(p.score) + "\n";
    return out;
}

BinaryLabel parse_binary(const std::string& s) {
    if (s == "1" || s == "flaring" || s == "Flaring" || s == "F") return BinaryLabel::Flaring;
    if (s == "0" || s == "nonflaring" || s == "NonFlaring" || s == "N") return BinaryLabel::NonFlaring;
    throw ValidationError("unrecognized binary label '" + s + "'");
}

} // namespace

int main(int argc, char** argv) {
    const auto started = std::chrono::steady_clock::now();
    CLI::App app{"Sliding-window multivariate time series forest: features, training, tuning, bootstrap ranking"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", kToolVersion);
    std::size_t workers = 1;
    std::string config_file;
    app.add_option("--workers", workers, "Worker threads for parallel stages")->check(CLI::PositiveNumber);
    app.add_option("--config", config_file, "JSON config file; flags override it");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Load, validate and impute a dataset into a bundle");
    std::string manifest_path, out_dir, impute_policy = "linear", timestamp_column = "Timestamp", parameters;
    std::uint64_t seed = 0;
    ingest->add_option("--manifest", manifest_path, "Manifest JSON (or directory holding manifest.json)")->required();
    ingest->add_option("--out", out_dir, "Bundle output directory")->required();
    ingest->add_option("--impute-policy", impute_policy, "linear | zero");
    ingest->add_option("--timestamp-column", timestamp_column, "Timestamp column name in instance files");
    ingest->add_option("--parameters", parameters, "Comma-separated parameter columns (default: all)");
    ingest->add_option("--seed", seed, "Recorded in the run manifest");

    // featurize
    auto* featurize = app.add_subcommand("featurize", "Compute the interval feature matrix of a bundle");
    std::string bundle, windows;
    featurize->add_option("--bundle", bundle, "Bundle directory from ingest")->required();
    featurize->add_option("--windows", windows, "Window grid 'w:s,w:s,...' (default: T/5, T/3, T/2)");
    featurize->add_option("--out", out_dir, "Output directory")->required();
    featurize->add_option("--seed", seed, "Recorded in the run manifest");

    // train
    auto* train = app.add_subcommand("train", "Train a forest on a feature matrix");
    std::string features_dir;
    ForestFlags forest_flags;
    train->add_option("--features", features_dir, "Directory with features.csv/features.json")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--seed", seed, "Forest seed");
    forest_flags.add(train);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions with TSS, HSS and weighted TSS");
    std::string model_path, predictions_path, alphas_text = "1";
    double threshold = 0.5;
    evaluate->add_option("--model", model_path, "Model bundle (model.json)");
    evaluate->add_option("--features", features_dir, "Feature matrix directory to predict");
    evaluate->add_option("--predictions", predictions_path, "CSV with instance_id,y_true,y_pred instead of a model");
    evaluate->add_option("--alphas", alphas_text, "Comma-separated weighted-TSS alphas in (0,2)");
    evaluate->add_option("--threshold", threshold, "Decision threshold on the forest score");
    evaluate->add_option("--out", out_dir, "Output directory")->required();
    evaluate->add_option("--seed", seed, "Recorded in the run manifest");

    // tune
    auto* tune = app.add_subcommand("tune", "Partition-aware grid search");
    std::vector<std::string> window_grids;
    std::string cw_list = "1", trees_list = "100", depth_list = "8", leaf_list = "5", mf_list = "sqrt";
    std::string scorer_text = "tss", folds_text = "lopo", partitions_text;
    bool tune_no_row_bootstrap = false, save_models = false;
    tune->add_option("--bundle", bundle, "Bundle directory")->required();
    tune->add_option("--windows", window_grids, "Window grid per grid point (repeatable)");
    tune->add_option("--class-weights", cw_list, "Comma-separated positive class weights");
    tune->add_option("--n-trees", trees_list, "Comma-separated tree counts");
    tune->add_option("--max-depth", depth_list, "Comma-separated depths ('none' allowed)");
    tune->add_option("--min-samples-leaf", leaf_list, "Comma-separated leaf sizes");
    tune->add_option("--max-features", mf_list, "Comma-separated max-features rules");
    tune->add_flag("--no-row-bootstrap", tune_no_row_bootstrap, "Train every tree on all rows");
    tune->add_option("--scorer", scorer_text, "tss | hss | wtss:<alpha>");
    tune->add_option("--folds", folds_text, "'lopo' or explicit 'P1,P2:P3;...'");
    tune->add_option("--partitions", partitions_text, "Restrict the dataset to these partitions");
    tune->add_flag("--save-models", save_models, "Write a model bundle per grid point under <out>/models");
    tune->add_option("--out", out_dir, "Output directory")->required();
    tune->add_option("--seed", seed, "Forest seed for every grid point");

    // rank
    auto* rank = app.add_subcommand("rank", "Rank features of a model, or aggregate a bootstrap campaign");
    std::string campaign_dir, k_text = "log2";
    rank->add_option("--model", model_path, "Model bundle to rank");
    rank->add_option("--campaign", campaign_dir, "Bootstrap campaign directory to aggregate");
    rank->add_option("--k", k_text, "Top-k size: 'log2' or an integer");
    rank->add_option("--out", out_dir, "Output directory")->required();
    rank->add_option("--seed", seed, "Recorded in the run manifest");

    // bootstrap
    auto* boot = app.add_subcommand("bootstrap", "Bootstrap campaign with ex-ante feature selection");
    std::string train_bundle, test_bundle, train_parts, test_parts, run_k = "log2", final_k = "log2";
    std::size_t n_runs = 10;
    double fraction = 1.0;
    bool without_replacement = false, ex_ante = false;
    ForestFlags boot_flags;
    boot->add_option("--bundle", bundle, "Bundle split by --train-parts/--test-parts");
    boot->add_option("--train-parts", train_parts, "Comma-separated training partitions");
    boot->add_option("--test-parts", test_parts, "Comma-separated test partitions");
    boot->add_option("--train-bundle", train_bundle, "Separate training bundle");
    boot->add_option("--test-bundle", test_bundle, "Separate test bundle");
    boot->add_option("--runs", n_runs, "Bootstrap runs per class weight")->check(CLI::PositiveNumber);
    boot->add_option("--fraction", fraction, "Subsample size as a fraction of the training set");
    boot->add_flag("--without-replacement", without_replacement, "Subsample without replacement");
    boot->add_option("--windows", windows, "Window grid 'w:s,...' (default: T/5, T/3, T/2)");
    boot->add_option("--class-weights", cw_list, "Comma-separated class weights, one campaign each");
    boot->add_option("--run-k", run_k, "Per-run top-k: 'log2' or an integer");
    boot->add_option("--final-k", final_k, "Final selection size: 'log2' or an integer");
    boot->add_option("--alphas", alphas_text, "Comma-separated weighted-TSS alphas");
    boot->add_flag("--ex-ante", ex_ante, "Also retrain on the final selection and on all features; writes ex_ante.json");
    boot->add_option("--out", out_dir, "Campaign directory")->required();
    boot->add_option("--seed", seed, "Master seed");
    boot_flags.add(boot, false);

    // report
    auto* report = app.add_subcommand("report", "Plot-ready CSVs from a bootstrap campaign");
    report->add_option("--campaign", campaign_dir, "Campaign directory")->required();
    report->add_option("--out", out_dir, "Output directory")->required();
    report->add_option("--seed", seed, "Recorded in the run manifest");

    // synth
    auto* synth = app.add_subcommand("synth", "Write a planted-signal dataset as manifest + instance files");
    PlantedSignalSpec spec;
    synth->add_option("--instances", spec.n_instances, "Number of instances");
    synth->add_option("--parameters", spec.n_parameters, "Parameters per instance");
    synth->add_option("--length", spec.length, "Timesteps per instance");
    synth->add_option("--positive-fraction", spec.positive_fraction, "Share of flaring instances");
    synth->add_option("--partitions", spec.n_partitions, "Number of partitions");
    synth->add_option("--signal-start", spec.signal_start, "First timestep of the planted shift");
    synth->add_option("--signal-end", spec.signal_end, "End (exclusive) of the planted shift");
    synth->add_option("--shift", spec.shift, "Mean shift of the planted parameter");
    synth->add_option("--missing-rate", spec.missing_rate, "Probability of a NaN cell");
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--seed", seed, "Generator seed");

    try {
        std::vector<std::string> args(argv, argv + argc);
        args = apply_config(app, std::move(args));
        std::vector<char*> cargs;
        for (auto& a : args) cargs.push_back(a.data());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what(), kUsage);
    } catch (const Error& e) {
        return report_error(to_string(e.kind()), e.what(), exit_code_for(e.kind()));
    }

    try {
        const fs::path out(out_dir);
        if (ingest->parsed()) {
            IngestSchema schema;
            schema.timestamp_column = timestamp_column;
            for (const auto& p : io::split(parameters, ','))
                if (!p.empty()) schema.parameter_columns.push_back(p);
            const auto policy = parse_impute_policy(impute_policy);
            const Dataset raw = load_dataset(manifest_path, schema, workers);
            const auto imputed = impute_dataset(raw, policy);
            write_dataset(imputed.dataset, out);
            json flagged = json::object();
            for (const auto& [id, params] : imputed.flagged) flagged[id] = params;
            const auto ratio = class_ratio(imputed.dataset);
            std::cout << "ingested " << imputed.dataset.size() << " instances (" << ratio.flaring << " flaring, "
                      << ratio.nonflaring << " non-flaring), " << imputed.flagged.size() << " flagged\n";
            write_run_manifest(out, ingest, seed, {{"manifest", manifest_path}},
                               {{"bundle", out.string()}, {"flagged", flagged}}, started);
        } else if (featurize->parsed()) {
            const Dataset ds = load_bundle(bundle, workers);
            const ScaleGrid grid = grid_or_default(windows, ds);
            const FeatureMatrix fm = featurize_dataset(ds, grid, workers);
            save_feature_matrix(fm, out);
            std::cout << "featurized " << fm.rows() << " x " << fm.cols() << " (windows " << format_scale_grid(grid) << ")\n";
            write_run_manifest(out, featurize, seed, {{"bundle", bundle}},
                               {{"features_csv", (out / "features.csv").string()},
                                {"features_json", (out / "features.json").string()},
                                {"windows", format_scale_grid(grid)},
                                {"shape", {fm.rows(), fm.cols()}}},
                               started);
        } else if (train->parsed()) {
            const FeatureMatrix fm = load_feature_matrix(features_dir);
            const ForestModel model = train_forest(fm, forest_flags.params(seed), workers);
            save_forest(model, out / "model.json");
            std::cout << "trained " << model.trees.size() << " trees on " << fm.rows() << " x " << fm.cols() << "\n";
            write_run_manifest(out, train, seed, {{"features", features_dir}}, {{"model", (out / "model.json").string()}},
                               started);
        } else if (evaluate->parsed()) {
            const auto alphas = parse_double_list(alphas_text, "alpha");
            std::vector<BinaryLabel> truth, pred;
            if (!predictions_path.empty()) {
                const std::string text = io::read_file(predictions_path);
                bool header = true;
                for (const auto& line : io::split(text, '\n')) {
                    if (line.empty()) continue;
                    const auto cells = io::split(line, ',');
                    if (header) {
                        header = false;
                        if (cells.size() < 3 || cells[1] != "y_true" || cells[2] != "y_pred")
                            throw ValidationError("predictions CSV header must be instance_id,y_true,y_pred");
                        continue;
                    }
                    if (cells.size() < 3) throw ValidationError("malformed predictions row: " + line);
                    truth.push_back(parse_binary(cells[1]));
                    pred.push_back(parse_binary(cells[2]));
                }
            } else {
                if (model_path.empty() || features_dir.empty())
                    throw ArgumentError("evaluate needs --predictions, or --model with --features");
                ForestModel model = load_forest(model_path);
                model.threshold = threshold;
                const FeatureMatrix fm = load_feature_matrix(features_dir);
                const auto preds = predict_dataset(model, fm);
                io::write_file_atomic(out / "predictions.csv", predictions_csv(preds));
                truth = fm.labels;
                for (const auto& p : preds) pred.push_back(p.label);
            }
            const auto table = contingency(truth, pred);
            const SkillReport rep = skill_report(table, alphas);
            io::write_file_atomic(out / "report.json", to_json(rep).dump(2) + "\n");
            io::write_file_atomic(out / "report.csv", skill_csv_header(rep) + "\n" + skill_csv_row(rep) + "\n");
            std::cout << "TSS=" << io::format_double(rep.tss) << " HSS=" << io::format_double(rep.hss) << "\n";
            write_run_manifest(out, evaluate, seed,
                               {{"model", model_path}, {"features", features_dir}, {"predictions", predictions_path}},
                               {{"report", (out / "report.json").string()}}, started);
        } else if (tune->parsed()) {
            Dataset ds = load_bundle(bundle, workers);
            if (!partitions_text.empty()) {
                const auto keep = parse_id_set(partitions_text);
                for (const auto& p : keep)
                    if (!ds.partitions().count(p)) throw ArgumentError("unknown partition id: " + p);
                ds = ds.filter([&](const auto& i) { return keep.count(i.partition_id) > 0; });
            }
            SearchGrid grid;
            if (window_grids.empty()) grid.scale_grids.push_back(grid_or_default("", ds));
            for (const auto& w : window_grids) grid.scale_grids.push_back(parse_scale_grid(w));
            grid.class_weights = parse_double_list(cw_list, "class weight");
            grid.n_trees.clear();
            for (double v : parse_double_list(trees_list, "tree count")) grid.n_trees.push_back(static_cast<std::size_t>(v));
            grid.max_depth.clear();
            for (const auto& d : io::split(depth_list, ',')) grid.max_depth.push_back(parse_depth(d));
            grid.min_samples_leaf.clear();
            for (double v : parse_double_list(leaf_list, "leaf size")) grid.min_samples_leaf.push_back(static_cast<std::size_t>(v));
            grid.max_features.clear();
            for (const auto& m : io::split(mf_list, ',')) grid.max_features.push_back(MaxFeatures::parse(m));
            grid.bootstrap_rows = {!tune_no_row_bootstrap};
            grid.scorer = Scorer::parse(scorer_text);
            const PartitionFoldPlan plan =
                folds_text == "lopo" ? make_fold_plan(ds) : make_fold_plan(ds, parse_folds(folds_text));
            SearchOptions options;
            options.workers = workers;
            if (save_models) options.model_dir = out / "models";
            const auto result = grid_search(ds, grid, plan, seed, options);
            io::write_file_atomic(out / "index.jsonl", index_to_jsonl(result.index));
            io::write_file_atomic(out / "best.json", to_json(result.best).dump(2) + "\n");
            std::cout << "evaluated " << result.index.size() << " grid points; best " << result.best.config_digest.substr(0, 12)
                      << " mean " << grid.scorer.str() << "="
                      << (result.best.mean_score ? io::format_double(*result.best.mean_score) : "undefined") << "\n";
            write_run_manifest(out, tune, seed, {{"bundle", bundle}},
                               {{"index", (out / "index.jsonl").string()}, {"best", (out / "best.json").string()}},
                               started);
        } else if (rank->parsed()) {
            const KRule k = KRule::parse(k_text);
            json outputs = json::object();
            if (!model_path.empty()) {
                const ForestModel model = load_forest(model_path);
                const auto ranking = rank_features(model.feature_ids, model.importances);
                std::string csv = "rank,id,importance\n";
                for (std::size_t i = 0; i < ranking.size(); ++i)
                    csv += std::to_string(i + 1) + "," + ranking[i].id + "," + io::format_double(ranking[i].importance) + "\n";
                io::write_file_atomic(out / "ranking.csv", csv);
                io::write_file_atomic(out / "ranking.json", to_json(ranking).dump(2) + "\n");
                const auto mv = top_k(ranking, k.resolve(ranking.size()), model_path);
                io::write_file_atomic(out / "topk.json", json{{"k", mv.k}, {"ids", mv.members}}.dump(2) + "\n");
                outputs = {{"ranking", (out / "ranking.csv").string()}, {"topk", (out / "topk.json").string()}};
            } else if (!campaign_dir.empty()) {
                const Campaign c = load_campaign(campaign_dir);
                std::vector<MembershipVector> members;
                std::size_t n_features = 0;
                for (const auto& r : c.runs)
                    if (!r.failed) {
                        members.push_back(r.selected);
                        n_features = std::max(n_features, r.n_features);
                    }
                if (members.empty()) throw TrainingError("all bootstrap runs failed");
                const SFSVector sfs = aggregate_sfs(members);
                std::string sfs_csv = "id,count\n";
                for (const auto& [id, n] : sfs.counts) sfs_csv += id + "," + std::to_string(n) + "\n";
                std::string ct_csv = "slot,count\n";
                for (const auto& [slot, n] : counting_vector(sfs)) ct_csv += slot.str() + "," + std::to_string(n) + "\n";
                std::vector<std::set<std::string>> params;
                for (const auto& m : members) params.push_back(parameters_of(m.members));
                std::string part_csv = "parameter,ratio\n";
                for (const auto& [p, v] : participation_ratio(params, members.size()))
                    part_csv += p + "," + io::format_double(v) + "\n";
                const auto final_sel = select_final(sfs, k.resolve(n_features));
                io::write_file_atomic(out / "sfs.csv", sfs_csv);
                io::write_file_atomic(out / "sfs.json", to_json(sfs).dump(2) + "\n");
                io::write_file_atomic(out / "counting.csv", ct_csv);
                io::write_file_atomic(out / "participation.csv", part_csv);
                io::write_file_atomic(out / "final_selection.json",
                                      json{{"k", k.resolve(n_features)}, {"ids", final_sel}}.dump(2) + "\n");
                outputs = {{"sfs", (out / "sfs.csv").string()}, {"counting", (out / "counting.csv").string()},
                           {"participation", (out / "participation.csv").string()}};
            } else {
                throw ArgumentError("rank needs --model or --campaign");
            }
            write_run_manifest(out, rank, seed, {{"model", model_path}, {"campaign", campaign_dir}}, outputs, started);
        } else if (boot->parsed()) {
            Dataset ds_train, ds_test;
            if (!bundle.empty()) {
                if (train_parts.empty() || test_parts.empty())
                    throw ArgumentError("--bundle needs --train-parts and --test-parts");
                const Dataset ds = load_bundle(bundle, workers);
                std::tie(ds_train, ds_test) = partition_split(ds, parse_id_set(train_parts), parse_id_set(test_parts));
            } else if (!train_bundle.empty() && !test_bundle.empty()) {
                ds_train = load_bundle(train_bundle, workers);
                ds_test = load_bundle(test_bundle, workers);
            } else {
                throw ArgumentError("bootstrap needs --bundle with partitions, or --train-bundle and --test-bundle");
            }
            BootstrapConfig cfg;
            cfg.n_runs = n_runs;
            cfg.subsample_fraction = fraction;
            cfg.with_replacement = !without_replacement;
            cfg.forest = boot_flags.params(seed);
            cfg.scales = grid_or_default(windows, ds_train);
            cfg.class_weights = parse_double_list(cw_list, "class weight");
            cfg.run_k = KRule::parse(run_k);
            cfg.final_k = KRule::parse(final_k);
            cfg.alphas = parse_double_list(alphas_text, "alpha");
            cfg.master_seed = seed;
            const auto outcome = run_bootstrap(ds_train, ds_test, cfg, workers);
            write_campaign(out, cfg, outcome);
            json outputs{{"runs", (out / "runs.jsonl").string()}, {"summary", (out / "summary.json").string()}};
            if (ex_ante) {
                ForestParams params = cfg.forest;
                params.class_weight_positive = cfg.class_weights.front();
                json result = json::object();
                const auto selected = ex_ante_evaluate(ds_train, ds_test, outcome.summary.final_selection, cfg.scales,
                                                       params, cfg.alphas, workers);
                const auto all_ids = featurize_dataset(ds_train, cfg.scales, workers).ids();
                const auto full = ex_ante_evaluate(ds_train, ds_test, all_ids, cfg.scales, params, cfg.alphas, workers);
                result["selected_features"] = outcome.summary.final_selection;
                result["selected"] = to_json(selected);
                result["all_features"] = to_json(full);
                io::write_file_atomic(out / "ex_ante.json", result.dump(2) + "\n");
                outputs["ex_ante"] = (out / "ex_ante.json").string();
                std::cout << "ex-ante TSS selected=" << io::format_double(selected.tss)
                          << " all=" << io::format_double(full.tss) << "\n";
            }
            std::cout << "bootstrap: " << outcome.runs.size() << " runs (" << outcome.summary.n_failed << " failed), final "
                      << outcome.summary.final_selection.size() << " features\n";
            write_run_manifest(out, boot, seed,
                               {{"bundle", bundle}, {"train_bundle", train_bundle}, {"test_bundle", test_bundle}},
                               outputs, started);
        } else if (report->parsed()) {
            const Campaign c = load_campaign(campaign_dir);
            const auto summary = summarize_runs(c.runs, c.config);
            io::write_file_atomic(out / "errorbars.csv", errorbars_csv(summary));
            io::write_file_atomic(out / "participation.csv", participation_csv(summary));
            io::write_file_atomic(out / "skill_tables.csv", skill_tables_csv(c.runs, c.config));
            write_run_manifest(out, report, seed, {{"campaign", campaign_dir}},
                               {{"errorbars", (out / "errorbars.csv").string()},
                                {"participation", (out / "participation.csv").string()},
                                {"skill_tables", (out / "skill_tables.csv").string()}},
                               started);
        } else if (synth->parsed()) {
            spec.seed = seed;
            write_dataset(make_planted_dataset(spec), out);
            std::cout << "wrote " << spec.n_instances << " synthetic instances to " << out.string() << "\n";
            write_run_manifest(out, synth, seed, json::object(), {{"manifest", (out / "manifest.json").string()}}, started);
        }
    } catch (const IoError& e) {
        return report_error(to_string(e.kind()), e.what(), exit_code_for(e.kind()), e.path());
    } catch (const Error& e) {
        return report_error(to_string(e.kind()), e.what(), exit_code_for(e.kind()));
    } catch (const nlohmann::json::exception& e) {
        return report_error("validation", std::string("malformed JSON input: ") + e.what(), kData);
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), kInternal);
    }
    return kOk;
}
