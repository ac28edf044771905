#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace slimtsf;
using Catch::Approx;

namespace {

struct Split {
    Dataset train, test;
};

Split planted_split(std::size_t n = 250, std::uint64_t seed = 3) {
    PlantedSignalSpec spec;
    spec.n_instances = n;
    spec.n_parameters = 5;
    spec.seed = seed;
    auto [train, test] = partition_split(make_planted_dataset(spec), {"P1", "P2", "P3", "P4"}, {"P5"});
    return {train, test};
}

BootstrapConfig small_config(std::size_t runs) {
    BootstrapConfig cfg;
    cfg.n_runs = runs;
    cfg.scales = {{12, 6}};
    cfg.forest.n_trees = 25;
    cfg.master_seed = 42;
    return cfg;
}

std::string dump_runs(const std::vector<BootstrapRunResult>& runs) {
    std::string out;
    for (const auto& r : runs) out += to_json(r).dump() + "\n";
    return out;
}

} // namespace

TEST_CASE("score summaries") {
    const std::vector<double> two{0.5, 0.7};
    const auto s = summarize_scores(two);
    CHECK(s.mean == Approx(0.6).margin(1e-15));
    CHECK(s.std == Approx(0.141421).margin(5e-7));
    const std::vector<double> same{0.3, 0.3, 0.3};
    CHECK(summarize_scores(same).std == 0.0);
    const std::vector<double> one{0.25};
    CHECK(summarize_scores(one).mean == 0.25);
    CHECK(summarize_scores(one).std == 0.0);
    CHECK_THROWS_AS(summarize_scores(std::vector<double>{}), TrainingError);
}

TEST_CASE("k rules") {
    CHECK(KRule::parse("log2").resolve(864) == 9);
    CHECK(KRule::parse("5").resolve(864) == 5);
    CHECK(KRule::parse("log2").str() == "log2");
    CHECK_THROWS_AS(KRule::parse("0"), ArgumentError);
    CHECK_THROWS_AS(KRule::parse("ln"), ArgumentError);
}

TEST_CASE("a single run summarizes to itself") {
    const auto split = planted_split(150);
    const auto out = run_bootstrap(split.train, split.test, small_config(1));
    REQUIRE(out.runs.size() == 1);
    const auto& run = out.runs[0];
    REQUIRE_FALSE(run.failed);
    for (const auto& bar : out.summary.error_bars) {
        if (!bar.mean) continue;
        CHECK(*bar.std == 0.0);
        const ScoreSet& set = bar.split == "train" ? run.train : run.test;
        if (bar.metric == "tss") CHECK(*bar.mean == *set.tss);
        if (bar.metric == "hss") CHECK(*bar.mean == *set.hss);
    }
}

TEST_CASE("planted parameter dominates participation") {
    const auto split = planted_split();
    const auto out = run_bootstrap(split.train, split.test, small_config(10), 4);
    const auto& part = out.summary.participation;
    REQUIRE(part.count("param00"));
    CHECK(part.at("param00") >= 0.40);
    for (const auto& [p, r] : part)
        if (p != "param00") CHECK(r < part.at("param00"));
    CHECK(out.summary.final_k == log_filter_k(feature_count(5, 60, {{12, 6}})));
    CHECK(out.summary.final_selection.size() == out.summary.final_k);
}

TEST_CASE("campaigns are deterministic and worker independent") {
    const auto split = planted_split(150);
    auto cfg = small_config(4);
    cfg.class_weights = {1.0, 3.0};
    const auto a = run_bootstrap(split.train, split.test, cfg, 1);
    const auto b = run_bootstrap(split.train, split.test, cfg, 4);
    CHECK(dump_runs(a.runs) == dump_runs(b.runs));
    CHECK(to_json(a.summary).dump() == to_json(b.summary).dump());
    REQUIRE(a.runs.size() == 8);
    CHECK(a.runs[0].seed == a.runs[4].seed);
    CHECK(a.runs[0].seed == derive_seed(cfg.master_seed, 0));
    CHECK(a.runs[0].class_weight == 1.0);
    CHECK(a.runs[4].class_weight == 3.0);
}

TEST_CASE("summary is recomputable from persisted runs and order free") {
    const auto split = planted_split(150);
    auto cfg = small_config(6);
    cfg.alphas = {1.0, 1.5};
    const auto out = run_bootstrap(split.train, split.test, cfg);
    testing::TempDir dir;
    write_campaign(dir.path(), cfg, out);
    const auto campaign = load_campaign(dir.path());
    CHECK(dump_runs(campaign.runs) == dump_runs(out.runs));
    CHECK(to_json(summarize_runs(campaign.runs, campaign.config)).dump() == to_json(out.summary).dump());
    CHECK(io::read_file(dir / "summary.json") == to_json(out.summary).dump(2) + "\n");

    auto shuffled = out.runs;
    testing::Gen g(1);
    for (int i = 0; i < 10; ++i) {
        std::shuffle(shuffled.begin(), shuffled.end(), g.engine());
        REQUIRE(to_json(summarize_runs(shuffled, cfg)).dump() == to_json(out.summary).dump());
    }
}

TEST_CASE("incomplete campaigns are rejected") {
    const auto split = planted_split(100);
    const auto cfg = small_config(2);
    const auto out = run_bootstrap(split.train, split.test, cfg);
    testing::TempDir dir;
    write_campaign(dir.path(), cfg, out);
    std::filesystem::remove(dir / "summary.json");
    try {
        load_campaign(dir.path());
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("summary.json") != std::string::npos);
    }
    write_campaign(dir.path(), cfg, out);
    io::write_file_atomic(dir / "runs.jsonl", to_json(out.runs[0]).dump() + "\n");
    CHECK_THROWS_AS(load_campaign(dir.path()), ValidationError);
}

TEST_CASE("subsamples are legal") {
    testing::Gen g(9);
    std::vector<double> v(40, 0.0);
    std::vector<BinaryLabel> labels(40, BinaryLabel::NonFlaring);
    for (std::size_t i = 0; i < 40; i += 4) labels[i] = BinaryLabel::Flaring;
    const auto fm = testing::make_matrix(40, 1, v, labels);
    for (int trial = 0; trial < 200; ++trial) {
        BootstrapConfig cfg;
        cfg.subsample_fraction = g.real(0.1, 1.0);
        cfg.with_replacement = g.coin();
        const auto d = bootstrap_subsample(fm, cfg, g.engine()());
        for (auto r : d.rows) REQUIRE(r < 40);
        if (!cfg.with_replacement && !d.rows.empty())
            REQUIRE(std::set<std::size_t>(d.rows.begin(), d.rows.end()).size() == d.rows.size());
    }
}

TEST_CASE("single-class subsamples are retried then counted as failed") {
    // One positive among 60: small subsamples usually miss it.
    std::vector<TimeSeriesInstance> v;
    testing::Gen g(2);
    for (int i = 0; i < 60; ++i) {
        std::vector<double> vals(2 * 12);
        for (auto& x : vals) x = g.real(0, 1);
        char id[8];
        std::snprintf(id, sizeof(id), "i%02d", i);
        v.push_back(testing::make_instance(id, {"a", "b"}, 12, vals, i == 0 ? BinaryLabel::Flaring : BinaryLabel::NonFlaring,
                                           i < 50 ? "P1" : "P2"));
    }
    v[55].label = BinaryLabel::Flaring;
    const Dataset ds(v);
    auto [train, test] = partition_split(ds, {"P1"}, {"P2"});
    BootstrapConfig cfg;
    cfg.n_runs = 16;
    cfg.subsample_fraction = 0.2;
    cfg.scales = {{4, 2}};
    cfg.forest.n_trees = 5;
    cfg.forest.min_samples_leaf = 1;
    const auto out = run_bootstrap(train, test, cfg);
    std::size_t failed = 0, resampled = 0;
    for (const auto& r : out.runs) {
        failed += r.failed;
        resampled += r.resampled;
        if (r.failed) CHECK(r.resampled);
    }
    REQUIRE(failed > 0);
    CHECK(resampled >= failed);
    CHECK(out.summary.n_failed == failed);
    for (const auto& bar : out.summary.error_bars) CHECK(bar.excluded >= failed);
    CHECK(errorbars_csv(out.summary).rfind("cw,metric,split,mean,std,n,excluded\n", 0) == 0);

    std::vector<BootstrapRunResult> all_failed = out.runs;
    for (auto& r : all_failed) r.failed = true;
    CHECK_THROWS_AS(summarize_runs(all_failed, cfg), TrainingError);
}

TEST_CASE("ex-ante evaluation") {
    const auto split = planted_split(250);
    const ScaleGrid scales{{12, 6}};
    ForestParams params;
    params.n_trees = 40;
    params.seed = 5;
    const std::vector<double> alphas{1.0};

    const auto all = featurize_dataset(split.train, scales).ids();
    const auto via_all = ex_ante_evaluate(split.train, split.test, all, scales, params, alphas);
    const auto model = train_forest(featurize_dataset(split.train, scales), params);
    std::vector<BinaryLabel> pred;
    const auto test = featurize_dataset(split.test, scales);
    for (const auto& p : predict_dataset(model, test)) pred.push_back(p.label);
    CHECK(via_all.table == contingency(test.labels, pred));

    auto cfg = small_config(10);
    cfg.forest = params;
    const auto out = run_bootstrap(split.train, split.test, cfg, 4);
    const auto reduced = ex_ante_evaluate(split.train, split.test, out.summary.final_selection, scales, params, alphas);
    CHECK(reduced.tss >= 0.9);

    std::vector<std::string> without;
    for (const auto& id : all)
        if (id.rfind("param00|", 0) != 0) without.push_back(id);
    const auto ablated = ex_ante_evaluate(split.train, split.test, without, scales, params, alphas);
    CHECK(ablated.tss < 0.2);

    CHECK_THROWS_AS(ex_ante_evaluate(split.train, split.test, {}, scales, params, alphas), ArgumentError);
}

TEST_CASE("config json round trip") {
    auto cfg = small_config(7);
    cfg.class_weights = {1.0, 2.5};
    cfg.run_k = KRule::parse("4");
    cfg.alphas = {0.5, 1.5};
    cfg.with_replacement = false;
    cfg.subsample_fraction = 0.8;
    const auto back = bootstrap_config_from_json(to_json(cfg));
    CHECK(to_json(back).dump() == to_json(cfg).dump());
}
