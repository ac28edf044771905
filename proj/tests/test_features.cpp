#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace slimtsf;
using Catch::Approx;

namespace {

std::vector<std::string> names(std::size_t p) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < p; ++i) out.push_back("p" + std::to_string(i));
    return out;
}

TimeSeriesInstance random_instance(testing::Gen& g, std::string id, std::size_t p, std::size_t t) {
    std::vector<double> v(p * t);
    for (auto& x : v) x = g.real(-5.0, 5.0);
    return testing::make_instance(std::move(id), names(p), t, std::move(v), BinaryLabel::NonFlaring);
}

// Naive sums in long double: a different formulation from the library's
// centred two-pass computation.
IntervalStats oracle_stats(const std::vector<double>& x, std::size_t start, std::size_t end) {
    const long double n = static_cast<long double>(end - start);
    long double sx = 0, sxx = 0, st = 0, stt = 0, sxt = 0;
    for (std::size_t i = start; i < end; ++i) {
        const long double v = x[i], t = static_cast<long double>(i - start);
        sx += v;
        sxx += v * v;
        st += t;
        stt += t * t;
        sxt += v * t;
    }
    const long double mean = sx / n;
    const long double var = (sxx - n * mean * mean) / (n - 1);
    const long double slope = (n * sxt - st * sx) / (n * stt - st * st);
    return {static_cast<double>(mean), static_cast<double>(std::sqrt(std::max(var, 0.0L))), static_cast<double>(slope)};
}

} // namespace

TEST_CASE("generate_intervals examples") {
    auto one = generate_intervals(10, {10, 1});
    REQUIRE(one.size() == 1);
    CHECK(one[0].start == 0);
    CHECK(one[0].end == 10);

    auto nine = generate_intervals(60, {12, 6});
    REQUIRE(nine.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(nine[i].start == 6 * i);
        CHECK(nine[i].end == 6 * i + 12);
    }
    CHECK_THROWS_AS(generate_intervals(5, {6, 1}), ArgumentError);
    CHECK_THROWS_AS(generate_intervals(10, {1, 1}), ArgumentError);
    CHECK_THROWS_AS(generate_intervals(10, {4, 0}), ArgumentError);
}

TEST_CASE("interval count property") {
    testing::Gen g(5);
    for (int i = 0; i < 10000; ++i) {
        const std::size_t t = g.size(2, 500);
        const std::size_t w = g.size(2, t);
        const std::size_t s = g.size(1, t);
        const auto iv = generate_intervals(t, {w, s});
        REQUIRE(iv.size() == (t - w) / s + 1);
        for (std::size_t k = 0; k < iv.size(); ++k) {
            REQUIRE(iv[k].start == k * s);
            REQUIRE(iv[k].end == iv[k].start + w);
            REQUIRE(iv[k].end <= t);
        }
    }
}

TEST_CASE("interval_stats examples") {
    const std::vector<double> flat{2, 2, 2, 2};
    auto s = interval_stats(flat, {0, 4});
    CHECK(s.mean == 2.0);
    CHECK(s.std == 0.0);
    CHECK(s.slope == 0.0);

    const std::vector<double> ramp{0, 1, 2, 3};
    s = interval_stats(ramp, {0, 4});
    CHECK(s.mean == 1.5);
    CHECK(s.slope == 1.0);
    CHECK(s.std == Approx(std::sqrt(5.0 / 3.0)).margin(1e-15));
    CHECK(s.std == Approx(1.290994).margin(5e-7));

    const std::vector<double> two{3, 1};
    s = interval_stats(two, {0, 2});
    CHECK(s.mean == 2.0);
    CHECK(s.slope == -2.0);
    CHECK(s.std == Approx(1.414214).margin(5e-7));

    CHECK_THROWS_AS(interval_stats(two, {0, 1}), ArgumentError);
    CHECK_THROWS_AS(interval_stats(two, {0, 3}), ArgumentError);
}

TEST_CASE("interval_stats shift and scale properties") {
    testing::Gen g(8);
    for (int i = 0; i < 500; ++i) {
        const std::size_t n = g.size(2, 40);
        std::vector<double> x(n);
        for (auto& v : x) v = g.real(-10.0, 10.0);
        const double c = g.real(-100.0, 100.0), lambda = g.real(-4.0, 4.0);
        std::vector<double> shifted(x), scaled(x);
        for (auto& v : shifted) v += c;
        for (auto& v : scaled) v *= lambda;
        const auto base = interval_stats(x, {0, n});
        const auto sh = interval_stats(shifted, {0, n});
        const auto sc = interval_stats(scaled, {0, n});
        REQUIRE(std::abs(sh.mean - (base.mean + c)) <= 1e-12 * std::max(1.0, std::abs(c)));
        REQUIRE(std::abs(sh.std - base.std) <= 1e-10);
        REQUIRE(std::abs(sh.slope - base.slope) <= 1e-10);
        REQUIRE(std::abs(sc.mean - lambda * base.mean) <= 1e-10);
        REQUIRE(std::abs(sc.std - std::abs(lambda) * base.std) <= 1e-10);
        REQUIRE(std::abs(sc.slope - lambda * base.slope) <= 1e-10);
    }
}

TEST_CASE("pool_stats examples") {
    const std::vector<IntervalStats> single{{1.0, 2.0, 3.0}};
    const auto one = pool_stats(single);
    for (auto stat : kStatistics)
        for (auto pool : kPools) CHECK(one[pooled_index(stat, pool)] == single[0].get(stat));

    const std::vector<IntervalStats> three{{1, 0, 0}, {3, 0, 0}, {5, 0, 0}};
    const auto p = pool_stats(three);
    CHECK(p[pooled_index(Statistic::Mean, Pool::Max)] == 5.0);
    CHECK(p[pooled_index(Statistic::Mean, Pool::Min)] == 1.0);
    CHECK(p[pooled_index(Statistic::Mean, Pool::Mean)] == 3.0);

    CHECK_THROWS_AS(pool_stats(std::vector<IntervalStats>{}), ArgumentError);
}

TEST_CASE("sine fixture matches an independent recomputation") {
    std::vector<double> sine(60);
    for (std::size_t t = 0; t < 60; ++t) sine[t] = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 17.0) + 0.01 * t;
    const auto iv = generate_intervals(60, {12, 6});
    REQUIRE(iv.size() == 9);
    std::vector<IntervalStats> stats;
    for (const auto& i : iv) {
        stats.push_back(interval_stats(sine, i));
        const auto o = oracle_stats(sine, i.start, i.end);
        CHECK(stats.back().mean == Approx(o.mean).margin(1e-12));
        CHECK(stats.back().std == Approx(o.std).margin(1e-12));
        CHECK(stats.back().slope == Approx(o.slope).margin(1e-12));
    }
    const auto pooled = pool_stats(stats);
    for (auto stat : kStatistics) {
        double hi = -1e300, lo = 1e300, sum = 0;
        for (const auto& s : stats) {
            hi = std::max(hi, s.get(stat));
            lo = std::min(lo, s.get(stat));
            sum += s.get(stat);
        }
        CHECK(pooled[pooled_index(stat, Pool::Max)] == hi);
        CHECK(pooled[pooled_index(stat, Pool::Min)] == lo);
        CHECK(pooled[pooled_index(stat, Pool::Mean)] == Approx(sum / 9.0).margin(1e-12));
    }
}

TEST_CASE("pooling bounds hold on random series") {
    testing::Gen g(17);
    for (int i = 0; i < 300; ++i) {
        const std::size_t t = g.size(4, 80);
        const std::size_t w = g.size(2, t);
        const std::size_t s = g.size(1, w);
        std::vector<double> x(t);
        for (auto& v : x) v = g.real(-1e3, 1e3) * (g.coin(0.1) ? 1e-9 : 1.0);
        std::vector<IntervalStats> stats;
        for (const auto& iv : generate_intervals(t, {w, s})) stats.push_back(interval_stats(x, iv));
        const auto p = pool_stats(stats);
        for (auto stat : kStatistics) {
            REQUIRE(p[pooled_index(stat, Pool::Min)] <= p[pooled_index(stat, Pool::Mean)]);
            REQUIRE(p[pooled_index(stat, Pool::Mean)] <= p[pooled_index(stat, Pool::Max)]);
        }
    }
}

TEST_CASE("feature counts follow the per-scale formula") {
    testing::Gen g(3);
    const ScaleGrid one{{12, 6}};
    CHECK(featurize_instance(random_instance(g, "a", 2, 60), one).values.size() == 72);
    CHECK(feature_count(24, 60, one) == 864);
    CHECK(featurize_instance(random_instance(g, "b", 24, 60), one).values.size() == 864);
    CHECK(feature_count(24, 60, {{12, 6}, {20, 10}}) == 1440);

    const auto tiny = random_instance(g, "c", 1, 4);
    const auto fv = featurize_instance(tiny, {{4, 1}});
    REQUIRE(fv.values.size() == 12);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t pool = 0; pool < 3; ++pool) CHECK(fv.values[3 + 3 * k + pool] == fv.values[k]);

    CHECK_THROWS_AS(featurize_instance(tiny, {{5, 1}}), ArgumentError);
}

TEST_CASE("every feature value is reproducible from its descriptor") {
    testing::Gen g(21);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t p = g.size(1, 4), t = g.size(6, 50);
        const auto inst = random_instance(g, "x", p, t);
        ScaleGrid grid;
        const std::size_t n_scales = g.size(1, 3);
        while (grid.size() < n_scales) {
            WindowConfig c{g.size(2, t), g.size(1, t)};
            if (std::find(grid.begin(), grid.end(), c) == grid.end()) grid.push_back(c);
        }
        const auto fv = featurize_instance(inst, grid);
        REQUIRE(fv.values.size() == fv.descriptors.size());
        std::set<std::string> ids;
        for (std::size_t j = 0; j < fv.values.size(); ++j) {
            const auto& d = fv.descriptors[j];
            REQUIRE(ids.insert(d.canonical_id()).second);
            const auto pi = static_cast<std::size_t>(
                std::find(inst.parameter_names.begin(), inst.parameter_names.end(), d.parameter_name) -
                inst.parameter_names.begin());
            const auto series = inst.series(pi);
            const auto intervals = generate_intervals(t, d.scale);
            double expected = 0.0;
            if (d.kind == FeatureKind::Interval) {
                REQUIRE(d.interval_index.has_value());
                REQUIRE_FALSE(d.pool.has_value());
                expected = interval_stats(series, intervals.at(*d.interval_index)).get(d.statistic);
            } else {
                REQUIRE(d.pool.has_value());
                REQUIRE_FALSE(d.interval_index.has_value());
                std::vector<IntervalStats> all;
                for (const auto& iv : intervals) all.push_back(interval_stats(series, iv));
                expected = pool_stats(all)[pooled_index(d.statistic, *d.pool)];
            }
            REQUIRE(fv.values[j] == expected);
            const auto back = FeatureDescriptor::parse(d.canonical_id());
            REQUIRE(back.canonical_id() == d.canonical_id());
        }
    }
}

TEST_CASE("canonical id format") {
    FeatureDescriptor d;
    d.parameter_name = "USFLUX";
    d.scale = {12, 6};
    d.interval_index = 3;
    d.statistic = Statistic::Slope;
    CHECK(d.canonical_id() == "USFLUX|w12s6|int3|slope");
    d.kind = FeatureKind::Pooled;
    d.interval_index.reset();
    d.pool = Pool::Min;
    d.statistic = Statistic::Std;
    CHECK(d.canonical_id() == "USFLUX|w12s6|poolmin|std");
    CHECK_THROWS_AS(FeatureDescriptor::parse("USFLUX|w12|int3|slope"), ValidationError);
    CHECK_THROWS_AS(FeatureDescriptor::parse("USFLUX|w12s6|int3"), ValidationError);
}

TEST_CASE("scale grid parsing") {
    const auto g = parse_scale_grid("12:6,20:10");
    REQUIRE(g.size() == 2);
    CHECK(g[1] == WindowConfig{20, 10});
    CHECK(format_scale_grid(g) == "12:6,20:10");
    CHECK_THROWS_AS(parse_scale_grid("0:6"), ArgumentError);
    CHECK_THROWS_AS(parse_scale_grid("12"), ArgumentError);
    CHECK_THROWS_AS(parse_scale_grid("12:6,12:6"), ArgumentError);
    CHECK_THROWS_AS(parse_scale_grid(""), ArgumentError);
    const auto d = default_scale_grid(60);
    REQUIRE(d.size() == 3);
    CHECK(d[0] == WindowConfig{12, 6});
    CHECK(d[1] == WindowConfig{20, 10});
    CHECK(d[2] == WindowConfig{30, 15});
}

TEST_CASE("featurize_dataset shapes and errors") {
    testing::Gen g(4);
    std::vector<TimeSeriesInstance> same;
    const auto proto = random_instance(g, "a", 2, 60);
    for (const char* id : {"a", "b", "c"}) {
        auto copy = proto;
        copy.instance_id = id;
        same.push_back(copy);
    }
    const auto fm3 = featurize_dataset(Dataset(same), {{12, 6}});
    REQUIRE(fm3.rows() == 3);
    for (std::size_t j = 0; j < fm3.cols(); ++j) {
        CHECK(fm3.at(0, j) == fm3.at(1, j));
        CHECK(fm3.at(0, j) == fm3.at(2, j));
    }

    std::vector<TimeSeriesInstance> ten;
    for (int i = 0; i < 10; ++i) ten.push_back(random_instance(g, "i" + std::to_string(i), 2, 60));
    const Dataset ds(ten);
    const auto fm = featurize_dataset(ds, {{12, 6}}, 4);
    CHECK(fm.rows() == 10);
    CHECK(fm.cols() == 72);
    CHECK(fm.values == featurize_dataset(ds, {{12, 6}}, 1).values);

    auto mixed = ten;
    mixed[3] = random_instance(g, "i3", 2, 50);
    CHECK_THROWS_AS(featurize_dataset(Dataset(mixed), {{12, 6}}), ValidationError);

    auto holes = ten;
    holes[2].values[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(featurize_dataset(Dataset(holes), {{12, 6}}), ValidationError);
}

TEST_CASE("select_columns") {
    testing::Gen g(6);
    std::vector<TimeSeriesInstance> v;
    for (int i = 0; i < 10; ++i) v.push_back(random_instance(g, "i" + std::to_string(i), 24, 60));
    const auto fm = featurize_dataset(Dataset(v), {{12, 6}});
    REQUIRE(fm.cols() == 864);
    const auto ids = fm.ids();
    const std::set<std::string> all(ids.begin(), ids.end());
    const auto same = select_columns(fm, all);
    CHECK(same.values == fm.values);
    CHECK(same.ids() == ids);

    std::set<std::string> nine;
    for (std::size_t j = 0; j < ids.size() && nine.size() < 9; j += 97) nine.insert(ids[j]);
    const auto sub = select_columns(fm, nine);
    CHECK(sub.rows() == 10);
    CHECK(sub.cols() == 9);

    CHECK_THROWS_AS(select_columns(fm, {}), ArgumentError);
    CHECK_THROWS_AS(select_columns(fm, {"nope|w12s6|int0|mean"}), ArgumentError);
}

TEST_CASE("feature matrix survives a save/load round trip bit-exactly") {
    testing::Gen g(10);
    std::vector<TimeSeriesInstance> v;
    for (int i = 0; i < 6; ++i) {
        auto inst = random_instance(g, "i" + std::to_string(i), 3, 30);
        inst.label = i % 2 ? BinaryLabel::Flaring : BinaryLabel::NonFlaring;
        v.push_back(inst);
    }
    const auto fm = featurize_dataset(Dataset(v), {{10, 5}, {6, 3}});
    testing::TempDir dir;
    save_feature_matrix(fm, dir.path());
    const auto back = load_feature_matrix(dir.path());
    CHECK(back.ids() == fm.ids());
    CHECK(back.instance_ids == fm.instance_ids);
    CHECK(back.labels == fm.labels);
    REQUIRE(back.values.size() == fm.values.size());
    for (std::size_t i = 0; i < fm.values.size(); ++i) REQUIRE(back.values[i] == fm.values[i]);
}
