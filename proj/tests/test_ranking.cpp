#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace slimtsf;

namespace {

std::vector<std::string> id_pool(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i)
        ids.push_back("p" + std::to_string(i % 5) + "|w12s6|int" + std::to_string(i / 5) + "|mean");
    return ids;
}

std::vector<MembershipVector> random_members(testing::Gen& g, std::size_t n, const std::vector<std::string>& pool) {
    std::vector<MembershipVector> out;
    for (std::size_t e = 0; e < n; ++e) {
        MembershipVector mv;
        mv.experiment_id = "e" + std::to_string(e);
        mv.k = g.size(1, pool.size());
        while (mv.members.size() < mv.k) mv.members.insert(pool[g.size(0, pool.size() - 1)]);
        out.push_back(mv);
    }
    return out;
}

std::map<std::string, std::size_t> tally(const std::vector<MembershipVector>& members) {
    std::map<std::string, std::size_t> out;
    for (const auto& mv : members)
        for (const auto& id : mv.members) out[id] = out[id] + 1;
    return out;
}

} // namespace

TEST_CASE("rank_features orders by importance then id") {
    const auto r = rank_features(std::map<std::string, double>{{"A", 0.5}, {"B", 0.3}, {"C", 0.2}});
    REQUIRE(r.size() == 3);
    CHECK(r[0].id == "A");
    CHECK(r[1].id == "B");
    CHECK(r[2].id == "C");

    const auto tie = rank_features(std::map<std::string, double>{{"B", 0.4}, {"A", 0.4}});
    CHECK(tie[0].id == "A");
    CHECK(tie[1].id == "B");

    const std::vector<std::string> ids{"A", "B"};
    const std::vector<double> bad{0.5, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(rank_features(ids, bad), ValidationError);
}

TEST_CASE("forest importances rank like an independent sort") {
    testing::Gen g(3);
    std::vector<double> v;
    std::vector<BinaryLabel> labels;
    for (int i = 0; i < 150; ++i) {
        const bool pos = g.coin(0.3);
        labels.push_back(pos ? BinaryLabel::Flaring : BinaryLabel::NonFlaring);
        for (int j = 0; j < 10; ++j) v.push_back(g.real(0, 1) + (pos ? 0.1 * j : 0.0));
    }
    const auto fm = testing::make_matrix(150, 10, v, labels);
    ForestParams p;
    p.n_trees = 20;
    const auto m = train_forest(fm, p);
    const auto ranking = rank_features(m.feature_ids, m.importances);

    std::vector<std::size_t> order(m.importances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // Insertion sort as the oracle.
    for (std::size_t i = 1; i < order.size(); ++i)
        for (std::size_t j = i; j > 0; --j) {
            const auto a = order[j - 1], b = order[j];
            const bool swap = m.importances[b] > m.importances[a] ||
                              (m.importances[b] == m.importances[a] && m.feature_ids[b] < m.feature_ids[a]);
            if (!swap) break;
            std::swap(order[j - 1], order[j]);
        }
    REQUIRE(ranking.size() == order.size());
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(ranking[i].id == m.feature_ids[order[i]]);
}

TEST_CASE("ranking is a total order over the ids") {
    testing::Gen g(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto ids = id_pool(g.size(1, 60));
        std::vector<double> imps;
        for (std::size_t i = 0; i < ids.size(); ++i) imps.push_back(static_cast<double>(g.size(0, 4)) / 4.0);
        const auto r = rank_features(ids, imps);
        std::set<std::string> seen;
        for (const auto& f : r) REQUIRE(seen.insert(f.id).second);
        REQUIRE(seen.size() == ids.size());
        for (std::size_t i = 1; i < r.size(); ++i)
            REQUIRE((r[i - 1].importance > r[i].importance ||
                     (r[i - 1].importance == r[i].importance && r[i - 1].id < r[i].id)));
    }
}

TEST_CASE("top_k") {
    FeatureRanking r;
    for (int i = 0; i < 8; ++i) r.push_back({"f" + std::to_string(i), 1.0 - 0.1 * i});
    CHECK(top_k(r, r.size()).members.size() == r.size());
    CHECK(top_k(r, 1).members == std::set<std::string>{"f0"});
    CHECK(top_k(r, 5).members == std::set<std::string>{"f0", "f1", "f2", "f3", "f4"});
    CHECK(top_k(r, 50).members.size() == 8);
    CHECK_THROWS_AS(top_k(r, 0), ArgumentError);
}

TEST_CASE("aggregate_sfs examples") {
    const std::vector<MembershipVector> one{{"e", 2, {"A", "B"}}};
    const auto s1 = aggregate_sfs(one);
    CHECK(s1.counts == std::map<std::string, std::size_t>{{"A", 1}, {"B", 1}});
    const std::vector<MembershipVector> two{{"e1", 2, {"A", "B"}}, {"e2", 2, {"B", "C"}}};
    const auto s2 = aggregate_sfs(two);
    CHECK(s2.counts == std::map<std::string, std::size_t>{{"A", 1}, {"B", 2}, {"C", 1}});
    CHECK(s2.n_experiments == 2);
}

TEST_CASE("aggregate_sfs equals a direct tally and is linear") {
    testing::Gen g(8);
    const auto pool = id_pool(40);
    const auto members = random_members(g, 1000, pool);
    const auto sfs = aggregate_sfs(members);
    CHECK(sfs.counts == tally(members));

    for (int trial = 0; trial < 100; ++trial) {
        auto list = random_members(g, g.size(1, 60), pool);
        const std::size_t cut = g.size(0, list.size());
        const std::vector<MembershipVector> a(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(cut));
        const std::vector<MembershipVector> b(list.begin() + static_cast<std::ptrdiff_t>(cut), list.end());
        const auto whole = aggregate_sfs(list), sa = aggregate_sfs(a), sb = aggregate_sfs(b);
        std::size_t total = 0, members_total = 0;
        for (const auto& [id, c] : whole.counts) {
            const auto ca = sa.counts.count(id) ? sa.counts.at(id) : 0;
            const auto cb = sb.counts.count(id) ? sb.counts.at(id) : 0;
            REQUIRE(c == ca + cb);
            REQUIRE(c <= whole.n_experiments);
            total += c;
        }
        for (const auto& mv : list) members_total += mv.members.size();
        REQUIRE(total == members_total);

        std::shuffle(list.begin(), list.end(), g.engine());
        REQUIRE(aggregate_sfs(list).counts == whole.counts);

        // One more experiment moves each count by at most one.
        auto more = list;
        more.push_back(random_members(g, 1, pool).front());
        const auto grown = aggregate_sfs(more);
        for (const auto& [id, c] : grown.counts) {
            const auto before = whole.counts.count(id) ? whole.counts.at(id) : 0;
            REQUIRE(c - before <= 1);
        }
    }
}

TEST_CASE("log filter") {
    CHECK(log_filter_k(864) == 9);
    CHECK(log_filter_k(2) == 1);
    CHECK(log_filter_k(1) == 1);
    CHECK(log_filter_k(1024) == 10);
    CHECK(log_filter_k(1023) == 9);
    CHECK_THROWS_AS(log_filter_k(0), ArgumentError);
    for (std::size_t n = 2; n < 5000; ++n)
        REQUIRE(log_filter_k(n) == static_cast<std::size_t>(std::floor(std::log2(static_cast<double>(n)))));
}

TEST_CASE("select_final") {
    SFSVector s;
    s.counts = {{"A", 3}, {"B", 1}};
    CHECK(select_final(s, 1) == std::vector<std::string>{"A"});
    s.counts = {{"D", 2}, {"B", 2}, {"C", 2}, {"A", 2}};
    CHECK(select_final(s, 2) == std::vector<std::string>{"A", "B"});
    CHECK(select_final(s, 9).size() == 4);
    CHECK_THROWS_AS(select_final(s, 0), ArgumentError);

    // Planted dominant ids always lead.
    testing::Gen g(4);
    const auto pool = id_pool(30);
    auto members = random_members(g, 50, pool);
    for (auto& mv : members) mv.members.insert({"zz|w12s6|int0|mean", "zz|w12s6|int1|mean"});
    const auto top = select_final(aggregate_sfs(members), 2);
    CHECK(top == std::vector<std::string>{"zz|w12s6|int0|mean", "zz|w12s6|int1|mean"});
}

TEST_CASE("counting vector") {
    SFSVector s;
    s.counts = {{"param1|w12s6|int0|mean", 2}, {"param1|w12s6|int0|slope", 1}, {"param1|w12s6|poolmax|std", 4}};
    const auto ct = counting_vector(s);
    CHECK(ct.at({"param1", {12, 6}, "int0"}) == 3);
    CHECK(ct.at({"param1", {12, 6}, "poolmax"}) == 4);
    CHECK(counting_vector(SFSVector{}).empty());

    SFSVector bad;
    bad.counts = {{"not-an-id", 1}};
    CHECK_THROWS_AS(counting_vector(bad), ValidationError);

    const std::vector<FeatureDescriptor> known{FeatureDescriptor::parse("param1|w12s6|int0|mean")};
    CHECK_THROWS_AS(counting_vector(s, known), ValidationError);
}

TEST_CASE("counting vector matches a brute-force group-by") {
    testing::Gen g(6);
    const auto pool = id_pool(40);
    std::vector<std::string> ids;
    for (const auto& id : pool)
        for (const char* stat : {"mean", "std", "slope"}) ids.push_back(id.substr(0, id.rfind('|') + 1) + stat);
    SFSVector s;
    for (const auto& id : ids)
        if (g.coin(0.6)) s.counts[id] = g.size(1, 9);
    const auto ct = counting_vector(s);
    std::map<std::string, std::size_t> brute;
    for (const auto& [id, c] : s.counts) brute[id.substr(0, id.rfind('|'))] += c;
    REQUIRE(ct.size() == brute.size());
    for (const auto& [slot, c] : ct) CHECK(brute.at(slot.str()) == c);
}

TEST_CASE("participation ratio") {
    std::vector<std::set<std::string>> runs;
    for (int i = 0; i < 100; ++i) runs.push_back(i < 40 ? std::set<std::string>{"A", "B"} : std::set<std::string>{"B"});
    const auto r = participation_ratio(runs, 100);
    CHECK(r.at("A") == 0.40);
    CHECK(r.at("B") == 1.0);
    CHECK(parameters_of(std::vector<std::string>{"X|w2s1|int0|mean", "X|w2s1|int1|std", "Y|w2s1|poolmin|mean"}) ==
          std::set<std::string>{"X", "Y"});
}

TEST_CASE("sfs json round trip") {
    SFSVector s;
    s.counts = {{"a|w2s1|int0|mean", 3}};
    s.n_experiments = 4;
    const auto back = sfs_from_json(to_json(s));
    CHECK(back.counts == s.counts);
    CHECK(back.n_experiments == 4);
}
