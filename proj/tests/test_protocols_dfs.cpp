#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "bb/harness.hpp"
#include "bb/protocols.hpp"

using namespace bb;

namespace {

Network make(const char* topo, int n, std::uint64_t seed) {
    Scenario sc;
    sc.topology = topo;
    sc.n = n;
    return generate(sc, seed);
}

}  // namespace

TEST_CASE("family helpers clamp widths and share cache instances") {
    ProtocolConfig pc;
    const auto& a = light_ssf(64, pc);
    CHECK(a.x == 8);
    const auto& tiny = light_ssf(4, pc);  // x_light > N clamps to N
    CHECK(tiny.x == 4);
    CHECK(pc.x_heavy(1024) == 16);  // log2^3 capped
    CHECK(pc.x_heavy(4) == 4);
    CHECK(lun_y(100, pc) == 99);
    CHECK(lun_y(1, pc) == 1);
    const auto& sel = lun_selector(64, 10, pc);
    CHECK(sel.x == 10);
    CHECK(sel.y == 9);
}

TEST_CASE("round formulas") {
    ProtocolConfig pc;
    int lg = name_bits_of(100);  // 7
    CHECK(lg == 7);
    CHECK(esun_rounds(100, pc) == std::uint64_t(lg) * 16 * lg);
    std::uint64_t lh = heavy_ssf(100, pc).length();
    CHECK(mis_rounds(100, 8, pc) == 4 * std::uint64_t(pc.c_phases) * lg * 2 * lh);
}

TEST_CASE("dfs on a path completes and builds a parent tree") {
    Network net = make("path", 8, 1);
    ProtocolConfig pc;
    auto res = wireless_dfs(net, pc, 1, 42, 50000000ULL);
    REQUIRE(res.completed);
    for (int i = 0; i < net.n(); ++i) {
        CHECK(res.states[i].status == DfsNodeState::Status::Black);
        CHECK(res.awake[i]);
    }
    // Parent pointers must walk back to the source over comm edges.
    for (int i = 0; i < net.n(); ++i) {
        Name v = net.name_at(i);
        if (v == 1) {
            CHECK_FALSE(res.states[i].parent.has_value());
            continue;
        }
        REQUIRE(res.states[i].parent.has_value());
        Name p = *res.states[i].parent;
        CHECK(net.edge(v, p));
        int hops = 0;
        Name cur = v;
        while (cur != 1 && hops <= net.n()) {
            auto pp = res.states[net.index_of(cur)].parent;
            REQUIRE(pp.has_value());
            cur = *pp;
            ++hops;
        }
        CHECK(cur == 1);
    }
}

TEST_CASE("dfs explores exactly the nodes it views") {
    Network net = make("star", 9, 3);  // complete graph, hub 1
    ProtocolConfig pc;
    auto res = wireless_dfs(net, pc, 1, 7, 50000000ULL);
    REQUIRE(res.completed);
    // The hub learns every leaf; all of them end up in some viewed set.
    std::set<Name> viewed;
    for (const auto& st : res.states)
        for (Name u : st.viewed_set) viewed.insert(u);
    for (int i = 0; i < net.n(); ++i)
        if (net.name_at(i) != 1) CHECK(viewed.count(net.name_at(i)));
}

TEST_CASE("degree estimates land in the whp bracket") {
    ProtocolConfig pc;
    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL, 14ULL}) {
        Network net = make("star", 17, seed);  // hub degree 16
        auto res = wireless_dfs(net, pc, 1, seed, 50000000ULL);
        REQUIRE(res.completed);
        auto est = res.states[net.index_of(1)].estimate;
        REQUIRE(est.has_value());
        CHECK(*est >= 16);
        CHECK(*est <= 256);
    }
}

TEST_CASE("unknown source is rejected") {
    Network net = make("path", 4, 1);
    ProtocolConfig pc;
    CHECK_THROWS_AS(wireless_dfs(net, pc, 99, 1, 1000), InputError);
}

TEST_CASE("a tight round limit leaves the run incomplete") {
    Network net = make("path", 8, 1);
    ProtocolConfig pc;
    auto res = wireless_dfs(net, pc, 1, 42, 500);
    CHECK_FALSE(res.completed);
    CHECK(res.summary.hit_limit);
}

TEST_CASE("dfs runs are reproducible for a fixed seed") {
    Network net = make("uniform_square", 15, 2);
    ProtocolConfig pc;
    auto a = wireless_dfs(net, pc, net.name_at(0), 9, 50000000ULL);
    auto b = wireless_dfs(net, pc, net.name_at(0), 9, 50000000ULL);
    CHECK(a.summary.rounds == b.summary.rounds);
    CHECK(a.summary.transmissions == b.summary.transmissions);
    CHECK(a.completed == b.completed);
    for (int i = 0; i < net.n(); ++i)
        CHECK(a.states[i].viewed_set == b.states[i].viewed_set);
}
