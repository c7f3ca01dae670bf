#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
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

TEST_CASE("mis on a path is a maximal independent set") {
    Network net = make("path", 10, 1);
    ProtocolConfig pc;
    auto res = mis_swd(net, pc, 5);
    CHECK(res.invariants_ok);
    CHECK(res.violations.empty());
    CHECK(oracle_is_mis(net, res.leaders));
    CHECK(std::is_sorted(res.leaders.begin(), res.leaders.end()));
    // Every node ends leader or slave, and slaves point at adjacent leaders.
    std::set<Name> lead(res.leaders.begin(), res.leaders.end());
    for (int i = 0; i < net.n(); ++i) {
        auto& st = res.states[i];
        if (lead.count(net.name_at(i))) {
            CHECK(st.status == MisNodeState::Status::Leader);
        } else {
            REQUIRE(st.status == MisNodeState::Status::Slave);
            REQUIRE(st.master.has_value());
            CHECK(lead.count(*st.master));
            CHECK(net.edge(net.name_at(i), *st.master));
        }
    }
}

TEST_CASE("mis on a clique elects exactly one leader") {
    Network net = make("star", 7, 2);  // complete graph
    ProtocolConfig pc;
    auto res = mis_swd(net, pc, 3);
    CHECK(res.invariants_ok);
    CHECK(res.leaders.size() == 1);
    CHECK(oracle_is_mis(net, res.leaders));
}

TEST_CASE("mis is reproducible and seed sensitive") {
    Network net = make("uniform_square", 25, 4);
    ProtocolConfig pc;
    auto a = mis_swd(net, pc, 11);
    auto b = mis_swd(net, pc, 11);
    CHECK(a.leaders == b.leaders);
    CHECK(a.summary.transmissions == b.summary.transmissions);
    CHECK(oracle_is_mis(net, a.leaders));
}

TEST_CASE("backbone structure on a random placement") {
    Network net = make("uniform_square", 30, 3);
    ProtocolConfig pc;
    auto mis = mis_swd(net, pc, 11);
    REQUIRE(oracle_is_mis(net, mis.leaders));
    auto bb = connect_bb(net, pc, mis, 12);
    auto chk = oracle_backbone(net, bb, pc.backbone_degree_bound, false);
    CHECK(chk.dominating);
    CHECK(chk.connected);
    CHECK(chk.degree_ok);
    CHECK(chk.masters_ok);
    CHECK(chk.ok);
    // Leaders come straight from the MIS; connectors are real nodes adjacent
    // to both endpoints they serve (or to the partner connector on 3-hop
    // links).
    CHECK(bb.leaders == mis.leaders);
    std::set<Name> lead(bb.leaders.begin(), bb.leaders.end());
    for (const auto& c : bb.connectors) {
        CHECK(net.has_name(c.via));
        CHECK_FALSE(lead.count(c.via));
        CHECK(lead.count(c.from));
        bool touches = net.edge(c.via, c.from) || net.edge(c.via, c.to) ||
                       (c.partner >= 0 && net.edge(c.via, c.partner));
        CHECK(touches);
    }
    // Every non-backbone node holds a slot on its master's schedule.
    auto bbn = bb.backbone_nodes();
    std::set<Name> members(bbn.begin(), bbn.end());
    for (int i = 0; i < net.n(); ++i) {
        Name v = net.name_at(i);
        if (members.count(v)) continue;
        CHECK(bb.masters.count(v));
        CHECK(bb.sigma.count(v));
    }
    CHECK(bb.a1 > 0);
    CHECK(bb.a2 > 0);
    CHECK_FALSE(bb.to_json().empty());
}

TEST_CASE("inter-backbone multi-round delivers to backbone neighborhoods") {
    Network net = make("uniform_square", 30, 6);
    ProtocolConfig pc;
    auto mis = mis_swd(net, pc, 21);
    auto bb = connect_bb(net, pc, mis, 22);
    auto heard = run_inter_h(net, pc, bb, bb.backbone_nodes(), 23);
    for (const auto& [v, nbs] : bb.bb_neighbors) {
        auto it = heard.find(v);
        REQUIRE(it != heard.end());
        std::set<Name> got(it->second.begin(), it->second.end());
        for (Name u : nbs) CHECK(got.count(u));
    }
}

TEST_CASE("intra-backbone multi-round delivers every registered slave") {
    Network net = make("uniform_square", 30, 8);
    ProtocolConfig pc;
    auto mis = mis_swd(net, pc, 31);
    auto bb = connect_bb(net, pc, mis, 32);
    auto heard = run_intra_h(net, pc, bb, 33);
    for (const auto& [slave, slot] : bb.sigma) {
        (void)slot;
        Name master = bb.masters.at(slave);
        auto it = heard.find(master);
        REQUIRE(it != heard.end());
        CHECK(std::count(it->second.begin(), it->second.end(), slave) == 1);
    }
}

TEST_CASE("backbone size against the optimum on a tiny network") {
    Network net = make("path", 6, 1);
    ProtocolConfig pc;
    auto mis = mis_swd(net, pc, 41);
    auto bb = connect_bb(net, pc, mis, 42);
    auto chk = oracle_backbone(net, bb, pc.backbone_degree_bound, true);
    CHECK(chk.ok);
    REQUIRE(chk.min_cds.has_value());
    CHECK(*chk.min_cds == 4);  // the four inner path nodes
    CHECK(chk.backbone_size <= 5 * *chk.min_cds);
}
