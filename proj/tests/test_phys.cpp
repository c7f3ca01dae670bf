#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "bb/phys.hpp"

using namespace bb;

TEST_CASE("max_range closed form") {
    PhysicalConfig cfg;  // P=1, N=1, beta=1, alpha=4
    CHECK(max_range(cfg) == doctest::Approx(1.0).epsilon(1e-12));
    cfg.power = 16.0;
    CHECK(max_range(cfg) == doctest::Approx(2.0).epsilon(1e-12));
    cfg.power = 1.0;
    cfg.noise = 2.0;
    cfg.beta = 2.0;
    CHECK(max_range(cfg) == doctest::Approx(std::pow(0.25, 0.25)).epsilon(1e-12));
}

TEST_CASE("config validation") {
    PhysicalConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.eps_c = 0.2;  // weak connectivity requires eps_c == eps_s
    CHECK_THROWS_AS(cfg.validate(), InputError);
    CHECK_NOTHROW(cfg.validate(true));
    cfg = PhysicalConfig{};
    cfg.beta = 0.5;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = PhysicalConfig{};
    cfg.alpha = 2.0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("sinr closed form") {
    PhysicalConfig cfg;
    // receiver at origin; sender at distance 0.5; one interferer at distance 0.8
    Network net = build_comm_graph({{1, {0.0, 0.0}}, {2, {0.5, 0.0}}, {3, {0.0, 0.8}}}, 12,
                                   cfg);
    double sig = std::pow(0.5, -4.0);
    double intf = std::pow(0.8, -4.0);
    double expect = sig / (1.0 + intf);
    CHECK(sinr(2, 1, {2, 3}, net, cfg) == doctest::Approx(expect).epsilon(1e-12));
    // alone, no interference term
    CHECK(sinr(2, 1, {2}, net, cfg) == doctest::Approx(sig).epsilon(1e-12));
}

TEST_CASE("weak sensitivity needs both conditions") {
    PhysicalConfig cfg;  // r = 1, eps_s = 0.1 -> reception range 0.9
    Network net = build_comm_graph({{1, {0.0, 0.0}}, {2, {0.95, 0.0}}, {3, {5.0, 5.0}}},
                                   12, cfg);
    // SINR alone is fine (0.95 < 1 = r) but the distance margin fails.
    CHECK(sinr(2, 1, {2}, net, cfg) >= cfg.beta);
    CHECK_FALSE(receives(2, 1, {2}, net, cfg));
    Network net2 = build_comm_graph({{1, {0.0, 0.0}}, {2, {0.5, 0.0}}, {3, {0.0, 0.5}}},
                                    12, cfg);
    CHECK(receives(2, 1, {2}, net2, cfg));
    // heavy interference kills it at the same distance
    CHECK_FALSE(receives(2, 1, {2, 3}, net2, cfg));
}

TEST_CASE("comm graph edges use the connectivity margin") {
    PhysicalConfig cfg;  // reach = 0.9
    Network net = build_comm_graph(
        {{1, {0.0, 0.0}}, {2, {0.89, 0.0}}, {3, {0.0, 0.91}}, {4, {10.0, 10.0}}}, 16, cfg);
    CHECK(net.edge(1, 2));
    CHECK_FALSE(net.edge(1, 3));
    CHECK_FALSE(net.edge(1, 4));
    CHECK(net.max_degree == 1);
}

TEST_CASE("grid boxes are half open") {
    double side = 0.636;  // arbitrary
    auto [ax, ay] = box_of({0.0, 0.0}, side);
    CHECK(ax == 0);
    CHECK(ay == 0);
    auto [bx, by] = box_of({side, side}, side);
    CHECK(bx == 1);
    CHECK(by == 1);
    auto [cx, cy] = box_of({-1e-9, 0.0}, side);
    CHECK(cx == -1);
    CHECK(cy == 0);
}

TEST_CASE("box side matches the pivotal-grid derivation") {
    PhysicalConfig cfg;  // r = 1, eps_c = 0.1
    Network net = build_comm_graph({{1, {0.0, 0.0}}, {2, {0.5, 0.0}}}, 8, cfg);
    CHECK(net.box_side == doctest::Approx(0.9 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("bad placements are rejected") {
    PhysicalConfig cfg;
    CHECK_THROWS_AS(build_comm_graph({{1, {0, 0}}, {1, {1, 0}}}, 8, cfg), InputError);
    CHECK_THROWS_AS(build_comm_graph({{0, {0, 0}}}, 8, cfg), InputError);
    CHECK_THROWS_AS(build_comm_graph({{9, {0, 0}}}, 8, cfg), InputError);
    CHECK_THROWS_AS(build_comm_graph({{1, {0, 0}}, {2, {0, 0}}}, 8, cfg), InputError);
}

TEST_CASE("placement files parse names and comments") {
    std::istringstream in("# comment\n1 0.0 0.0\n2 1.5 2.5\n");
    auto pl = load_placements(in);
    REQUIRE(pl.size() == 2);
    CHECK(pl[1].first == 2);
    CHECK(pl[1].second.x == doctest::Approx(1.5));
}
