#include <doctest.h>

#include "p2pflow/netmodel.hpp"
#include "test_util.hpp"

using namespace p2pflow;
using namespace testutil;

TEST_CASE("bundled 33-bus file parses with the documented loads") {
    const GridModel g = parse_grid_file(data_path("ieee33.json"));
    CHECK(g.buses.size() == 33);
    CHECK(g.lines.size() == 32);
    CHECK(g.slack_id == 1);
    const Bus& b7 = g.bus(7);
    for (int ph = 0; ph < 3; ++ph) {
        CHECK(b7.load[ph].p == doctest::Approx(10.0));
        CHECK(b7.load[ph].q == doctest::Approx(5.0));
    }
    // slack carries no load
    for (int ph = 0; ph < 3; ++ph) {
        CHECK(g.bus(1).load[ph].p == 0.0);
        CHECK(g.bus(1).load[ph].q == 0.0);
    }
}

TEST_CASE("CSV pair parses to the same grid") {
    const GridModel a = parse_grid_file(data_path("ieee33.json"));
    GridModel b = parse_grid_csv_files(data_path("ieee33_buses.csv"),
                                       data_path("ieee33_lines.csv"));
    b.name = a.name; // CSV carries no name
    CHECK(grids_equal(a, b));
}

TEST_CASE("two-bus minimal grid") {
    const GridModel g = parse_grid(R"({
        "slack": 1,
        "buses": [{"id": 1, "p_kw": 0, "q_kvar": 0}, {"id": 2, "p_kw": 10, "q_kvar": 5}],
        "lines": [{"from": 1, "to": 2, "r_ohm": 0.01, "x_ohm": 0.02}]
    })");
    CHECK(g.buses.size() == 2);
    CHECK(g.lines.size() == 1);
    CHECK(g.slack_id == 1);
}

TEST_CASE("parse errors are distinct and named") {
    const std::string dup = R"({"slack":1,"buses":[{"id":5},{"id":5}],"lines":[{"from":5,"to":5,"r_ohm":1,"x_ohm":1}]})";
    CHECK_THROWS_WITH_AS(parse_grid(dup), doctest::Contains("duplicate bus id 5"), Error);

    const std::string dangling = R"({"slack":1,"buses":[{"id":1},{"id":2}],"lines":[{"from":1,"to":3,"r_ohm":1,"x_ohm":1}]})";
    CHECK_THROWS_WITH_AS(parse_grid(dangling), doctest::Contains("unknown bus 3"), Error);

    const std::string cyclic = R"({"slack":1,
        "buses":[{"id":1},{"id":2},{"id":3}],
        "lines":[{"from":1,"to":2,"r_ohm":1,"x_ohm":1},{"from":2,"to":3,"r_ohm":1,"x_ohm":1},{"from":3,"to":1,"r_ohm":1,"x_ohm":1}]})";
    CHECK_THROWS_WITH_AS(parse_grid(cyclic), doctest::Contains("non-radial"), Error);

    const std::string noslack = R"({"slack":9,"buses":[{"id":1},{"id":2}],"lines":[{"from":1,"to":2,"r_ohm":1,"x_ohm":1}]})";
    CHECK_THROWS_WITH_AS(parse_grid(noslack), doctest::Contains("missing slack"), Error);

    const std::string disconnected = R"({"slack":1,
        "buses":[{"id":1},{"id":2},{"id":3}],
        "lines":[{"from":1,"to":2,"r_ohm":1,"x_ohm":1},{"from":1,"to":2,"r_ohm":2,"x_ohm":1}]})";
    CHECK_THROWS_AS(parse_grid(disconnected), Error);
}

TEST_CASE("serialize/parse round-trip is field-exact") {
    GridModel g = parse_grid_file(data_path("ieee33.json"));
    CHECK(grids_equal(parse_grid(serialize_grid(g)), g));

    // also for per-phase loads and per-unit form
    g.buses[4].load[1].p *= 1.25;
    g.buses[4].load[2].q *= 0.5;
    CHECK(grids_equal(parse_grid(serialize_grid(g)), g));
    const GridModel pu = per_unit(g, 100.0, 0.4);
    CHECK(grids_equal(parse_grid(serialize_grid(pu)), pu));
}

TEST_CASE("per-unit conversion") {
    const GridModel g = parse_grid_file(data_path("ieee33.json"));
    SUBCASE("Z_base at 0.4 kV / 100 kVA is 1.6 ohm") {
        CHECK(Bases{100.0, 0.4}.z_ohm() == doctest::Approx(1.6).epsilon(1e-14));
        const GridModel pu = per_unit(g, 100.0, 0.4);
        CHECK(pu.lines[0].r == doctest::Approx(g.lines[0].r / 1.6).epsilon(1e-14));
    }
    SUBCASE("10 kW load at 100 kVA becomes 0.1 pu") {
        const GridModel pu = per_unit(g, 100.0, 0.4);
        CHECK(pu.bus(7).load[0].p == doctest::Approx(0.1).epsilon(1e-14));
    }
    SUBCASE("non-positive base rejected") {
        CHECK_THROWS_AS(per_unit(g, 0.0, 0.4), Error);
        CHECK_THROWS_AS(per_unit(g, 100.0, -1.0), Error);
    }
    SUBCASE("double conversion rejected") {
        const GridModel pu = per_unit(g, 100.0, 0.4);
        CHECK_THROWS_WITH_AS(per_unit(pu, 100.0, 0.4), doctest::Contains("already in per-unit"),
                             Error);
    }
    SUBCASE("inverse conversion recovers physical values to 1e-12 relative") {
        const GridModel back = to_physical(per_unit(g, 100.0, 0.4));
        for (size_t i = 0; i < g.buses.size(); ++i)
            for (int ph = 0; ph < 3; ++ph) {
                CHECK(back.buses[i].load[ph].p ==
                      doctest::Approx(g.buses[i].load[ph].p).epsilon(1e-12));
                CHECK(back.buses[i].load[ph].q ==
                      doctest::Approx(g.buses[i].load[ph].q).epsilon(1e-12));
            }
        for (size_t i = 0; i < g.lines.size(); ++i) {
            CHECK(back.lines[i].r == doctest::Approx(g.lines[i].r).epsilon(1e-12));
            CHECK(back.lines[i].x == doctest::Approx(g.lines[i].x).epsilon(1e-12));
        }
    }
}

TEST_CASE("phase load scaling") {
    const GridModel g = parse_grid_file(data_path("ieee33.json"));
    SUBCASE("factors scale both P and Q of the matching phase") {
        const GridModel s = scale_phase_loads(g, PhaseScaling{{1.0, 1.2, 0.8}});
        CHECK(s.bus(7).load[1].p == doctest::Approx(12.0));
        CHECK(s.bus(7).load[1].q == doctest::Approx(6.0));
        CHECK(s.bus(7).load[0].p == doctest::Approx(10.0));
        CHECK(s.bus(7).load[2].p == doctest::Approx(8.0));
    }
    SUBCASE("identity factors leave the grid unchanged") {
        CHECK(grids_equal(scale_phase_loads(g, PhaseScaling{{1.0, 1.0, 1.0}}), g));
    }
    SUBCASE("negative factor rejected") {
        CHECK_THROWS_AS(scale_phase_loads(g, PhaseScaling{{-1.0, 1.0, 1.0}}), Error);
    }
    SUBCASE("scaling by f then 1/f recovers loads to 1e-12 relative") {
        const GridModel fwd = scale_phase_loads(g, PhaseScaling{{1.3, 0.7, 2.1}});
        const GridModel back = scale_phase_loads(fwd, PhaseScaling{{1 / 1.3, 1 / 0.7, 1 / 2.1}});
        for (size_t i = 0; i < g.buses.size(); ++i)
            for (int ph = 0; ph < 3; ++ph) {
                CHECK(back.buses[i].load[ph].p ==
                      doctest::Approx(g.buses[i].load[ph].p).epsilon(1e-12));
                CHECK(back.buses[i].load[ph].q ==
                      doctest::Approx(g.buses[i].load[ph].q).epsilon(1e-12));
            }
    }
}

TEST_CASE("slack with load is rejected") {
    const std::string bad = R"({"slack":1,
        "buses":[{"id":1,"p_kw":1},{"id":2}],
        "lines":[{"from":1,"to":2,"r_ohm":1,"x_ohm":1}]})";
    CHECK_THROWS_WITH_AS(parse_grid(bad), doctest::Contains("zero load"), Error);
}
