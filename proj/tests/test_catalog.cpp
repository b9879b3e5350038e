#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "peerweave/analytics.hpp"
#include "peerweave/catalog.hpp"
#include "peerweave/topology.hpp"

using namespace peerweave;

TEST_CASE("catalog covers the full grid with unique names") {
    auto names = catalog_names();
    CHECK(names.size() == 22);
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
    for (const auto& name : names) {
        CHECK(catalog_has(name));
        Scenario s = catalog_scenario(name);
        CHECK(s.name == name);
        CHECK(validate_topology(s.topology).ok());
        for (const auto& peer : s.topology.peers) {
            CHECK(s.probs.count(peer.id) == 1);
        }
    }
    CHECK_FALSE(catalog_has("coupling-4common"));
    CHECK_THROWS_AS(catalog_scenario("coupling-4common"), ConfigError);
    CHECK_THROWS_AS(catalog_scenario("5basic-separate"), ConfigError);
}

TEST_CASE("scenario generation is deterministic") {
    Scenario a = catalog_scenario("3basic-layer23full");
    Scenario b = catalog_scenario("3basic-layer23full");
    CHECK(a.topology == b.topology);
    CHECK(a.probs == b.probs);
}

TEST_CASE("analytic values for the known grid points") {
    CHECK(catalog_analytic(catalog_scenario("division-1layer")) ==
          doctest::Approx(0.9375).epsilon(1e-12));
    CHECK(catalog_analytic(catalog_scenario("4basic-layer2full")) ==
          doctest::Approx(0.8071).epsilon(1e-3));
    CHECK(catalog_analytic(catalog_scenario("3basic-separate")) ==
          doctest::Approx(0.5612).epsilon(1e-3));
    // 32 peers exceed exact enumeration; the closed form takes over
    CHECK(catalog_analytic(catalog_scenario("division-8layer")) ==
          doctest::Approx(0.99962).epsilon(1e-4));
}

TEST_CASE("coupling scenarios stay two-path and weaken with sharing") {
    double previous = 1.0;
    for (int k = 0; k <= 3; ++k) {
        Scenario s = catalog_scenario("coupling-" + std::to_string(k) + "common");
        PathSet paths = enumerate_working_paths(s.topology);
        CHECK(paths.paths.size() == 2);
        if (k > 0) {
            CHECK(classify_paths(paths.paths[0], paths.paths[1]).common.size() ==
                  static_cast<std::size_t>(k));
        }
        double analytic = catalog_analytic(s);
        CHECK(analytic < previous);
        previous = analytic;
    }
}

TEST_CASE("sending pair differs only in the double-sending flag") {
    Scenario d = catalog_scenario("double-sending");
    Scenario s = catalog_scenario("single-sending");
    CHECK(d.topology == s.topology);
    CHECK(d.probs == s.probs);
    CHECK(d.sim.double_sending);
    CHECK_FALSE(s.sim.double_sending);
}

TEST_CASE("scenario json round trip") {
    Scenario s = catalog_scenario("2basic-layer2full");
    Scenario back = scenario_from_json(scenario_to_json(s));
    CHECK(back.name == s.name);
    CHECK(back.topology == s.topology);
    CHECK(back.probs == s.probs);
    CHECK(back.reference == s.reference);

    json j = scenario_to_json(s);
    j["sim"]["warp_factor"] = 9;
    CHECK_THROWS_AS(scenario_from_json(j), ConfigError);
}

TEST_CASE("sim config json keeps the terminal timeout optional") {
    SimConfig c;
    json j = sim_config_to_json(c);
    CHECK_FALSE(j.contains("terminal_timeout_t_require_max"));
    SimConfig back = sim_config_from_json(j);
    CHECK(std::isinf(back.t_require_max));

    j["terminal_timeout_t_require_max"] = 12.5;
    CHECK(sim_config_from_json(j).t_require_max == doctest::Approx(12.5));
    j["runs"] = 0;
    CHECK_THROWS_AS(sim_config_from_json(j), ConfigError);
}

TEST_CASE("per-path probability documents divide across layers") {
    Topology t = build_separate_paths(2, 4, 1.0);
    json doc = {{"per_path", {{"prob", 0.5}, {"depth", 4}}}};
    ProbAssignment probs = probs_from_json(doc, t);
    CHECK(probs.at("p1_l1") == doctest::Approx(0.840896).epsilon(1e-5));

    json per_peer = {{"per_peer", {{"p1_l1", 0.5}}}};
    CHECK_THROWS_AS(probs_from_json(per_peer, t), MissingPeerError);
    json both = doc;
    both["per_peer"] = json::object();
    CHECK_THROWS_AS(probs_from_json(both, t), ConfigError);
}

TEST_CASE("metrics csv formatting is byte stable") {
    SimConfig config;
    config.seed = 7;
    config.runs = 3;
    Metrics m;
    m.counter_success = 2;
    m.counter_failure = 1;
    m.task_times = {1.0, 2.0, 6.0};
    m.digest = 0xabcdef;
    CHECK(metrics_csv_header() ==
          "scenario,runs,seed,counter_success,counter_failure,success_rate,"
          "mean_task_time_s,p95_task_time_s,digest");
    CHECK(metrics_csv_row("demo", config, m) ==
          "demo,3,7,2,1,0.666667,3.000000,6.000000,0000000000abcdef");
}

TEST_CASE("reproduce writes the figure tables") {
    std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "pw_repro_test";
    std::filesystem::remove_all(dir);
    ReproduceReport report = run_reproduce(dir.string(), 3, 50);
    CHECK(report.ok());
    CHECK(report.files_written.size() == 5);
    std::ifstream cmp(dir / "comparison.csv");
    REQUIRE(cmp.good());
    std::string line;
    int rows = 0;
    while (std::getline(cmp, line)) {
        ++rows;
    }
    CHECK(rows == 23); // header + 22 scenarios
    std::filesystem::remove_all(dir);
}
