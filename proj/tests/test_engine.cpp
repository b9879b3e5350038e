#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "peerweave/analytics.hpp"
#include "peerweave/engine.hpp"
#include "peerweave/topology.hpp"

using namespace peerweave;

TEST_CASE("failure draw boundary and frequency behavior") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        CHECK(failure_draw(rng, 1.0, 1000) == DrawResult::Up);
        CHECK(failure_draw(rng, 0.0, 1000) == DrawResult::Hang);
    }
    int hangs = 0;
    const int trials = 1'000'000;
    for (int i = 0; i < trials; ++i) {
        if (failure_draw(rng, 0.7, 9223372036854775807ull) == DrawResult::Hang) {
            ++hangs;
        }
    }
    double rate = static_cast<double>(hangs) / trials;
    CHECK(rate == doctest::Approx(0.3).epsilon(0.01));

    CHECK_THROWS_AS(failure_draw(rng, 1.5, 1000), DomainError);
    CHECK_THROWS_AS(failure_draw(rng, 0.5, 1), ConfigError);
}

TEST_CASE("reliability EMA updates") {
    CHECK(update_reliability(0.5, ProbeOutcome::Success, 0.1) == doctest::Approx(0.55));
    CHECK(update_reliability(0.5, ProbeOutcome::Timeout, 0.1) == doctest::Approx(0.45));
    double e = 0.5;
    for (int i = 0; i < 10; ++i) {
        e = update_reliability(e, ProbeOutcome::Success, 0.1);
    }
    // closed form: 1 - 0.5 * 0.9^10
    CHECK(e == doctest::Approx(1.0 - 0.5 * std::pow(0.9, 10)).epsilon(1e-12));

    ReliabilityEstimates est;
    CHECK(est.get("s", "t") == doctest::Approx(0.5));
    est.record("s", "t", ProbeOutcome::Success);
    CHECK(est.get("s", "t") == doctest::Approx(0.55));
    CHECK(est.get("s", "other") == doctest::Approx(0.5));
    est.reset();
    CHECK(est.get("s", "t") == doctest::Approx(0.5));
}

TEST_CASE("double-send dispatch picks best plus probationary") {
    SimConfig config;
    config.double_sending = true;
    ReliabilityEstimates est;
    for (int i = 0; i < 30; ++i) {
        est.record("s", "A", ProbeOutcome::Success);
        est.record("s", "B", ProbeOutcome::Timeout);
    }
    CHECK(est.get("s", "A") > 0.9);
    CHECK(est.get("s", "B") < 0.2);

    auto both = dispatch_with_double_send("s", {"A", "B"}, est, config);
    CHECK(both == std::vector<PeerId>{"A", "B"});

    // all candidates established: single best target. After 60 successes B's
    // estimate (1 - (1 - 0.5*0.9^30) * 0.9^60) overtakes A's (1 - 0.5*0.9^30).
    for (int i = 0; i < 60; ++i) {
        est.record("s", "B", ProbeOutcome::Success);
    }
    CHECK(est.get("s", "B") > est.get("s", "A"));
    auto single = dispatch_with_double_send("s", {"A", "B"}, est, config);
    CHECK(single == std::vector<PeerId>{"B"});

    config.double_sending = false;
    auto plain = dispatch_with_double_send("s", {"B", "A"}, est, config);
    CHECK(plain == std::vector<PeerId>{"B"});

    CHECK_THROWS_AS(dispatch_with_double_send("s", {}, est, config), ConfigError);
}

TEST_CASE("reliable chain completes in the sum of processing times") {
    Topology t = build_separate_paths(1, 3, 1.0);
    SimConfig config;
    IdGenerator gen = IdGenerator::sequential(0);
    Task task = new_task("", gen);
    TaskResult r = run_task(t, config, probs_from_topology(t), task);
    CHECK(r.outcome == TaskOutcome::Success);
    CHECK(r.completed_at == doctest::Approx(3.0));
    CHECK(r.return_path == std::vector<PeerId>{"p1_l1", "p1_l2", "p1_l3"});
    CHECK(task.trace == r.return_path);
}

TEST_CASE("all entry peers down yields no-entry-peer after both timeouts") {
    Topology t = build_separate_paths(2, 2, 0.0);
    SimConfig config;
    IdGenerator gen = IdGenerator::sequential(0);
    Task task = new_task("", gen);
    TaskResult r = run_task(t, config, probs_from_topology(t), task);
    CHECK(r.outcome == TaskOutcome::Failure);
    CHECK(r.reason == "no-entry-peer");
    CHECK(r.return_path.empty());
    // both layer-1 hangs cost t_max^1 = 3s each, waited sequentially
    CHECK(r.completed_at == doctest::Approx(6.0));
    CHECK(task.tried == std::set<PeerId>{"p1_l1", "p2_l1"});
}

TEST_CASE("empirical success rate tracks the union probability") {
    Topology t = build_separate_paths(2, 2, 0.5);
    SimConfig config;
    config.runs = 10000;
    config.seed = 17;
    Metrics m = run_scenario(t, config, probs_from_topology(t));
    // 1 - (1 - 0.25)^2 = 0.4375
    CHECK(m.success_rate() == doctest::Approx(0.4375).epsilon(0.05));

    Topology grid = make_full_connection(t, {2});
    Metrics mg = run_scenario(grid, config, probs_from_topology(grid));
    double expected = union_success_probability(enumerate_working_paths(grid),
                                                probs_from_topology(grid));
    CHECK(mg.success_rate() == doctest::Approx(expected).epsilon(0.05));
    CHECK(mg.success_rate() > m.success_rate());
}

TEST_CASE("same seed reproduces metrics, different seed diverges") {
    Topology t = make_full_connection(build_separate_paths(3, 3, 0.6), {2, 3});
    SimConfig config;
    config.runs = 500;
    config.seed = 99;
    Metrics a = run_scenario(t, config, probs_from_topology(t));
    Metrics b = run_scenario(t, config, probs_from_topology(t));
    CHECK(a.digest == b.digest);
    CHECK(a.counter_success == b.counter_success);
    CHECK(a.task_times == b.task_times);

    config.seed = 100;
    Metrics c = run_scenario(t, config, probs_from_topology(t));
    CHECK(c.digest != a.digest);

    config.selection_policy = SelectionPolicy::UniformRandom;
    Metrics d1 = run_scenario(t, config, probs_from_topology(t));
    Metrics d2 = run_scenario(t, config, probs_from_topology(t));
    CHECK(d1.digest == d2.digest);
}

TEST_CASE("successful return paths are valid topology walks") {
    Topology t = make_full_connection(build_separate_paths(3, 4, 0.6), {2, 4});
    SimConfig config;
    config.seed = 5;
    Simulator sim(t, config, probs_from_topology(t));
    int successes = 0;
    for (int run = 0; run < 300; ++run) {
        IdGenerator gen = IdGenerator::sequential(static_cast<std::uint32_t>(run));
        Task task = new_task("", gen);
        TaskResult r = sim.run_task(task, static_cast<std::uint64_t>(run));
        CHECK(result_path_valid(t, r));
        if (r.outcome == TaskOutcome::Success) {
            ++successes;
            // no peer both signed and reported failed
            for (const auto& p : r.return_path) {
                CHECK(task.tried.count(p) == 0);
            }
        }
    }
    CHECK(successes > 0);
}

TEST_CASE("cache layer acknowledgment contract") {
    Topology t = build_separate_paths(2, 3, 1.0);
    t.layer_timeouts = {{1, 2.0}, {2, 3.0}, {3, 5.0}};
    CHECK_THROWS_AS(cache_layer_ack(t), NoCacheConfiguredError);

    t.cache_layer = 1;
    for (auto& p : t.peers) {
        if (p.layer == 1) {
            p.role = PeerRole::Cache;
        }
    }
    CacheAck ack = cache_layer_ack(t);
    CHECK(ack.ack_wait == doctest::Approx(2.0));
    CHECK(ack.fanout == 2);

    Topology t2 = t;
    t2.cache_layer = 2;
    for (auto& p : t2.peers) {
        p.role = p.layer == 2 ? PeerRole::Cache : PeerRole::Worker;
    }
    CHECK(cache_layer_ack(t2).ack_wait == doctest::Approx(5.0));
}

TEST_CASE("terminal re-issues when the cache never acknowledges") {
    Topology t = build_separate_paths(2, 2, 0.0);
    t.cache_layer = 1;
    for (auto& p : t.peers) {
        if (p.layer == 1) {
            p.role = PeerRole::Cache;
        }
    }
    SimConfig config;
    config.t_require_max = 10.0;
    config.max_attempts = 3;
    IdGenerator gen = IdGenerator::sequential(0);
    Task task = new_task("", gen);
    TaskResult r = run_task(t, config, probs_from_topology(t), task);
    CHECK(r.outcome == TaskOutcome::Failure);
    CHECK(task.attempt == 2);
    // two re-issues at t_require_max; the final attempt addresses both cache
    // peers in parallel, so it costs a single layer-1 timeout
    CHECK(r.completed_at == doctest::Approx(2 * 10.0 + 3.0));
}

TEST_CASE("double sending dispatches cache pairs and dedupes by task id") {
    // cache at layer 1 with reliable peers: terminal still addresses two
    Topology t = build_separate_paths(2, 2, 1.0);
    t.cache_layer = 1;
    for (auto& p : t.peers) {
        if (p.layer == 1) {
            p.role = PeerRole::Cache;
        }
    }
    SimConfig config;
    IdGenerator gen = IdGenerator::sequential(0);
    Task task = new_task("", gen);
    TaskResult r = run_task(t, config, probs_from_topology(t), task);
    CHECK(r.outcome == TaskOutcome::Success);
    // exactly one result with this task id survives
    CHECK(r.task_id.value == "r0-0");
    CHECK(r.return_path.size() == 2);
}

TEST_CASE("double sending cuts time without changing outcomes") {
    Topology t = make_full_connection(build_separate_paths(4, 4, 0.5), {2, 3, 4});
    SimConfig config;
    config.runs = 2000;
    config.seed = 13;
    Metrics single = run_scenario(t, config, probs_from_topology(t));
    config.double_sending = true;
    Metrics doubled = run_scenario(t, config, probs_from_topology(t));
    CHECK(doubled.success_rate() == doctest::Approx(single.success_rate()).epsilon(0.05));
    CHECK(doubled.mean_task_time() < single.mean_task_time());
}
