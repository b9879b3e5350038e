#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "peerweave/topology.hpp"
#include "peerweave/transport.hpp"

using namespace peerweave;

namespace {

Topology fast_rig(int paths, int depth, double p) {
    // live-mode topologies run on the wall clock, so keep sleeps short
    return build_separate_paths(paths, depth, p, 0.01);
}

}  // namespace

TEST_CASE("wire codec round trips every message kind") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        IdGenerator gen = IdGenerator::random_ids(rng());
        Task task = new_task("payload-" + std::to_string(trial), gen);
        task.trace = {"a", "b"};
        task.tried = {"x", "y"};
        task.attempt = static_cast<std::uint32_t>(trial % 4);

        WireMessage fwd;
        fwd.kind = WireMessage::Kind::TaskForward;
        fwd.task_id = task.id;
        fwd.sender = "a";
        fwd.task = task;
        CHECK(decode(encode(fwd)) == fwd);

        WireMessage res;
        res.kind = WireMessage::Kind::ResultReturn;
        res.task_id = task.id;
        res.sender = "b";
        TaskResult result;
        result.task_id = task.id;
        result.outcome = TaskOutcome::Failure;
        result.reason = "all-paths-exhausted";
        res.result = result;
        res.tried = {"x"};
        CHECK(decode(encode(res)) == res);
    }

    WireMessage ack;
    ack.kind = WireMessage::Kind::Ack;
    ack.task_id = {"t1"};
    ack.sender = "cacheA";
    CHECK(decode(encode(ack)) == ack);

    WireMessage err;
    err.kind = WireMessage::Kind::ErrorReport;
    err.sender = "b";
    err.reason = "expected task_forward";
    CHECK(decode(encode(err)) == err);
}

TEST_CASE("codec rejects malformed frames") {
    WireMessage ack;
    ack.kind = WireMessage::Kind::Ack;
    ack.task_id = {"t"};
    ack.sender = "s";
    std::string frame = encode(ack);

    CHECK_THROWS_AS(decode(frame.substr(0, frame.size() / 2)), CodecError);
    CHECK_THROWS_AS(decode("not json at all\n"), CodecError);
    CHECK_THROWS_AS(decode("{\"kind\":\"warp\",\"task_id\":\"t\",\"sender\":\"s\","
                           "\"body\":{}}\n"),
                    CodecError);
    // unknown top-level field
    CHECK_THROWS_AS(decode("{\"kind\":\"ack\",\"task_id\":\"t\",\"sender\":\"s\","
                           "\"body\":{},\"extra\":1}\n"),
                    CodecError);
    // task_forward without a task body
    CHECK_THROWS_AS(decode("{\"kind\":\"task_forward\",\"task_id\":\"t\","
                           "\"sender\":\"s\",\"body\":{}}\n"),
                    CodecError);
}

TEST_CASE("peer config json round trip is strict") {
    PeerConfig c;
    c.id = "p1_l1";
    c.layer = 1;
    c.p = 0.75;
    c.processing_time_s = 0.01;
    c.t_max_s = 0.05;
    c.targets = {{"p1_l2", "127.0.0.1:18301"}};
    json j = peer_config_to_json(c);
    PeerConfig back = peer_config_from_json(j);
    CHECK(back.id == c.id);
    CHECK(back.targets == c.targets);
    j["registry"] = "nope";
    CHECK_THROWS_AS(peer_config_from_json(j), ConfigError);
}

TEST_CASE("peers only know their own targets") {
    Topology t = make_full_connection(fast_rig(2, 2, 1.0), {2});
    SimConfig config;
    LiveCluster cluster(t, probs_from_topology(t), config, 18310);
    for (const auto& c : cluster.configs()) {
        if (c.layer == 1) {
            CHECK(c.targets.size() == 2);
        } else {
            CHECK(c.targets.empty());
        }
        CHECK(c.id.find("l" + std::to_string(c.layer)) != std::string::npos);
    }
}

TEST_CASE("live cluster matches the simulator on a reliable rig") {
    Topology t = fast_rig(2, 3, 1.0);
    SimConfig config;
    config.seed = 4;
    LiveCluster cluster(t, probs_from_topology(t), config, 18320);
    Simulator sim(t, config, probs_from_topology(t));
    for (int run = 0; run < 10; ++run) {
        TaskResult live = cluster.submit("", static_cast<std::uint64_t>(run));
        IdGenerator gen = IdGenerator::sequential(static_cast<std::uint32_t>(run));
        Task task = new_task("", gen);
        TaskResult simulated = sim.run_task(task, static_cast<std::uint64_t>(run));
        CHECK(live.outcome == simulated.outcome);
        CHECK(live.return_path == simulated.return_path);
        CHECK(live.task_id == simulated.task_id);
    }
}

TEST_CASE("dead entry peers produce no-entry-peer in live mode") {
    Topology t = fast_rig(2, 2, 1.0);
    ProbAssignment probs = probs_from_topology(t);
    probs["p1_l1"] = 0.0;
    probs["p2_l1"] = 0.0;
    SimConfig config;
    LiveCluster cluster(t, probs, config, 18330);
    TaskResult r = cluster.submit("", 0);
    CHECK(r.outcome == TaskOutcome::Failure);
    CHECK(r.reason == "no-entry-peer");
}

TEST_CASE("killing a peer behaves like simulating it at p zero") {
    Topology t = fast_rig(2, 2, 1.0);
    SimConfig config;
    config.seed = 8;
    LiveCluster cluster(t, probs_from_topology(t), config, 18340);
    cluster.stop_peer("p1_l2");

    ProbAssignment degraded = probs_from_topology(t);
    degraded["p1_l2"] = 0.0;
    Simulator sim(t, config, degraded);
    for (int run = 0; run < 5; ++run) {
        TaskResult live = cluster.submit("", static_cast<std::uint64_t>(run));
        IdGenerator gen = IdGenerator::sequential(static_cast<std::uint32_t>(run));
        Task task = new_task("", gen);
        TaskResult simulated = sim.run_task(task, static_cast<std::uint64_t>(run));
        CHECK(live.outcome == simulated.outcome);
        CHECK(live.return_path == simulated.return_path);
    }
}

TEST_CASE("metrics digests are stable for identical live runs") {
    Topology t = fast_rig(2, 2, 1.0);
    SimConfig config;
    config.seed = 21;
    Metrics a = live_run(t, probs_from_topology(t), config, 18350, 5);
    Metrics b = live_run(t, probs_from_topology(t), config, 18360, 5);
    CHECK(a.digest == b.digest);
    CHECK(a.counter_success == 5);
}
