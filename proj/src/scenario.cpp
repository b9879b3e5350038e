#include "peerweave/scenario.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>

#include "peerweave/analytics.hpp"
#include "peerweave/errors.hpp"
#include "peerweave/json_util.hpp"
#include "peerweave/topology.hpp"

namespace peerweave {

using jsonu::check_fields;
using jsonu::get_opt;
using jsonu::get_req;

namespace {

std::string policy_name(SelectionPolicy policy) {
    return policy == SelectionPolicy::ConfigOrder ? "config_order" : "uniform_random";
}

SelectionPolicy policy_from_name(const std::string& name) {
    if (name == "config_order") {
        return SelectionPolicy::ConfigOrder;
    }
    if (name == "uniform_random") {
        return SelectionPolicy::UniformRandom;
    }
    throw ConfigError("unknown selection policy \"" + name + "\"");
}

}  // namespace

json sim_config_to_json(const SimConfig& config) {
    json j{{"seed", config.seed},
           {"runs", config.runs},
           {"draw_range_n", config.draw_range_n},
           {"selection_policy", policy_name(config.selection_policy)},
           {"double_sending", config.double_sending},
           {"double_send_fanout", config.double_send_fanout},
           {"network_delay", config.network_delay},
           {"max_attempts", config.max_attempts}};
    if (std::isfinite(config.t_require_max)) {
        j["terminal_timeout_t_require_max"] = config.t_require_max;
    }
    return j;
}

SimConfig sim_config_from_json(const json& j) {
    check_fields(j,
                 {"seed", "runs", "draw_range_n", "terminal_timeout_t_require_max",
                  "selection_policy", "double_sending", "double_send_fanout",
                  "network_delay", "max_attempts"},
                 "sim config");
    SimConfig c;
    c.seed = get_opt<std::uint64_t>(j, "seed", c.seed, "sim config");
    c.runs = get_opt<int>(j, "runs", c.runs, "sim config");
    if (c.runs < 1) {
        throw ConfigError("sim config: runs must be >= 1");
    }
    c.draw_range_n = get_opt<std::uint64_t>(j, "draw_range_n", c.draw_range_n, "sim config");
    if (c.draw_range_n == 0) {
        throw ConfigError("sim config: draw_range_n must be positive");
    }
    c.t_require_max = get_opt<double>(j, "terminal_timeout_t_require_max",
                                      c.t_require_max, "sim config");
    c.selection_policy = policy_from_name(get_opt<std::string>(
        j, "selection_policy", policy_name(c.selection_policy), "sim config"));
    c.double_sending = get_opt<bool>(j, "double_sending", c.double_sending, "sim config");
    c.double_send_fanout =
        get_opt<int>(j, "double_send_fanout", c.double_send_fanout, "sim config");
    if (c.double_send_fanout < 1) {
        throw ConfigError("sim config: double_send_fanout must be >= 1");
    }
    c.network_delay = get_opt<double>(j, "network_delay", c.network_delay, "sim config");
    if (c.network_delay < 0.0) {
        throw ConfigError("sim config: network_delay must be >= 0");
    }
    c.max_attempts = get_opt<int>(j, "max_attempts", c.max_attempts, "sim config");
    return c;
}

ProbAssignment probs_from_json(const json& j, const Topology& topology) {
    check_fields(j, {"per_peer", "per_path"}, "probability document");
    bool has_per_peer = j.contains("per_peer");
    bool has_per_path = j.contains("per_path");
    if (has_per_peer == has_per_path) {
        throw ConfigError(
            "probability document: exactly one of per_peer / per_path required");
    }
    ProbAssignment probs;
    if (has_per_peer) {
        const json& table = j.at("per_peer");
        jsonu::expect_object(table, "per_peer");
        for (const auto& item : table.items()) {
            if (topology.find_peer(item.key()) == nullptr) {
                throw MissingPeerError("per_peer: unknown peer \"" + item.key() + "\"");
            }
            double p = item.value().get<double>();
            if (p < 0.0 || p > 1.0) {
                throw ConfigError("per_peer: probability outside [0,1] for \"" +
                                  item.key() + "\"");
            }
            probs[item.key()] = p;
        }
        for (const auto& peer : topology.peers) {
            if (probs.find(peer.id) == probs.end()) {
                throw MissingPeerError("per_peer: no probability for \"" + peer.id + "\"");
            }
        }
        return probs;
    }
    const json& spec = j.at("per_path");
    check_fields(spec, {"prob", "depth"}, "per_path");
    double q = get_req<double>(spec, "prob", "per_path");
    int depth = get_req<int>(spec, "depth", "per_path");
    double per_peer = divide_layer_probability(q, depth);
    for (const auto& peer : topology.peers) {
        probs[peer.id] = per_peer;
    }
    return probs;
}

json scenario_to_json(const Scenario& scenario) {
    json j{{"name", scenario.name},
           {"topology", to_json(scenario.topology)},
           {"sim", sim_config_to_json(scenario.sim)},
           {"probs", json{{"per_peer", scenario.probs}}}};
    if (!scenario.reference.empty()) {
        j["reference"] = scenario.reference;
    }
    return j;
}

Scenario scenario_from_json(const json& j) {
    check_fields(j, {"name", "topology", "sim", "probs", "reference"}, "scenario");
    Scenario s;
    s.name = get_req<std::string>(j, "name", "scenario");
    s.topology = load_topology_document(get_req<json>(j, "topology", "scenario"));
    s.sim = j.contains("sim") ? sim_config_from_json(j.at("sim")) : SimConfig{};
    if (j.contains("probs")) {
        s.probs = probs_from_json(j.at("probs"), s.topology);
    } else {
        for (const auto& peer : s.topology.peers) {
            s.probs[peer.id] = peer.success_prob;
        }
    }
    s.reference = get_opt<std::map<std::string, double>>(j, "reference", {}, "scenario");
    return s;
}

std::string metrics_csv_header() {
    return "scenario,runs,seed,counter_success,counter_failure,success_rate,"
           "mean_task_time_s,p95_task_time_s,digest";
}

std::string metrics_csv_row(const std::string& scenario_name, const SimConfig& config,
                            const Metrics& metrics) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%s,%d,%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%.6f,%.6f,%.6f,%016" PRIx64,
                  scenario_name.c_str(), config.runs, config.seed,
                  metrics.counter_success, metrics.counter_failure,
                  metrics.success_rate(), metrics.mean_task_time(),
                  metrics.p95_task_time(), metrics.digest);
    return buf;
}

}  // namespace peerweave
