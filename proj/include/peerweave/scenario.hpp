#pragma once

#include <map>
#include <string>

#include "peerweave/engine.hpp"
#include "peerweave/model.hpp"

namespace peerweave {

// A self-contained experiment: topology, simulation knobs, and the per-peer
// probability assignment. `reference` carries externally reported values a
// run can be compared against; it is data, never consulted by the engine.
struct Scenario {
    std::string name;
    Topology topology;
    SimConfig sim;
    ProbAssignment probs;
    std::map<std::string, double> reference;
};

json sim_config_to_json(const SimConfig& config);
SimConfig sim_config_from_json(const json& j);

json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const json& j);

// Probability document: either {"per_peer": {id: p, ...}} or
// {"per_path": {"prob": q, "depth": n}} dividing a path-level target evenly
// across n layers for every peer in the topology.
ProbAssignment probs_from_json(const json& j, const Topology& topology);

// Byte-stable CSV row formatting for metrics. Floats use six decimals, the
// digest prints as 16 hex digits.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& scenario_name, const SimConfig& config,
                            const Metrics& metrics);

}  // namespace peerweave
