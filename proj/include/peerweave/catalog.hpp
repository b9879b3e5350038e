#pragma once

#include <optional>
#include <string>
#include <vector>

#include "peerweave/scenario.hpp"

namespace peerweave {

// Built-in experiment grid. Every entry regenerates its topology and
// probabilities deterministically from the name alone.
std::vector<std::string> catalog_names();
bool catalog_has(const std::string& name);
Scenario catalog_scenario(const std::string& name); // throws ConfigError

// Exact success probability for a catalog scenario. Falls back to the
// closed-form per-layer product when the peer count exceeds the state
// enumeration limit (only possible for layer-complete topologies).
double catalog_analytic(const Scenario& scenario);

struct ReproduceReport {
    std::vector<std::string> files_written;
    std::vector<std::string> failed_scenarios;
    bool ok() const { return failed_scenarios.empty(); }
};

// Runs the whole grid and writes per-figure CSVs plus a comparison table
// (analytic, empirical, externally reported where parameters are known)
// into out_dir.
ReproduceReport run_reproduce(const std::string& out_dir, std::uint64_t seed, int runs);

}  // namespace peerweave
