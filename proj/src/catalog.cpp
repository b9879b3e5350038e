#include "peerweave/catalog.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "peerweave/analytics.hpp"
#include "peerweave/errors.hpp"
#include "peerweave/topology.hpp"

namespace peerweave {

namespace {

SimConfig default_sim() {
    SimConfig sim;
    sim.seed = 42;
    sim.runs = 1000;
    return sim;
}

Scenario from_topology(std::string name, Topology topology) {
    Scenario s;
    s.name = std::move(name);
    s.topology = std::move(topology);
    s.sim = default_sim();
    for (const auto& peer : s.topology.peers) {
        s.probs[peer.id] = peer.success_prob;
    }
    return s;
}

// Grid over basic-path count and fully connected depth: chains of four
// peers at p = 0.7 each, with full connection applied to a layer prefix.
Scenario path_grid_scenario(int basic, const std::string& variant) {
    Topology t = build_separate_paths(basic, 4, 0.7);
    std::set<int> layers;
    if (variant == "layer2full") {
        layers = {2};
    } else if (variant == "layer23full") {
        layers = {2, 3};
    } else if (variant == "layer234full") {
        layers = {2, 3, 4};
    }
    t = make_full_connection(std::move(t), layers);
    return from_topology(std::to_string(basic) + "basic-" + variant, std::move(t));
}

// Two 4-layer paths sharing their last `common` layers. Sharing the tail
// keeps the working-path count at exactly two, so a shared-peer hang takes
// both paths down at once.
Scenario coupling_scenario(int common) {
    const double p = 0.7;
    Topology t;
    auto add_chain = [&](const std::string& prefix) {
        PeerId prev;
        for (int layer = 1; layer <= 4 - common; ++layer) {
            PeerId id = prefix + "_l" + std::to_string(layer);
            t.peers.push_back({id, layer, p, 1.0, PeerRole::Worker});
            if (layer == 1) {
                t.terminal_targets.insert(id);
            } else {
                t.edges.insert({prev, id});
            }
            prev = id;
        }
        return prev;
    };
    PeerId a_tail = add_chain("a");
    PeerId b_tail = add_chain("b");
    PeerId prev;
    for (int layer = 4 - common + 1; layer <= 4; ++layer) {
        PeerId id = "s_l" + std::to_string(layer);
        t.peers.push_back({id, layer, p, 1.0, PeerRole::Worker});
        if (layer == 4 - common + 1) {
            t.edges.insert({a_tail, id});
            t.edges.insert({b_tail, id});
        } else {
            t.edges.insert({prev, id});
        }
        prev = id;
    }
    return from_topology("coupling-" + std::to_string(common) + "common", std::move(t));
}

// Layer-division grid: one basic path with probability 0.5 split across n
// layers, four paths, full connection throughout.
Scenario division_scenario(int n) {
    double per_peer = divide_layer_probability(0.5, n);
    Topology t = build_separate_paths(4, n, per_peer);
    std::set<int> layers;
    for (int layer = 2; layer <= n; ++layer) {
        layers.insert(layer);
    }
    t = make_full_connection(std::move(t), layers);
    return from_topology("division-" + std::to_string(n) + "layer", std::move(t));
}

// Sending pair: 4 basic paths, full connection, p = 0.5 per peer. The
// per-peer reading is the one that reproduces the reported double/single
// time ratio (~0.45); splitting 0.5 across the whole path makes hangs too
// rare for hedging to matter.
Scenario sending_scenario(bool double_sending) {
    Topology t = build_separate_paths(4, 4, 0.5);
    t = make_full_connection(std::move(t), {2, 3, 4});
    Scenario s = from_topology(double_sending ? "double-sending" : "single-sending",
                               std::move(t));
    s.sim.double_sending = double_sending;
    return s;
}

const std::map<std::string, std::map<std::string, double>>& references() {
    // Externally reported figures for the grids whose parameters are known.
    // The coupling grid's success rates are omitted: the experiment's p is
    // unstated, so only the separate-vs-coupled ordering is comparable.
    static const std::map<std::string, std::map<std::string, double>> table = {
        {"2basic-layer2full", {{"reported_success_rate", 0.52}}},
        {"3basic-separate", {{"reported_success_rate", 0.56}}},
        {"3basic-layer2full", {{"reported_success_rate", 0.70}}},
        {"3basic-layer23full", {{"reported_success_rate", 0.83}}},
        {"3basic-layer234full", {{"reported_success_rate", 0.90}}},
        {"4basic-layer2full", {{"reported_success_rate", 0.81}}},
        {"4basic-separate", {{"reported_mean_time_s", 5.70}}},
        {"division-1layer", {{"reported_success_rate", 0.937}}},
        {"division-2layer",
         {{"reported_success_rate", 0.992}, {"reported_mean_time_s", 2.26}}},
        {"division-4layer",
         {{"reported_success_rate", 0.996}, {"reported_mean_time_s", 4.28}}},
        {"division-8layer",
         {{"reported_success_rate", 1.0}, {"reported_mean_time_s", 5.05}}},
        {"coupling-0common", {{"reported_mean_time_s", 3.91}}},
        {"coupling-1common", {{"reported_mean_time_s", 3.93}}},
        {"coupling-2common", {{"reported_mean_time_s", 3.85}}},
        {"coupling-3common", {{"reported_mean_time_s", 3.85}}},
        {"double-sending", {{"reported_mean_time_s", 4.15}}},
        {"single-sending", {{"reported_mean_time_s", 9.24}}},
    };
    return table;
}

const std::vector<std::string>& names() {
    static const std::vector<std::string> list = [] {
        std::vector<std::string> out;
        for (int basic : {2, 3, 4}) {
            for (const char* variant :
                 {"separate", "layer2full", "layer23full", "layer234full"}) {
                out.push_back(std::to_string(basic) + "basic-" + variant);
            }
        }
        for (int common : {0, 1, 2, 3}) {
            out.push_back("coupling-" + std::to_string(common) + "common");
        }
        for (int n : {1, 2, 4, 8}) {
            out.push_back("division-" + std::to_string(n) + "layer");
        }
        out.push_back("double-sending");
        out.push_back("single-sending");
        return out;
    }();
    return list;
}

// True when every consecutive layer pair is completely connected and all
// first-layer peers are terminal targets; then the union probability
// factors per layer.
bool layer_complete(const Topology& t) {
    int n = t.max_layer();
    for (const auto& id : t.peers_in_layer(1)) {
        if (t.terminal_targets.count(id) == 0) {
            return false;
        }
    }
    for (int layer = 2; layer <= n; ++layer) {
        for (const auto& from : t.peers_in_layer(layer - 1)) {
            for (const auto& to : t.peers_in_layer(layer)) {
                if (!t.has_edge(from, to)) {
                    return false;
                }
            }
        }
    }
    return true;
}

double per_layer_product(const Topology& t, const ProbAssignment& probs) {
    double total = 1.0;
    for (int layer = 1; layer <= t.max_layer(); ++layer) {
        double all_down = 1.0;
        for (const auto& id : t.peers_in_layer(layer)) {
            all_down *= 1.0 - probs.at(id);
        }
        total *= 1.0 - all_down;
    }
    return total;
}

void write_lines(const std::filesystem::path& file, const std::vector<std::string>& lines) {
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + file.string());
    }
    for (const auto& line : lines) {
        out << line << "\n";
    }
}

}  // namespace

std::vector<std::string> catalog_names() { return names(); }

bool catalog_has(const std::string& name) {
    for (const auto& n : names()) {
        if (n == name) {
            return true;
        }
    }
    return false;
}

Scenario catalog_scenario(const std::string& name) {
    Scenario s;
    if (name.size() > 6 && name.substr(1, 6) == "basic-") {
        int basic = name[0] - '0';
        std::string variant = name.substr(7);
        if (basic >= 2 && basic <= 4 &&
            (variant == "separate" || variant == "layer2full" ||
             variant == "layer23full" || variant == "layer234full")) {
            s = path_grid_scenario(basic, variant);
        }
    } else if (name.rfind("coupling-", 0) == 0 && name.size() == 16) {
        int common = name[9] - '0';
        if (common >= 0 && common <= 3 && name.substr(10) == "common") {
            s = coupling_scenario(common);
        }
    } else if (name.rfind("division-", 0) == 0) {
        std::string rest = name.substr(9);
        for (int n : {1, 2, 4, 8}) {
            if (rest == std::to_string(n) + "layer") {
                s = division_scenario(n);
            }
        }
    } else if (name == "double-sending") {
        s = sending_scenario(true);
    } else if (name == "single-sending") {
        s = sending_scenario(false);
    }
    if (s.name.empty()) {
        throw ConfigError("unknown catalog scenario \"" + name + "\"");
    }
    auto ref = references().find(s.name);
    if (ref != references().end()) {
        s.reference = ref->second;
    }
    return s;
}

double catalog_analytic(const Scenario& scenario) {
    try {
        PathSet paths = enumerate_working_paths(scenario.topology);
        return union_success_probability(paths, scenario.probs);
    } catch (const SizeLimitError&) {
        if (!layer_complete(scenario.topology)) {
            throw;
        }
        return per_layer_product(scenario.topology, scenario.probs);
    }
}

ReproduceReport run_reproduce(const std::string& out_dir, std::uint64_t seed, int runs) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    ReproduceReport report;

    struct Group {
        std::string file;
        std::vector<std::string> scenarios;
    };
    std::vector<Group> groups = {
        {"path_number.csv", {}},
        {"coupling.csv",
         {"coupling-0common", "coupling-1common", "coupling-2common",
          "coupling-3common"}},
        {"division.csv",
         {"division-1layer", "division-2layer", "division-4layer", "division-8layer"}},
        {"double_sending.csv", {"double-sending", "single-sending"}},
    };
    for (int basic : {2, 3, 4}) {
        for (const char* variant :
             {"separate", "layer2full", "layer23full", "layer234full"}) {
            groups[0].scenarios.push_back(std::to_string(basic) + "basic-" + variant);
        }
    }

    std::vector<std::string> comparison;
    comparison.push_back(
        "scenario,analytic_success,empirical_success,reported_success,"
        "mean_task_time_s,reported_mean_time_s");
    for (const auto& group : groups) {
        std::vector<std::string> lines;
        lines.push_back(metrics_csv_header());
        for (const auto& name : group.scenarios) {
            try {
                Scenario s = catalog_scenario(name);
                s.sim.seed = seed;
                s.sim.runs = runs;
                Metrics m = run_scenario(s.topology, s.sim, s.probs);
                lines.push_back(metrics_csv_row(s.name, s.sim, m));

                double analytic = catalog_analytic(s);
                auto ref_field = [&](const char* key) {
                    auto it = s.reference.find(key);
                    if (it == s.reference.end()) {
                        return std::string();
                    }
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "%.6f", it->second);
                    return std::string(buf);
                };
                char row[512];
                std::snprintf(row, sizeof(row), "%s,%.6f,%.6f,%s,%.6f,%s",
                              s.name.c_str(), analytic, m.success_rate(),
                              ref_field("reported_success_rate").c_str(),
                              m.mean_task_time(),
                              ref_field("reported_mean_time_s").c_str());
                comparison.push_back(row);
            } catch (const Error&) {
                report.failed_scenarios.push_back(name);
            }
        }
        fs::path file = fs::path(out_dir) / group.file;
        write_lines(file, lines);
        report.files_written.push_back(file.string());
    }
    fs::path cmp = fs::path(out_dir) / "comparison.csv";
    write_lines(cmp, comparison);
    report.files_written.push_back(cmp.string());
    return report;
}

}  // namespace peerweave
