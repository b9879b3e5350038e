#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "peerweave/analytics.hpp"
#include "peerweave/catalog.hpp"
#include "peerweave/engine.hpp"
#include "peerweave/errors.hpp"
#include "peerweave/scenario.hpp"
#include "peerweave/topology.hpp"
#include "peerweave/transport.hpp"

namespace {

using namespace peerweave;

enum ExitCode {
    kOk = 0,
    kConfig = 2,
    kExplosion = 3,
    kPartialSuite = 4,
    kInfeasibleDelta = 5,
    kLiveLaunch = 6,
};

int log_level() {
    const char* env = std::getenv("PEERWEAVE_LOG");
    if (env == nullptr) {
        return 0;
    }
    std::string v(env);
    if (v == "debug") {
        return 2;
    }
    if (v == "info") {
        return 1;
    }
    return 0;
}

void log_info(const std::string& message) {
    if (log_level() >= 1) {
        std::cerr << "[info] " << message << "\n";
    }
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + out_path);
    }
    out << text;
}

Scenario resolve_scenario(const std::string& file, const std::string& catalog_name) {
    if (!catalog_name.empty()) {
        return catalog_scenario(catalog_name);
    }
    return scenario_from_json(read_json_file(file));
}

int cmd_analyze(const std::string& topology_file, const std::string& probs_file,
                const std::string& out_path, const std::string& format) {
    Topology topology = load_topology_document(read_json_file(topology_file));
    ValidationReport validation = validate_topology(topology);
    if (!validation.ok()) {
        for (const auto& v : validation.violations) {
            std::cerr << "invalid topology: " << v << "\n";
        }
        return kConfig;
    }
    ProbAssignment probs = probs_file.empty()
                               ? probs_from_topology(topology)
                               : probs_from_json(read_json_file(probs_file), topology);

    PathSet paths = enumerate_working_paths(topology);
    PathSet basic = extract_basic_paths(paths);
    int coupled_pairs = 0;
    for (std::size_t i = 0; i < paths.paths.size(); ++i) {
        for (std::size_t j = i + 1; j < paths.paths.size(); ++j) {
            if (classify_paths(paths.paths[i], paths.paths[j]).kind ==
                PathRelation::Coupled) {
                ++coupled_pairs;
            }
        }
    }
    double success = union_success_probability(paths, probs);

    TimingAssignment timing;
    for (int layer = 1; layer <= topology.max_layer(); ++layer) {
        timing.layer_timeouts[layer] = topology.layer_timeout(layer);
    }
    double wait_total = max_wait_total(timing);

    json report{{"paths", paths.paths.size()},
                {"basic_paths", basic.paths.size()},
                {"coupled_pairs", coupled_pairs},
                {"success_probability", success},
                {"max_wait_total_s", wait_total}};
    if (topology.cache_layer) {
        report["terminal_wait_with_cache_s"] =
            terminal_wait_with_cache(timing, *topology.cache_layer);
    }
    json path_list = json::array();
    for (const auto& p : paths.paths) {
        path_list.push_back(p.key());
    }
    report["path_keys"] = path_list;

    if (format == "json") {
        emit(report.dump(2) + "\n", out_path);
    } else {
        std::ostringstream csv;
        csv << "paths,basic_paths,coupled_pairs,success_probability,max_wait_total_s\n";
        char row[256];
        std::snprintf(row, sizeof(row), "%zu,%zu,%d,%.6f,%.6f\n", paths.paths.size(),
                      basic.paths.size(), coupled_pairs, success, wait_total);
        csv << row;
        emit(csv.str(), out_path);
    }
    return kOk;
}

int cmd_simulate(const std::string& scenario_file, const std::string& catalog_name,
                 std::optional<std::uint64_t> seed, std::optional<int> runs,
                 const std::string& out_path) {
    Scenario s = resolve_scenario(scenario_file, catalog_name);
    if (seed) {
        s.sim.seed = *seed;
    }
    if (runs) {
        s.sim.runs = *runs;
    }
    log_info("simulating " + s.name + " for " + std::to_string(s.sim.runs) + " runs");
    Metrics metrics = run_scenario(s.topology, s.sim, s.probs);
    std::string csv =
        metrics_csv_header() + "\n" + metrics_csv_row(s.name, s.sim, metrics) + "\n";
    emit(csv, out_path);
    return kOk;
}

int cmd_reproduce(std::optional<std::uint64_t> seed, std::optional<int> runs,
                  const std::string& out_dir) {
    ReproduceReport report =
        run_reproduce(out_dir.empty() ? "reproduce" : out_dir, seed.value_or(42),
                      runs.value_or(1000));
    for (const auto& f : report.files_written) {
        std::cout << f << "\n";
    }
    if (!report.ok()) {
        for (const auto& name : report.failed_scenarios) {
            std::cerr << "failed scenario: " << name << "\n";
        }
        return kPartialSuite;
    }
    return kOk;
}

int cmd_min_connection(const std::string& topology_file, double delta,
                       const std::string& out_path) {
    Topology topology = load_topology_document(read_json_file(topology_file));
    ProbAssignment probs = probs_from_topology(topology);
    MinConnectionParams params;
    params.delta = delta;
    Topology minimal =
        build_minimum_connection(topology, probs, params, union_success_probability);

    double achieved =
        union_success_probability(enumerate_working_paths(minimal), probs);
    Topology full = make_full_connection(topology, [&] {
        std::set<int> layers;
        for (int layer = 2; layer <= topology.max_layer(); ++layer) {
            layers.insert(layer);
        }
        return layers;
    }());
    std::cerr << "achieved probability " << achieved << " with " << minimal.edges.size()
              << " edges (full connection: " << full.edges.size() << ")\n";
    emit(to_json(minimal).dump(2) + "\n", out_path);
    return kOk;
}

int cmd_live(const std::string& scenario_file, const std::string& catalog_name,
             int port_base, std::optional<std::uint64_t> seed, std::optional<int> runs,
             const std::string& out_path) {
    Scenario s = resolve_scenario(scenario_file, catalog_name);
    if (seed) {
        s.sim.seed = *seed;
    }
    if (runs) {
        s.sim.runs = *runs;
    }
    Metrics metrics;
    try {
        LiveCluster cluster(s.topology, s.probs, s.sim, port_base);
        log_info("live cluster up at ports >= " + std::to_string(port_base));
        metrics = cluster.run_all(s.sim.runs);
    } catch (const TransportError& e) {
        std::cerr << "live launch failed: " << e.what() << "\n";
        return kLiveLaunch;
    }
    std::string csv =
        metrics_csv_header() + "\n" + metrics_csv_row(s.name, s.sim, metrics) + "\n";
    emit(csv, out_path);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"layered peer-to-peer reliability toolkit"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::string out_path;
    std::string format = "csv";
    app.add_option("--seed", seed, "simulation seed")->group("Global");
    app.add_option("--runs", runs, "number of runs")->group("Global");
    app.add_option("--out", out_path, "output path (default: stdout)")->group("Global");
    app.add_option("--format", format, "output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->group("Global");

    auto* analyze = app.add_subcommand("analyze", "paths and probability report");
    std::string topology_file;
    std::string probs_file;
    analyze->add_option("topology", topology_file, "topology JSON file")->required();
    analyze->add_option("--probs", probs_file, "probability JSON file");

    auto* simulate = app.add_subcommand("simulate", "run a scenario");
    std::string scenario_file;
    std::string catalog_name;
    simulate->add_option("scenario_file", scenario_file, "scenario JSON file");
    simulate->add_option("--scenario", catalog_name, "built-in scenario name");

    auto* reproduce = app.add_subcommand("reproduce", "run the full built-in grid");
    std::string suite = "paper";
    reproduce->add_option("--suite", suite, "suite name");

    auto* minconn = app.add_subcommand("min-connection", "synthesize minimum topology");
    std::string minconn_file;
    double delta = 0.0;
    minconn->add_option("topology", minconn_file, "topology JSON file")->required();
    minconn->add_option("--delta", delta, "target success probability")->required();

    auto* live = app.add_subcommand("live", "run over loopback TCP peers");
    std::string live_file;
    std::string live_catalog;
    int port_base = 18200;
    live->add_option("scenario_file", live_file, "scenario JSON file");
    live->add_option("--scenario", live_catalog, "built-in scenario name");
    live->add_option("--ports", port_base, "first loopback port");

    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze) {
            return cmd_analyze(topology_file, probs_file, out_path, format);
        }
        if (*simulate) {
            if (scenario_file.empty() == catalog_name.empty()) {
                std::cerr << "simulate: provide exactly one of a scenario file or "
                             "--scenario\n";
                return kConfig;
            }
            return cmd_simulate(scenario_file, catalog_name, seed, runs, out_path);
        }
        if (*reproduce) {
            return cmd_reproduce(seed, runs, out_path);
        }
        if (*minconn) {
            return cmd_min_connection(minconn_file, delta, out_path);
        }
        if (*live) {
            if (live_file.empty() == live_catalog.empty()) {
                std::cerr << "live: provide exactly one of a scenario file or "
                             "--scenario\n";
                return kConfig;
            }
            return cmd_live(live_file, live_catalog, port_base, seed, runs, out_path);
        }
    } catch (const PathExplosionError& e) {
        std::cerr << e.what() << "\n";
        return kExplosion;
    } catch (const InfeasibleDeltaError& e) {
        std::cerr << e.what() << "\n";
        return kInfeasibleDelta;
    } catch (const TransportError& e) {
        std::cerr << e.what() << "\n";
        return kLiveLaunch;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kConfig;
    }
    return kOk;
}
